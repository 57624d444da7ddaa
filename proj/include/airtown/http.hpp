#pragma once

#include <string>

// Eigen headers must precede httplib.
#include "airtown/service.hpp"

#include <httplib.h>

namespace airtown {

inline api_request to_api_request(const httplib::Request& req) {
  api_request out;
  out.method = req.method;
  out.path = req.path;
  for (const auto& [key, value] : req.params) out.query[key] = value;
  out.body = req.body;
  const auto auth = req.get_header_value("Authorization");
  constexpr std::string_view bearer = "Bearer ";
  if (auth.size() > bearer.size() && auth.compare(0, bearer.size(), bearer) == 0) {
    out.bearer_token = auth.substr(bearer.size());
  }
  return out;
}

/// Binds every service route on `server`. All bodies are JSON.
inline void mount(httplib::Server& server, service& svc) {
  auto handler = [&svc](const httplib::Request& req, httplib::Response& res) {
    const auto out = svc.handle(to_api_request(req));
    res.status = out.status;
    res.set_content(out.body, "application/json");
  };
  for (const char* path : {"/auth/register", "/auth/login", "/recommend", "/ratings",
                           "/sensors/readings", "/pois", "/fl/update", "/fl/round"}) {
    server.Post(path, handler);
  }
  for (const char* path : {"/recommend", "/aqi", "/sensors", "/pois", "/fl/global", "/healthz"}) {
    server.Get(path, handler);
  }
  server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    const nlohmann::json body = {{"error_code", res.status == 404 ? "not_found" : "http_error"},
                                 {"message", "no route for " + req.method + " " + req.path}};
    res.set_content(body.dump(), "application/json");
  });
}

}  // namespace airtown

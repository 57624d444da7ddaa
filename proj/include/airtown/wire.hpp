#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "airtown/aqi_field.hpp"
#include "airtown/cf_model.hpp"
#include "airtown/client_update.hpp"
#include "airtown/error.hpp"
#include "airtown/fed.hpp"
#include "airtown/geo.hpp"
#include "airtown/rerank.hpp"
#include "airtown/timestamp.hpp"

// JSON documents exchanged over the service API and written to the store.
// Field names here are the wire contract.

namespace airtown::wire {

using json = nlohmann::json;

/// Field names allowed in a client update document. Anything else is
/// rejected on parse.
inline constexpr std::string_view client_update_fields[] = {"client_round_token", "base_version",
                                                            "items"};
inline constexpr std::string_view item_delta_fields[] = {"item_id", "delta_q", "delta_b",
                                                         "weight"};

namespace detail {

inline void require_object(const json& j, std::string_view what) {
  if (!j.is_object()) throw error(error_code::parse_error, std::string(what) + " must be an object");
}

template <std::size_t N>
void reject_unknown(const json& j, const std::string_view (&allowed)[N], std::string_view what) {
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) {
      throw error(error_code::parse_error,
                  "unknown field '" + key + "' in " + std::string(what));
    }
  }
}

inline const json& field(const json& j, std::string_view name, std::string_view what) {
  auto it = j.find(std::string(name));
  if (it == j.end()) {
    throw error(error_code::parse_error,
                "missing field '" + std::string(name) + "' in " + std::string(what));
  }
  return *it;
}

inline double number(const json& j, std::string_view name, std::string_view what) {
  const auto& v = field(j, name, what);
  if (!v.is_number()) {
    throw error(error_code::parse_error, "field '" + std::string(name) + "' must be a number");
  }
  const double d = v.get<double>();
  if (!std::isfinite(d)) {
    throw error(error_code::parse_error, "field '" + std::string(name) + "' must be finite");
  }
  return d;
}

inline std::string string(const json& j, std::string_view name, std::string_view what) {
  const auto& v = field(j, name, what);
  if (!v.is_string()) {
    throw error(error_code::parse_error, "field '" + std::string(name) + "' must be a string");
  }
  return v.get<std::string>();
}

inline std::uint64_t unsigned_integer(const json& j, std::string_view name, std::string_view what) {
  const auto& v = field(j, name, what);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw error(error_code::parse_error,
                "field '" + std::string(name) + "' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

inline std::optional<double> optional_number(const json& j, std::string_view name) {
  auto it = j.find(std::string(name));
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) {
    throw error(error_code::parse_error, "field '" + std::string(name) + "' must be a number");
  }
  return it->get<double>();
}

inline std::vector<double> number_array(const json& j, std::string_view name, std::string_view what) {
  const auto& v = field(j, name, what);
  if (!v.is_array()) {
    throw error(error_code::parse_error, "field '" + std::string(name) + "' must be an array");
  }
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) {
    if (!x.is_number()) throw error(error_code::parse_error, "non-numeric entry in '" + std::string(name) + "'");
    out.push_back(x.get<double>());
  }
  return out;
}

}  // namespace detail

// client updates

inline json to_json(const client_update& u) {
  json items = json::array();
  for (const auto& [id, d] : u.items) {
    items.push_back({{"item_id", id}, {"delta_q", d.delta_q}, {"delta_b", d.delta_b}, {"weight", d.weight}});
  }
  json j = {{"base_version", u.base_version}, {"items", std::move(items)}};
  if (!u.client_round_token.empty()) j["client_round_token"] = u.client_round_token;
  return j;
}

inline client_update client_update_from_json(const json& j) {
  constexpr std::string_view what = "client update";
  detail::require_object(j, what);
  detail::reject_unknown(j, client_update_fields, what);
  client_update u;
  u.base_version = detail::unsigned_integer(j, "base_version", what);
  if (auto it = j.find("client_round_token"); it != j.end()) {
    if (!it->is_string()) throw error(error_code::parse_error, "client_round_token must be a string");
    u.client_round_token = it->get<std::string>();
  }
  const auto& items = detail::field(j, "items", what);
  if (!items.is_array()) throw error(error_code::parse_error, "items must be an array");
  for (const auto& entry : items) {
    constexpr std::string_view item_what = "update item";
    detail::require_object(entry, item_what);
    detail::reject_unknown(entry, item_delta_fields, item_what);
    item_delta d;
    const auto id = detail::string(entry, "item_id", item_what);
    d.delta_q = detail::number_array(entry, "delta_q", item_what);
    d.delta_b = detail::number(entry, "delta_b", item_what);
    const auto w = detail::unsigned_integer(entry, "weight", item_what);
    if (w < 1 || w > UINT32_MAX) throw error(error_code::parse_error, "weight must be a positive integer");
    d.weight = static_cast<std::uint32_t>(w);
    if (!u.items.emplace(id, std::move(d)).second) {
      throw error(error_code::parse_error, "duplicate item_id '" + id + "' in update");
    }
  }
  return u;
}

// global model

inline json to_json(const global_item_params& g) {
  json items = json::array();
  for (const auto& [id, item] : g.items) {
    items.push_back({{"item_id", id}, {"q", item.q}, {"b", item.b}});
  }
  return {{"version", g.version}, {"mu", g.mu}, {"d", g.dim}, {"items", std::move(items)}};
}

inline global_item_params global_from_json(const json& j) {
  constexpr std::string_view what = "global model";
  detail::require_object(j, what);
  global_item_params g;
  g.version = detail::unsigned_integer(j, "version", what);
  g.mu = detail::number(j, "mu", what);
  g.dim = detail::unsigned_integer(j, "d", what);
  const auto& items = detail::field(j, "items", what);
  if (!items.is_array()) throw error(error_code::parse_error, "items must be an array");
  for (const auto& entry : items) {
    item_params item;
    const auto id = detail::string(entry, "item_id", "model item");
    item.q = detail::number_array(entry, "q", "model item");
    item.b = detail::number(entry, "b", "model item");
    if (item.q.size() != g.dim) {
      throw error(error_code::dimension_mismatch, "item '" + id + "' has wrong dimension");
    }
    g.items.emplace(id, std::move(item));
  }
  return g;
}

// pois

inline json to_json(const poi& p) {
  return {{"id", p.id}, {"name", p.name}, {"category", p.category},
          {"lat", p.location.lat()}, {"lon", p.location.lon()}};
}

inline poi poi_from_json(const json& j) {
  constexpr std::string_view what = "poi";
  detail::require_object(j, what);
  return poi{detail::string(j, "id", what), detail::string(j, "name", what),
             detail::string(j, "category", what),
             geo_point(detail::number(j, "lat", what), detail::number(j, "lon", what))};
}

// sensor readings

inline json to_json(const sensor_reading& r) {
  json j = {{"sensor_id", r.sensor_id}, {"lat", r.location.lat()}, {"lon", r.location.lon()},
            {"aqi", r.aqi}, {"timestamp", format_iso8601_utc(r.timestamp)}};
  if (r.temperature_c) j["temperature_c"] = *r.temperature_c;
  if (r.humidity_pct) j["humidity_pct"] = *r.humidity_pct;
  if (r.pressure_hpa) j["pressure_hpa"] = *r.pressure_hpa;
  return j;
}

inline sensor_reading reading_from_json(const json& j) {
  constexpr std::string_view what = "sensor reading";
  detail::require_object(j, what);
  sensor_reading r{detail::string(j, "sensor_id", what),
                   geo_point(detail::number(j, "lat", what), detail::number(j, "lon", what)),
                   detail::number(j, "aqi", what),
                   detail::optional_number(j, "temperature_c"),
                   detail::optional_number(j, "humidity_pct"),
                   detail::optional_number(j, "pressure_hpa"),
                   parse_iso8601_utc(detail::string(j, "timestamp", what))};
  validate_reading(r);
  return r;
}

// ratings

inline json to_json(const rating& r) {
  return {{"user_id", r.user_id}, {"poi_id", r.poi_id}, {"value", r.value}};
}

// ranking output

inline json to_json(const ranked_candidate& c) {
  return {{"rank", c.rank},
          {"poi", to_json(c.place)},
          {"distance_km", c.distance_km},
          {"aqi", c.aqi},
          {"s_mf", c.s_mf},
          {"s_aqi", c.s_aqi},
          {"s", c.s}};
}

inline json to_json(const round_report& r) {
  json counts = json::object();
  for (const auto& [id, n] : r.item_update_counts) counts[id] = n;
  json j = {{"round_index", r.round_index},
            {"sampled", r.sampled},
            {"participants", r.participants},
            {"applied", r.applied},
            {"version_before", r.version_before},
            {"version_after", r.version_after},
            {"item_update_counts", std::move(counts)}};
  if (r.rmse_before) j["rmse_before"] = *r.rmse_before;
  if (r.rmse_after) j["rmse_after"] = *r.rmse_after;
  return j;
}

}  // namespace airtown::wire

#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <string>
#include <string_view>

#include "airtown/cf_model.hpp"
#include "airtown/error.hpp"

namespace airtown {

/// Service configuration. File format: one `key = value` per line, `#`
/// starts a comment, unknown keys are rejected.
struct service_config {
  std::string bind_address = "0.0.0.0";
  int port = 8080;
  /// Empty means in-memory only.
  std::string data_dir;
  double alpha_default = 0.5;
  double radius_default_km = 1.0;
  std::size_t k_default = 10;
  double aqi_score_lo = 0.0;
  double aqi_score_hi = 300.0;
  std::int64_t token_expiry_s = 24 * 3600;
  int password_hash_iterations = 100000;
  hyperparams hp;
  /// Optional files loaded at startup when the store holds no data yet.
  std::string catalog_file;
  std::string readings_file;
  std::string ratings_file;

  void validate() const {
    hp.validate();
    if (port < 0 || port > 65535) throw error(error_code::config_error, "port out of range");
    if (!(alpha_default >= 0.0 && alpha_default <= 1.0)) {
      throw error(error_code::config_error, "alpha_default must lie in [0, 1]");
    }
    if (!(radius_default_km > 0.0)) throw error(error_code::config_error, "radius_default_km must be > 0");
    if (k_default < 1) throw error(error_code::config_error, "k_default must be >= 1");
    if (!(aqi_score_lo < aqi_score_hi)) {
      throw error(error_code::config_error, "aqi_score_lo must be below aqi_score_hi");
    }
    if (token_expiry_s < 0) throw error(error_code::config_error, "token_expiry_s must be >= 0");
    if (password_hash_iterations < 1) {
      throw error(error_code::config_error, "password_hash_iterations must be >= 1");
    }
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_config_number(std::string_view key, std::string_view text) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw error(error_code::config_error,
                "invalid value '" + std::string(text) + "' for '" + std::string(key) + "'");
  }
  return value;
}

}  // namespace detail

inline service_config parse_config(std::istream& in) {
  service_config cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = line;
    if (auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    text = detail::trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) {
      throw error(error_code::config_error, "config line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = detail::trim(text.substr(0, eq));
    const auto value = detail::trim(text.substr(eq + 1));
    using detail::parse_config_number;
    if (key == "bind_address") cfg.bind_address = value;
    else if (key == "port") cfg.port = parse_config_number<int>(key, value);
    else if (key == "data_dir") cfg.data_dir = value;
    else if (key == "alpha_default") cfg.alpha_default = parse_config_number<double>(key, value);
    else if (key == "radius_default_km") cfg.radius_default_km = parse_config_number<double>(key, value);
    else if (key == "k_default") cfg.k_default = parse_config_number<std::size_t>(key, value);
    else if (key == "aqi_score_lo") cfg.aqi_score_lo = parse_config_number<double>(key, value);
    else if (key == "aqi_score_hi") cfg.aqi_score_hi = parse_config_number<double>(key, value);
    else if (key == "token_expiry_s") cfg.token_expiry_s = parse_config_number<std::int64_t>(key, value);
    else if (key == "password_hash_iterations") cfg.password_hash_iterations = parse_config_number<int>(key, value);
    else if (key == "d") cfg.hp.d = parse_config_number<std::size_t>(key, value);
    else if (key == "lr") cfg.hp.lr = parse_config_number<double>(key, value);
    else if (key == "reg") cfg.hp.reg = parse_config_number<double>(key, value);
    else if (key == "epochs_per_round") cfg.hp.epochs_per_round = parse_config_number<int>(key, value);
    else if (key == "seed") cfg.hp.seed = parse_config_number<std::uint64_t>(key, value);
    else if (key == "catalog_file") cfg.catalog_file = value;
    else if (key == "readings_file") cfg.readings_file = value;
    else if (key == "ratings_file") cfg.ratings_file = value;
    else {
      throw error(error_code::config_error,
                  "config line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
    }
  }
  cfg.validate();
  return cfg;
}

/// Relative paths in the file resolve against the file's own directory.
inline service_config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw error(error_code::config_error, "cannot open config '" + path + "'");
  auto cfg = parse_config(in);
  const auto base = std::filesystem::path(path).parent_path();
  for (auto* p : {&cfg.data_dir, &cfg.catalog_file, &cfg.readings_file, &cfg.ratings_file}) {
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
  }
  return cfg;
}

}  // namespace airtown

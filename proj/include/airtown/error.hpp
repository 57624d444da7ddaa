#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace airtown {

enum class error_code {
  invalid_argument,
  config_error,
  parse_error,
  item_not_in_model,
  nothing_to_train,
  no_candidates,
  stale_update,
  dimension_mismatch,
  no_sensor_data,
  degenerate_sensor_layout,
  catalog_too_small,
  duplicate_username,
  authentication_failed,
  token_expired,
  not_found,
  conflict,
};

constexpr std::string_view to_string(error_code code) {
  switch (code) {
    case error_code::invalid_argument: return "invalid_argument";
    case error_code::config_error: return "config_error";
    case error_code::parse_error: return "parse_error";
    case error_code::item_not_in_model: return "item_not_in_model";
    case error_code::nothing_to_train: return "nothing_to_train";
    case error_code::no_candidates: return "no_candidates";
    case error_code::stale_update: return "stale_update";
    case error_code::dimension_mismatch: return "dimension_mismatch";
    case error_code::no_sensor_data: return "no_sensor_data";
    case error_code::degenerate_sensor_layout: return "degenerate_sensor_layout";
    case error_code::catalog_too_small: return "catalog_too_small";
    case error_code::duplicate_username: return "duplicate_username";
    case error_code::authentication_failed: return "authentication_failed";
    case error_code::token_expired: return "token_expired";
    case error_code::not_found: return "not_found";
    case error_code::conflict: return "conflict";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable code.
class error : public std::runtime_error {
 public:
  error(error_code code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  error_code code() const noexcept { return code_; }

 private:
  error_code code_;
};

}  // namespace airtown

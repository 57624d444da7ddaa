#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "airtown/error.hpp"

namespace airtown {

/// Seconds since the Unix epoch, UTC.
using unix_seconds = std::int64_t;

namespace detail {

// Howard Hinnant's civil-calendar conversions.
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct civil_date {
  std::int64_t year;
  unsigned month;
  unsigned day;
};

constexpr civil_date civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {y + (m <= 2), m, d};
}

inline unsigned parse_digits(std::string_view text, std::size_t pos, std::size_t len) {
  unsigned value = 0;
  if (pos + len > text.size()) throw error(error_code::parse_error, "truncated timestamp");
  auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, value);
  if (ec != std::errc{} || ptr != text.data() + pos + len) {
    throw error(error_code::parse_error, "bad digits in timestamp '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace detail

/// Parses "YYYY-MM-DDTHH:MM:SS[.fff](Z|+00:00)". Fractional seconds are
/// truncated; only UTC offsets are accepted.
inline unix_seconds parse_iso8601_utc(std::string_view text) {
  auto expect = [&](std::size_t pos, char c) {
    if (pos >= text.size() || text[pos] != c) {
      throw error(error_code::parse_error, "malformed timestamp '" + std::string(text) + "'");
    }
  };
  expect(4, '-');
  expect(7, '-');
  if (text.size() <= 10 || (text[10] != 'T' && text[10] != 't' && text[10] != ' ')) {
    throw error(error_code::parse_error, "malformed timestamp '" + std::string(text) + "'");
  }
  expect(13, ':');
  expect(16, ':');
  const unsigned year = detail::parse_digits(text, 0, 4);
  const unsigned month = detail::parse_digits(text, 5, 2);
  const unsigned day = detail::parse_digits(text, 8, 2);
  const unsigned hour = detail::parse_digits(text, 11, 2);
  const unsigned minute = detail::parse_digits(text, 14, 2);
  const unsigned second = detail::parse_digits(text, 17, 2);
  if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 60) {
    throw error(error_code::parse_error, "timestamp field out of range '" + std::string(text) + "'");
  }
  std::size_t pos = 19;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
  }
  const std::string_view zone = text.substr(pos);
  if (zone != "Z" && zone != "z" && zone != "+00:00") {
    throw error(error_code::parse_error, "timestamp must be UTC: '" + std::string(text) + "'");
  }
  return detail::days_from_civil(year, month, day) * 86400 + hour * 3600 + minute * 60 + second;
}

inline std::string format_iso8601_utc(unix_seconds t) {
  std::int64_t days = t / 86400;
  std::int64_t rem = t % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  const auto date = detail::civil_from_days(days);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ",
                static_cast<long long>(date.year), date.month, date.day,
                static_cast<long long>(rem / 3600), static_cast<long long>((rem % 3600) / 60),
                static_cast<long long>(rem % 60));
  return buf;
}

}  // namespace airtown

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "airtown/error.hpp"

namespace airtown::csv {

/// Splits one line into fields. Fields may be wrapped in double quotes to
/// embed commas; a doubled quote inside a quoted field is a literal quote.
inline std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      if (!current.empty() || was_quoted) {
        throw error(error_code::parse_error, "stray quote inside unquoted field");
      }
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
      was_quoted = false;
    } else {
      if (was_quoted) {
        throw error(error_code::parse_error, "text after closing quote");
      }
      current.push_back(c);
    }
  }
  if (quoted) throw error(error_code::parse_error, "unterminated quoted field");
  fields.push_back(std::move(current));
  return fields;
}

inline std::string quote_if_needed(std::string_view field) {
  if (field.find_first_of(",\"") == std::string_view::npos) {
    return std::string(field);
  }
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

/// Strips a trailing carriage return so CRLF files load.
inline std::string_view chomp(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

}  // namespace airtown::csv

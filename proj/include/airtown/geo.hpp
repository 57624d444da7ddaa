#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "airtown/csv.hpp"
#include "airtown/error.hpp"

namespace airtown {

inline constexpr double earth_radius_km = 6371.0088;

class geo_point {
 public:
  geo_point(double lat, double lon) : lat_(lat), lon_(lon) {
    if (!std::isfinite(lat) || !std::isfinite(lon) || lat < -90.0 ||
        lat > 90.0 || lon < -180.0 || lon > 180.0) {
      std::ostringstream msg;
      msg << "coordinates out of range: (" << lat << ", " << lon << ")";
      throw error(error_code::invalid_argument, msg.str());
    }
  }

  double lat() const noexcept { return lat_; }
  double lon() const noexcept { return lon_; }

  friend bool operator==(const geo_point&, const geo_point&) = default;

 private:
  double lat_;
  double lon_;
};

/// Great-circle distance in km on a spherical Earth. Coordinate
/// differences are taken as absolute values so d(a, b) == d(b, a) exactly.
inline double haversine_distance(const geo_point& a, const geo_point& b) {
  constexpr double to_rad = std::numbers::pi / 180.0;
  const double s_lat = std::sin(std::abs(a.lat() - b.lat()) * to_rad / 2.0);
  const double s_lon = std::sin(std::abs(a.lon() - b.lon()) * to_rad / 2.0);
  const double h = s_lat * s_lat +
                   std::cos(a.lat() * to_rad) * std::cos(b.lat() * to_rad) * s_lon * s_lon;
  return 2.0 * earth_radius_km * std::asin(std::sqrt(std::clamp(h, 0.0, 1.0)));
}

struct poi {
  std::string id;
  std::string name;
  std::string category;
  geo_point location;
};

struct poi_hit {
  poi place;
  double distance_km;
};

inline const std::set<std::string, std::less<>>& default_categories() {
  static const std::set<std::string, std::less<>> cats = {
      "bar", "cafe", "museum", "park", "restaurant", "shop"};
  return cats;
}

/// Immutable POI catalog keyed by id. The category set is closed: POIs
/// with a category outside it are rejected.
class poi_catalog {
 public:
  poi_catalog() : categories_(default_categories()) {}

  explicit poi_catalog(std::set<std::string, std::less<>> categories)
      : categories_(std::move(categories)) {}

  poi_catalog(std::set<std::string, std::less<>> categories, std::vector<poi> pois)
      : categories_(std::move(categories)) {
    for (auto& p : pois) insert(std::move(p));
  }

  /// Returns a copy of this catalog with `p` added.
  poi_catalog with(poi p) const {
    poi_catalog next = *this;
    next.insert(std::move(p));
    return next;
  }

  const std::set<std::string, std::less<>>& categories() const noexcept { return categories_; }
  const std::map<std::string, poi, std::less<>>& pois() const noexcept { return pois_; }
  std::size_t size() const noexcept { return pois_.size(); }
  bool empty() const noexcept { return pois_.empty(); }

  const poi* find(std::string_view id) const {
    auto it = pois_.find(id);
    return it == pois_.end() ? nullptr : &it->second;
  }

 private:
  void insert(poi p) {
    if (p.id.empty()) throw error(error_code::invalid_argument, "empty poi id");
    if (!categories_.contains(p.category)) {
      throw error(error_code::invalid_argument, "unknown category '" + p.category + "'");
    }
    if (pois_.contains(p.id)) {
      throw error(error_code::conflict, "duplicate poi id '" + p.id + "'");
    }
    std::string key = p.id;
    pois_.emplace(std::move(key), std::move(p));
  }

  std::set<std::string, std::less<>> categories_;
  std::map<std::string, poi, std::less<>> pois_;
};

/// All POIs with distance <= radius_km (inclusive), nearest first, ties by id.
inline std::vector<poi_hit> pois_within_radius(const poi_catalog& catalog,
                                               const geo_point& center,
                                               double radius_km,
                                               std::optional<std::string_view> category = std::nullopt) {
  if (!(radius_km > 0.0) || !std::isfinite(radius_km)) {
    throw error(error_code::invalid_argument, "radius_km must be positive");
  }
  std::vector<poi_hit> hits;
  for (const auto& [id, p] : catalog.pois()) {
    if (category && p.category != *category) continue;
    const double d = haversine_distance(center, p.location);
    if (d <= radius_km) hits.push_back({p, d});
  }
  std::sort(hits.begin(), hits.end(), [](const poi_hit& a, const poi_hit& b) {
    if (a.distance_km != b.distance_km) return a.distance_km < b.distance_km;
    return a.place.id < b.place.id;
  });
  return hits;
}

namespace detail {

inline double parse_double(std::string_view text, std::string_view what) {
  double value = 0.0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || text.empty()) {
    throw error(error_code::parse_error, "invalid " + std::string(what) + " '" + std::string(text) + "'");
  }
  return value;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline constexpr std::string_view catalog_header = "id,name,category,lat,lon";
inline constexpr std::string_view categories_directive = "#categories=";

/// Parses the POI catalog text format:
///
///     #categories=restaurant,park      (optional; default set otherwise)
///     id,name,category,lat,lon
///     p1,"Trattoria, Da Nino",restaurant,41.1258,16.8674
///
/// Errors name the offending 1-based line number.
inline poi_catalog parse_catalog(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto categories = default_categories();
  bool header_seen = false;
  std::vector<poi> pois;
  std::set<std::string, std::less<>> ids;

  auto fail = [&](const std::string& what) -> void {
    throw error(error_code::parse_error, "catalog line " + std::to_string(line_no) + ": " + what);
  };

  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view text = csv::chomp(line);
    if (text.empty()) continue;
    if (!header_seen) {
      if (text.starts_with(categories_directive)) {
        categories.clear();
        for (auto& c : csv::split_line(text.substr(categories_directive.size()))) {
          if (!c.empty()) categories.insert(std::move(c));
        }
        if (categories.empty()) fail("empty category set");
        continue;
      }
      if (text != catalog_header) fail("expected header '" + std::string(catalog_header) + "'");
      header_seen = true;
      continue;
    }
    std::vector<std::string> fields;
    try {
      fields = csv::split_line(text);
    } catch (const error& e) {
      fail(e.what());
    }
    if (fields.size() != 5) fail("expected 5 fields, got " + std::to_string(fields.size()));
    if (fields[0].empty()) fail("empty id");
    if (!ids.insert(fields[0]).second) fail("duplicate id '" + fields[0] + "'");
    if (!categories.contains(fields[2])) fail("unknown category '" + fields[2] + "'");
    try {
      const double lat = detail::parse_double(fields[3], "lat");
      const double lon = detail::parse_double(fields[4], "lon");
      pois.push_back({fields[0], fields[1], fields[2], geo_point(lat, lon)});
    } catch (const error& e) {
      fail(e.what());
    }
  }
  if (!header_seen) throw error(error_code::parse_error, "catalog has no header line");
  return poi_catalog(std::move(categories), std::move(pois));
}

inline poi_catalog load_catalog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw error(error_code::not_found, "cannot open catalog '" + path + "'");
  return parse_catalog(in);
}

inline void write_catalog(std::ostream& out, const poi_catalog& catalog) {
  if (catalog.categories() != default_categories()) {
    out << categories_directive;
    bool first = true;
    for (const auto& c : catalog.categories()) {
      if (!first) out << ',';
      out << csv::quote_if_needed(c);
      first = false;
    }
    out << '\n';
  }
  out << catalog_header << '\n';
  for (const auto& [id, p] : catalog.pois()) {
    out << csv::quote_if_needed(p.id) << ',' << csv::quote_if_needed(p.name) << ','
        << csv::quote_if_needed(p.category) << ',' << detail::format_double(p.location.lat())
        << ',' << detail::format_double(p.location.lon()) << '\n';
  }
}

}  // namespace airtown

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "airtown/error.hpp"
#include "airtown/geo.hpp"
#include "airtown/timestamp.hpp"

namespace airtown {

struct sensor_reading {
  std::string sensor_id;
  geo_point location;
  double aqi = 0.0;
  std::optional<double> temperature_c;
  std::optional<double> humidity_pct;
  std::optional<double> pressure_hpa;
  unix_seconds timestamp = 0;

  friend bool operator==(const sensor_reading&, const sensor_reading&) = default;
};

inline void validate_reading(const sensor_reading& r) {
  if (r.sensor_id.empty()) throw error(error_code::invalid_argument, "empty sensor_id");
  if (!std::isfinite(r.aqi) || r.aqi < 0.0) {
    throw error(error_code::invalid_argument, "aqi must be finite and >= 0");
  }
  for (const auto& opt : {r.temperature_c, r.humidity_pct, r.pressure_hpa}) {
    if (opt && !std::isfinite(*opt)) {
      throw error(error_code::invalid_argument, "auxiliary channel must be finite");
    }
  }
}

/// Newest reading wins. Equal timestamps are resolved by the larger AQI so
/// the choice does not depend on ingestion order.
inline bool supersedes(const sensor_reading& candidate, const sensor_reading& current) {
  if (candidate.timestamp != current.timestamp) return candidate.timestamp > current.timestamp;
  if (candidate.aqi != current.aqi) return candidate.aqi > current.aqi;
  if (candidate.location.lat() != current.location.lat()) {
    return candidate.location.lat() > current.location.lat();
  }
  return candidate.location.lon() > current.location.lon();
}

/// Latest reading per sensor, ordered by sensor id.
inline std::vector<sensor_reading> latest_readings(std::span<const sensor_reading> readings) {
  std::map<std::string, sensor_reading> latest;
  for (const auto& r : readings) {
    auto it = latest.find(r.sensor_id);
    if (it == latest.end()) {
      latest.emplace(r.sensor_id, r);
    } else if (supersedes(r, it->second)) {
      it->second = r;
    }
  }
  std::vector<sensor_reading> out;
  out.reserve(latest.size());
  for (auto& [id, r] : latest) out.push_back(std::move(r));
  return out;
}

struct field_node {
  geo_point location;
  double aqi;
};

/// Gaussian RBF interpolant with a constant tail,
///
///   s(x) = sum_i w_i * exp(-(eps * |x - x_i|)^2) + c,   sum_i w_i = 0,
///
/// with great-circle distances in km.
struct aqi_field {
  std::vector<field_node> nodes;
  std::vector<double> weights;
  double constant = 0.0;
  double epsilon = 1.0;
  unix_seconds fitted_at = 0;
};

inline constexpr double colocation_km = 0.001;

inline double gaussian_kernel(double r_km, double epsilon) {
  const double x = epsilon * r_km;
  return std::exp(-x * x);
}

namespace detail {

/// Greedy merge in sensor-id order: a node within 1 m of an existing
/// cluster's first member joins it; clusters average location and value.
inline std::vector<field_node> merge_colocated(const std::vector<sensor_reading>& latest) {
  struct cluster {
    geo_point anchor;
    double lat_sum = 0.0, lon_sum = 0.0, aqi_sum = 0.0;
    std::size_t count = 0;
  };
  std::vector<cluster> clusters;
  for (const auto& r : latest) {
    auto it = std::find_if(clusters.begin(), clusters.end(), [&](const cluster& c) {
      return haversine_distance(c.anchor, r.location) <= colocation_km;
    });
    if (it == clusters.end()) {
      clusters.push_back({r.location});
      it = std::prev(clusters.end());
    }
    it->lat_sum += r.location.lat();
    it->lon_sum += r.location.lon();
    it->aqi_sum += r.aqi;
    ++it->count;
  }
  std::vector<field_node> nodes;
  nodes.reserve(clusters.size());
  for (const auto& c : clusters) {
    const auto n = static_cast<double>(c.count);
    if (c.count == 1) {
      nodes.push_back({c.anchor, c.aqi_sum});
    } else {
      nodes.push_back({geo_point(c.lat_sum / n, c.lon_sum / n), c.aqi_sum / n});
    }
  }
  return nodes;
}

inline double median_nearest_neighbour_distance(const std::vector<field_node>& nodes) {
  std::vector<double> nn(nodes.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t j = i + 1; j < nodes.size(); ++j) {
      const double d = haversine_distance(nodes[i].location, nodes[j].location);
      nn[i] = std::min(nn[i], d);
      nn[j] = std::min(nn[j], d);
    }
  }
  std::sort(nn.begin(), nn.end());
  const std::size_t m = nn.size() / 2;
  return nn.size() % 2 == 1 ? nn[m] : 0.5 * (nn[m - 1] + nn[m]);
}

}  // namespace detail

/// Kernel shape: the reciprocal of the median nearest-neighbour spacing, so
/// neighbouring kernels overlap by a fixed amount whatever the node count.
/// Scaling by the median of all pairwise distances instead makes the system
/// numerically singular once a 1 km layout holds a few dozen sensors.
inline double shape_parameter(const std::vector<field_node>& nodes) {
  if (nodes.size() < 2) return 1.0;
  return 1.0 / detail::median_nearest_neighbour_distance(nodes);
}

/// Fits the interpolant to the latest reading of every sensor.
inline aqi_field fit_interpolator(std::span<const sensor_reading> readings) {
  if (readings.empty()) throw error(error_code::no_sensor_data, "no sensor data");
  for (const auto& r : readings) validate_reading(r);

  const auto latest = latest_readings(readings);
  aqi_field field;
  for (const auto& r : latest) field.fitted_at = std::max(field.fitted_at, r.timestamp);
  field.nodes = detail::merge_colocated(latest);
  field.epsilon = shape_parameter(field.nodes);

  const auto n = static_cast<Eigen::Index>(field.nodes.size());
  field.weights.assign(field.nodes.size(), 0.0);

  // A constant field is the unique solution when every node agrees.
  const double first = field.nodes.front().aqi;
  if (std::all_of(field.nodes.begin(), field.nodes.end(),
                  [first](const field_node& node) { return node.aqi == first; })) {
    field.constant = first;
    return field;
  }

  Eigen::MatrixXd system = Eigen::MatrixXd::Zero(n + 1, n + 1);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const double phi = i == j ? 1.0
                                : gaussian_kernel(haversine_distance(field.nodes[i].location,
                                                                     field.nodes[j].location),
                                                  field.epsilon);
      system(i, j) = phi;
      system(j, i) = phi;
    }
    system(i, n) = 1.0;
    system(n, i) = 1.0;
    rhs(i) = field.nodes[i].aqi;
  }

  const Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
  if (!lu.isInvertible()) {
    throw error(error_code::degenerate_sensor_layout, "degenerate sensor layout");
  }
  const Eigen::VectorXd solution = lu.solve(rhs);
  if (!solution.allFinite() || (system * solution - rhs).norm() > 1e-6 * std::max(1.0, rhs.norm())) {
    throw error(error_code::degenerate_sensor_layout, "degenerate sensor layout");
  }
  for (Eigen::Index i = 0; i < n; ++i) field.weights[static_cast<std::size_t>(i)] = solution(i);
  field.constant = solution(n);
  return field;
}

/// Interpolated AQI at `p`, clamped at zero.
inline double interpolate(const aqi_field& field, const geo_point& p) {
  double s = field.constant;
  for (std::size_t i = 0; i < field.nodes.size(); ++i) {
    if (field.weights[i] == 0.0) continue;
    s += field.weights[i] *
         gaussian_kernel(haversine_distance(p, field.nodes[i].location), field.epsilon);
  }
  return std::max(0.0, s);
}

/// Health score in [0, 1]; lower AQI scores higher. Values outside
/// [lo, hi] saturate.
inline double aqi_to_score(double aqi, double lo = 0.0, double hi = 300.0) {
  if (!(lo < hi)) throw error(error_code::config_error, "aqi score range requires lo < hi");
  return 1.0 - (std::clamp(aqi, lo, hi) - lo) / (hi - lo);
}

}  // namespace airtown

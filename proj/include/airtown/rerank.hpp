#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "airtown/error.hpp"
#include "airtown/geo.hpp"

namespace airtown {

/// Preference weight in [0, 1]: 0 ranks purely by air quality, 1 purely by
/// predicted preference.
class alpha {
 public:
  explicit alpha(double value) : value_(value) {
    if (!(value >= 0.0 && value <= 1.0)) {
      throw error(error_code::invalid_argument, "alpha must lie in [0, 1]");
    }
  }
  double value() const noexcept { return value_; }

 private:
  double value_;
};

inline double combine(alpha a, double s_mf, double s_aqi) {
  return a.value() * s_mf + (1.0 - a.value()) * s_aqi;
}

struct candidate {
  poi place;
  double distance_km = 0.0;
  double aqi = 0.0;
  double s_mf = 0.0;
  double s_aqi = 0.0;
};

struct ranked_candidate {
  poi place;
  double distance_km = 0.0;
  double aqi = 0.0;
  double s_mf = 0.0;
  double s_aqi = 0.0;
  double s = 0.0;
  std::size_t rank = 0;
};

inline constexpr std::size_t default_top_k = 10;

/// Sorts by fused score descending, then distance ascending, then id, and
/// keeps the first k.
inline std::vector<ranked_candidate> rank_candidates(std::span<const candidate> candidates,
                                                     alpha a, std::size_t k = default_top_k) {
  if (candidates.empty()) throw error(error_code::no_candidates, "no candidates");
  if (k < 1) throw error(error_code::invalid_argument, "k must be >= 1");
  std::vector<ranked_candidate> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    out.push_back({c.place, c.distance_km, c.aqi, c.s_mf, c.s_aqi, combine(a, c.s_mf, c.s_aqi), 0});
  }
  std::sort(out.begin(), out.end(), [](const ranked_candidate& x, const ranked_candidate& y) {
    if (x.s != y.s) return x.s > y.s;
    if (x.distance_km != y.distance_km) return x.distance_km < y.distance_km;
    return x.place.id < y.place.id;
  });
  out.erase(out.begin() + static_cast<std::ptrdiff_t>(std::min(k, out.size())), out.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = i + 1;
  return out;
}

}  // namespace airtown

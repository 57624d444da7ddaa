#pragma once

// Independent reference implementations used only by the test suites.
// None of these call into the library code paths they are checking.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

inline constexpr double earth_radius_km = 6371.0088;

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

/// Spherical law of cosines. Poorly conditioned below ~1 m but independent
/// of the haversine formulation.
inline double law_of_cosines_km(double lat1, double lon1, double lat2, double lon2) {
  const double f1 = deg2rad(lat1), f2 = deg2rad(lat2), dl = deg2rad(lon2 - lon1);
  const double c = std::sin(f1) * std::sin(f2) + std::cos(f1) * std::cos(f2) * std::cos(dl);
  return earth_radius_km * std::acos(std::clamp(c, -1.0, 1.0));
}

/// Central angle from the chord between unit vectors; well conditioned at
/// short range.
inline double chord_distance_km(double lat1, double lon1, double lat2, double lon2) {
  auto unit = [](double lat, double lon) {
    const double f = deg2rad(lat), l = deg2rad(lon);
    return std::array<double, 3>{std::cos(f) * std::cos(l), std::cos(f) * std::sin(l), std::sin(f)};
  };
  const auto a = unit(lat1, lon1), b = unit(lat2, lon2);
  const double chord = std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) +
                                 (a[2] - b[2]) * (a[2] - b[2]));
  return 2.0 * earth_radius_km * std::asin(std::min(1.0, chord / 2.0));
}

/// Destination point after travelling `dist_km` from (lat, lon) on initial
/// bearing `bearing_deg` (0 = north).
inline std::pair<double, double> destination(double lat, double lon, double bearing_deg,
                                             double dist_km) {
  const double f1 = deg2rad(lat), l1 = deg2rad(lon), th = deg2rad(bearing_deg);
  const double delta = dist_km / earth_radius_km;
  const double f2 = std::asin(std::sin(f1) * std::cos(delta) +
                              std::cos(f1) * std::sin(delta) * std::cos(th));
  const double l2 = l1 + std::atan2(std::sin(th) * std::sin(delta) * std::cos(f1),
                                    std::cos(delta) - std::sin(f1) * std::sin(f2));
  return {f2 * 180.0 / std::numbers::pi, l2 * 180.0 / std::numbers::pi};
}

/// Dense Gaussian elimination with partial pivoting.
inline std::vector<double> gaussian_solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    if (std::abs(a[pivot][col]) < 1e-300) throw std::runtime_error("singular");
    std::swap(a[pivot], a[col]);
    std::swap(b[pivot], b[col]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= a[i][c] * x[c];
    x[i] = s / a[i][i];
  }
  return x;
}

/// Plain-data mirror of a client update for the FedAvg oracle.
struct delta {
  std::string item;
  std::vector<double> dq;
  double db;
  double weight;
};

/// Materializes numerator and denominator sums per item and applies them.
/// Input: item -> (q, b); per-client delta lists.
inline std::map<std::string, std::pair<std::vector<double>, double>> fedavg(
    std::map<std::string, std::pair<std::vector<double>, double>> model,
    const std::vector<std::vector<delta>>& clients) {
  std::map<std::string, std::vector<double>> num_q;
  std::map<std::string, double> num_b, den;
  for (const auto& client : clients) {
    for (const auto& d : client) {
      auto& nq = num_q[d.item];
      if (nq.empty()) nq.assign(d.dq.size(), 0.0);
      for (std::size_t k = 0; k < d.dq.size(); ++k) nq[k] += d.weight * d.dq[k];
      num_b[d.item] += d.weight * d.db;
      den[d.item] += d.weight;
    }
  }
  for (auto& [item, params] : model) {
    if (!den.count(item)) continue;
    for (std::size_t k = 0; k < params.first.size(); ++k) {
      params.first[k] += num_q[item][k] / den[item];
    }
    params.second += num_b[item] / den[item];
  }
  return model;
}

/// Plain-data MF instance for finite differences and centralized training.
struct mf_state {
  double mu = 3.0;
  std::map<std::string, std::vector<double>> p;  // user -> embedding
  std::map<std::string, double> bu;
  std::map<std::string, std::vector<double>> q;  // item -> embedding
  std::map<std::string, double> bi;
};

struct obs {
  std::string user;
  std::string item;
  double value;
};

/// Centralized objective: squared error plus L2 on every user and every
/// rated item, each counted once.
inline double mf_loss(const mf_state& s, const std::vector<obs>& data, double reg) {
  double loss = 0.0;
  std::map<std::string, bool> users, items;
  for (const auto& o : data) {
    const auto& p = s.p.at(o.user);
    const auto& q = s.q.at(o.item);
    double pred = s.mu + s.bu.at(o.user) + s.bi.at(o.item);
    for (std::size_t k = 0; k < p.size(); ++k) pred += p[k] * q[k];
    loss += (o.value - pred) * (o.value - pred);
    users[o.user] = true;
    items[o.item] = true;
  }
  for (const auto& [u, _] : users) {
    for (double v : s.p.at(u)) loss += reg * v * v;
    loss += reg * s.bu.at(u) * s.bu.at(u);
  }
  for (const auto& [i, _] : items) {
    for (double v : s.q.at(i)) loss += reg * v * v;
    loss += reg * s.bi.at(i) * s.bi.at(i);
  }
  return loss;
}

/// Central finite difference of mf_loss with respect to one scalar, located
/// by a pointer into the state copy.
template <typename Locate>
double central_difference(const mf_state& s, const std::vector<obs>& data, double reg,
                          Locate locate, double h = 1e-5) {
  mf_state plus = s, minus = s;
  *locate(plus) += h;
  *locate(minus) -= h;
  return (mf_loss(plus, data, reg) - mf_loss(minus, data, reg)) / (2.0 * h);
}

/// Centralized full-batch gradient descent on mf_loss: every epoch computes
/// the gradient at the current point for all parameters, then steps.
inline mf_state centralized_train(mf_state s, const std::vector<obs>& data, double lr, double reg,
                                  int epochs) {
  for (int e = 0; e < epochs; ++e) {
    mf_state grad = s;
    for (auto& [u, v] : grad.p) std::fill(v.begin(), v.end(), 0.0);
    for (auto& [u, v] : grad.bu) v = 0.0;
    for (auto& [i, v] : grad.q) std::fill(v.begin(), v.end(), 0.0);
    for (auto& [i, v] : grad.bi) v = 0.0;
    std::map<std::string, bool> users, items;
    for (const auto& o : data) {
      const auto& p = s.p.at(o.user);
      const auto& q = s.q.at(o.item);
      double pred = s.mu + s.bu.at(o.user) + s.bi.at(o.item);
      for (std::size_t k = 0; k < p.size(); ++k) pred += p[k] * q[k];
      const double err = o.value - pred;
      for (std::size_t k = 0; k < p.size(); ++k) {
        grad.p[o.user][k] += -2.0 * err * q[k];
        grad.q[o.item][k] += -2.0 * err * p[k];
      }
      grad.bu[o.user] += -2.0 * err;
      grad.bi[o.item] += -2.0 * err;
      users[o.user] = true;
      items[o.item] = true;
    }
    for (const auto& [u, _] : users) {
      for (std::size_t k = 0; k < s.p[u].size(); ++k) grad.p[u][k] += 2.0 * reg * s.p[u][k];
      grad.bu[u] += 2.0 * reg * s.bu[u];
    }
    for (const auto& [i, _] : items) {
      for (std::size_t k = 0; k < s.q[i].size(); ++k) grad.q[i][k] += 2.0 * reg * s.q[i][k];
      grad.bi[i] += 2.0 * reg * s.bi[i];
    }
    for (const auto& [u, _] : users) {
      for (std::size_t k = 0; k < s.p[u].size(); ++k) s.p[u][k] -= lr * grad.p[u][k];
      s.bu[u] -= lr * grad.bu[u];
    }
    for (const auto& [i, _] : items) {
      for (std::size_t k = 0; k < s.q[i].size(); ++k) s.q[i][k] -= lr * grad.q[i][k];
      s.bi[i] -= lr * grad.bi[i];
    }
  }
  return s;
}

}  // namespace oracle

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "airtown/client_update.hpp"
#include "airtown/csv.hpp"
#include "airtown/error.hpp"
#include "airtown/random.hpp"

namespace airtown {

inline constexpr double rating_min = 1.0;
inline constexpr double rating_max = 5.0;

struct rating {
  std::string user_id;
  std::string poi_id;
  double value = 0.0;

  friend bool operator==(const rating&, const rating&) = default;
};

inline void validate_rating(const rating& r) {
  if (!std::isfinite(r.value) || r.value < rating_min || r.value > rating_max) {
    throw error(error_code::invalid_argument, "rating value must lie in [1, 5]");
  }
  if (r.user_id.empty() || r.poi_id.empty()) {
    throw error(error_code::invalid_argument, "rating needs user_id and poi_id");
  }
}

struct item_params {
  std::vector<double> q;
  double b = 0.0;

  friend bool operator==(const item_params&, const item_params&) = default;
};

/// Shared half of the factorization: item embeddings, item biases and the
/// global mean. Snapshots are immutable values handed out by copy.
struct global_item_params {
  std::uint64_t version = 0;
  double mu = 3.0;
  std::size_t dim = 0;
  std::map<std::string, item_params, std::less<>> items;

  const item_params& at(std::string_view id) const {
    auto it = items.find(id);
    if (it == items.end()) {
      throw error(error_code::item_not_in_model, "item not in model: '" + std::string(id) + "'");
    }
    return it->second;
  }

  friend bool operator==(const global_item_params&, const global_item_params&) = default;
};

/// Private half: never leaves the owning client.
struct local_model {
  std::string user_id;
  std::vector<double> p;
  double b = 0.0;

  friend bool operator==(const local_model&, const local_model&) = default;
};

struct hyperparams {
  std::size_t d = 8;
  double lr = 0.05;
  double reg = 0.02;
  int epochs_per_round = 5;
  std::uint64_t seed = 0;

  void validate() const {
    if (d < 1) throw error(error_code::config_error, "embedding dimension must be >= 1");
    if (!(lr >= 0.0)) throw error(error_code::config_error, "lr must be non-negative");
    if (!(reg >= 0.0)) throw error(error_code::config_error, "reg must be >= 0");
    if (epochs_per_round < 0) throw error(error_code::config_error, "epochs_per_round must be >= 0");
  }
};

inline constexpr double genesis_item_stddev = 0.1;

/// Initial parameters for one item: q ~ N(0, 0.1^2) from a stream seeded by
/// (seed, item id), bias zero. Independent of which other items exist, so
/// items added after genesis are initialized the same way.
inline item_params initial_item(std::string_view item_id, std::size_t dim, std::uint64_t seed) {
  seeded_rng rng(seed ^ fnv1a64(item_id));
  item_params item;
  item.q.resize(dim);
  for (auto& v : item.q) v = rng.normal(0.0, genesis_item_stddev);
  return item;
}

/// Genesis model at version 0.
inline global_item_params make_genesis(const std::vector<std::string>& item_ids, double mu,
                                       std::size_t dim, std::uint64_t seed) {
  global_item_params g;
  g.mu = mu;
  g.dim = dim;
  for (const auto& id : item_ids) g.items.try_emplace(id, initial_item(id, dim, seed));
  return g;
}

/// Mean of bootstrap ratings, 3.0 when there are none.
inline double genesis_mean(std::span<const rating> ratings) {
  if (ratings.empty()) return 3.0;
  double sum = 0.0;
  for (const auto& r : ratings) sum += r.value;
  return sum / static_cast<double>(ratings.size());
}

inline local_model make_local_model(std::string user_id, std::size_t dim) {
  return local_model{std::move(user_id), std::vector<double>(dim, 0.0), 0.0};
}

namespace detail {

inline void check_dims(const local_model& local, const global_item_params& global) {
  if (local.p.size() != global.dim) {
    throw error(error_code::dimension_mismatch,
                "user embedding has dimension " + std::to_string(local.p.size()) +
                    ", model has " + std::to_string(global.dim));
  }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

}  // namespace detail

inline double predict(const local_model& local, const item_params& item, double mu) {
  return mu + local.b + item.b + detail::dot(local.p, item.q);
}

/// Raw (unclamped) predicted rating mu + b_u + b_i + p_u . q_i.
inline double predict(const local_model& local, const global_item_params& global,
                      std::string_view poi_id) {
  detail::check_dims(local, global);
  return predict(local, global.at(poi_id), global.mu);
}

/// Cold-user prediction mu + b_i.
inline double predict_cold(const global_item_params& global, std::string_view poi_id) {
  const auto& item = global.at(poi_id);
  return global.mu + item.b;
}

inline double clamp_for_display(double raw) { return std::clamp(raw, rating_min, rating_max); }

struct item_gradient {
  std::vector<double> q;
  double b = 0.0;
};

struct loss_gradients {
  double loss = 0.0;
  std::vector<double> p;
  double b_u = 0.0;
  std::map<std::string, item_gradient, std::less<>> items;
};

/// Regularized squared error over `ratings` and its exact gradient.
///
///   L = sum (r - rhat)^2 + reg * (|p_u|^2 + b_u^2 + sum_touched (|q_i|^2 + b_i^2))
///
/// Only items that appear in `ratings` get a gradient entry.
inline loss_gradients loss_and_gradients(const local_model& local,
                                         const global_item_params& global,
                                         std::span<const rating> ratings, double reg) {
  detail::check_dims(local, global);
  const std::size_t d = global.dim;
  loss_gradients out;
  out.p.assign(d, 0.0);

  for (const auto& r : ratings) {
    const auto& item = global.at(r.poi_id);
    auto [it, inserted] = out.items.try_emplace(r.poi_id);
    if (inserted) it->second.q.assign(d, 0.0);
    auto& g = it->second;

    const double err = r.value - predict(local, item, global.mu);
    out.loss += err * err;
    for (std::size_t k = 0; k < d; ++k) {
      out.p[k] -= 2.0 * err * item.q[k];
      g.q[k] -= 2.0 * err * local.p[k];
    }
    out.b_u -= 2.0 * err;
    g.b -= 2.0 * err;
  }

  out.loss += reg * (detail::squared_norm(local.p) + local.b * local.b);
  for (std::size_t k = 0; k < d; ++k) out.p[k] += 2.0 * reg * local.p[k];
  out.b_u += 2.0 * reg * local.b;
  for (auto& [id, g] : out.items) {
    const auto& item = global.at(id);
    out.loss += reg * (detail::squared_norm(item.q) + item.b * item.b);
    for (std::size_t k = 0; k < d; ++k) g.q[k] += 2.0 * reg * item.q[k];
    g.b += 2.0 * reg * item.b;
  }
  return out;
}

/// Keeps the last rating per (user, poi) and orders the result by poi id.
inline std::vector<rating> canonical_ratings(std::span<const rating> ratings) {
  std::map<std::pair<std::string, std::string>, double> latest;
  for (const auto& r : ratings) latest[{r.poi_id, r.user_id}] = r.value;
  std::vector<rating> out;
  out.reserve(latest.size());
  for (const auto& [key, value] : latest) out.push_back({key.second, key.first, value});
  return out;
}

struct local_train_result {
  local_model local;
  client_update update;
};

/// One client's share of a federated round: full-batch gradient descent for
/// hp.epochs_per_round epochs over the client's ratings (poi-id order),
/// updating user and touched item parameters simultaneously. The returned
/// update holds item deltas relative to `global` and per-item rating counts.
inline local_train_result local_train(const local_model& local,
                                      const global_item_params& global,
                                      std::span<const rating> ratings,
                                      const hyperparams& hp) {
  if (ratings.empty()) throw error(error_code::nothing_to_train, "nothing to train");
  hp.validate();
  detail::check_dims(local, global);
  for (const auto& r : ratings) validate_rating(r);

  const auto data = canonical_ratings(ratings);

  // Working copy restricted to the items this client touches.
  global_item_params work;
  work.version = global.version;
  work.mu = global.mu;
  work.dim = global.dim;
  std::map<std::string, std::uint32_t, std::less<>> counts;
  for (const auto& r : data) {
    work.items.try_emplace(r.poi_id, global.at(r.poi_id));
    ++counts[r.poi_id];
  }

  local_model user = local;
  const std::size_t d = global.dim;
  for (int epoch = 0; epoch < hp.epochs_per_round; ++epoch) {
    const auto grads = loss_and_gradients(user, work, data, hp.reg);
    for (std::size_t k = 0; k < d; ++k) user.p[k] -= hp.lr * grads.p[k];
    user.b -= hp.lr * grads.b_u;
    for (const auto& [id, g] : grads.items) {
      auto& item = work.items.find(id)->second;
      for (std::size_t k = 0; k < d; ++k) item.q[k] -= hp.lr * g.q[k];
      item.b -= hp.lr * g.b;
    }
  }

  client_update update;
  update.base_version = global.version;
  for (const auto& [id, trained] : work.items) {
    const auto& received = global.at(id);
    item_delta delta;
    delta.delta_q.resize(d);
    for (std::size_t k = 0; k < d; ++k) delta.delta_q[k] = trained.q[k] - received.q[k];
    delta.delta_b = trained.b - received.b;
    delta.weight = counts.at(id);
    update.items.emplace(id, std::move(delta));
  }
  return {std::move(user), std::move(update)};
}

struct scored_item {
  std::string poi_id;
  double score = 0.0;

  friend bool operator==(const scored_item&, const scored_item&) = default;
};

/// Min-max normalization over the candidate set; a constant set maps to 0.5.
inline std::vector<scored_item> normalize_scores(std::span<const scored_item> raw) {
  if (raw.empty()) throw error(error_code::no_candidates, "no candidates");
  auto [lo_it, hi_it] = std::minmax_element(
      raw.begin(), raw.end(), [](const auto& a, const auto& b) { return a.score < b.score; });
  const double lo = lo_it->score;
  const double hi = hi_it->score;
  std::vector<scored_item> out;
  out.reserve(raw.size());
  for (const auto& item : raw) {
    const double s = hi > lo ? (item.score - lo) / (hi - lo) : 0.5;
    out.push_back({item.poi_id, s});
  }
  return out;
}

inline constexpr std::string_view ratings_header = "user_id,poi_id,value";

/// Ratings bootstrap file: header `user_id,poi_id,value`, catalog quoting
/// rules.
inline std::vector<rating> parse_ratings(std::istream& in) {
  std::vector<rating> out;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view text = csv::chomp(line);
    if (text.empty()) continue;
    auto fail = [&](const std::string& what) {
      throw error(error_code::parse_error, "ratings line " + std::to_string(line_no) + ": " + what);
    };
    if (!header_seen) {
      if (text != ratings_header) fail("expected header '" + std::string(ratings_header) + "'");
      header_seen = true;
      continue;
    }
    std::vector<std::string> fields;
    try {
      fields = csv::split_line(text);
    } catch (const error& e) {
      fail(e.what());
    }
    if (fields.size() != 3) fail("expected 3 fields");
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), value);
    if (ec != std::errc{} || ptr != fields[2].data() + fields[2].size()) fail("invalid value");
    rating r{fields[0], fields[1], value};
    try {
      validate_rating(r);
    } catch (const error& e) {
      fail(e.what());
    }
    out.push_back(std::move(r));
  }
  if (!header_seen) throw error(error_code::parse_error, "ratings file has no header line");
  return out;
}

inline void write_rating_line(std::ostream& out, const rating& r) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), r.value);
  out << csv::quote_if_needed(r.user_id) << ',' << csv::quote_if_needed(r.poi_id) << ','
      << std::string_view(buf, static_cast<std::size_t>(ptr - buf)) << '\n';
}

inline void write_ratings(std::ostream& out, std::span<const rating> ratings) {
  out << ratings_header << '\n';
  for (const auto& r : ratings) write_rating_line(out, r);
}

}  // namespace airtown

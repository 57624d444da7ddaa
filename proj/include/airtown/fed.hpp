#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "airtown/cf_model.hpp"
#include "airtown/client_update.hpp"
#include "airtown/error.hpp"
#include "airtown/random.hpp"

namespace airtown {

struct aggregation_result {
  global_item_params params;
  bool applied = false;
  std::size_t participants = 0;
  /// Indices into the submitted update list that were rejected as stale.
  std::vector<std::size_t> stale;
  std::map<std::string, std::size_t, std::less<>> item_update_counts;
};

namespace detail {

inline bool delta_less(const item_delta& a, const item_delta& b) {
  if (a.weight != b.weight) return a.weight < b.weight;
  if (a.delta_b != b.delta_b) return a.delta_b < b.delta_b;
  return a.delta_q < b.delta_q;
}

/// Total order on updates so that summation order is independent of
/// arrival order.
inline bool update_less(const client_update& a, const client_update& b) {
  if (a.client_round_token != b.client_round_token) {
    return a.client_round_token < b.client_round_token;
  }
  return std::lexicographical_compare(
      a.items.begin(), a.items.end(), b.items.begin(), b.items.end(),
      [](const auto& x, const auto& y) {
        if (x.first != y.first) return x.first < y.first;
        return delta_less(x.second, y.second);
      });
}

inline void validate_update_shape(const client_update& u, const global_item_params& global) {
  for (const auto& [id, delta] : u.items) {
    if (!global.items.contains(id)) {
      throw error(error_code::item_not_in_model, "update touches unknown item '" + id + "'");
    }
    if (delta.delta_q.size() != global.dim) {
      throw error(error_code::dimension_mismatch,
                  "delta for '" + id + "' has dimension " + std::to_string(delta.delta_q.size()) +
                      ", model has " + std::to_string(global.dim));
    }
    if (delta.weight < 1) throw error(error_code::invalid_argument, "update weight must be >= 1");
    if (!std::isfinite(delta.delta_b) ||
        !std::all_of(delta.delta_q.begin(), delta.delta_q.end(),
                     [](double v) { return std::isfinite(v); })) {
      throw error(error_code::invalid_argument, "non-finite delta for '" + id + "'");
    }
  }
}

}  // namespace detail

/// Federated averaging over item parameters. For every item touched by at
/// least one update,
///
///   q_i += sum_c(w_ci * dq_ci) / sum_c(w_ci)      (likewise b_i)
///
/// Untouched items are copied unchanged. Updates built against another
/// version are rejected individually; a malformed update aborts the whole
/// aggregation. The version advances only when something was applied.
inline aggregation_result aggregate(const global_item_params& global,
                                    std::span<const client_update> updates) {
  for (const auto& u : updates) detail::validate_update_shape(u, global);

  aggregation_result out;
  out.params = global;

  std::vector<const client_update*> fresh;
  for (std::size_t i = 0; i < updates.size(); ++i) {
    if (updates[i].base_version != global.version) {
      out.stale.push_back(i);
    } else {
      fresh.push_back(&updates[i]);
    }
  }
  if (fresh.empty()) return out;

  std::sort(fresh.begin(), fresh.end(),
            [](const client_update* a, const client_update* b) { return detail::update_less(*a, *b); });

  struct accumulator {
    std::vector<double> q;
    double b = 0.0;
    double weight = 0.0;
  };
  std::map<std::string, accumulator, std::less<>> sums;
  for (const auto* u : fresh) {
    for (const auto& [id, delta] : u->items) {
      auto [it, inserted] = sums.try_emplace(id);
      auto& acc = it->second;
      if (inserted) acc.q.assign(global.dim, 0.0);
      const double w = static_cast<double>(delta.weight);
      for (std::size_t k = 0; k < global.dim; ++k) acc.q[k] += w * delta.delta_q[k];
      acc.b += w * delta.delta_b;
      acc.weight += w;
      ++out.item_update_counts[id];
    }
  }

  for (const auto& [id, acc] : sums) {
    auto& item = out.params.items.find(id)->second;
    for (std::size_t k = 0; k < global.dim; ++k) item.q[k] += acc.q[k] / acc.weight;
    item.b += acc.b / acc.weight;
  }
  out.params.version = global.version + 1;
  out.applied = true;
  out.participants = fresh.size();
  return out;
}

/// A training participant. Implementations own their private state; the
/// server only ever sees the returned update.
class fl_client {
 public:
  virtual ~fl_client() = default;
  virtual const std::string& id() const = 0;
  /// Trains against a broadcast snapshot. An empty result means the client
  /// dropped out of the round.
  virtual std::optional<client_update> train_round(const global_item_params& snapshot) = 0;
};

/// In-memory client with a local model and its survey ratings.
class local_client final : public fl_client {
 public:
  local_client(std::string id, std::vector<rating> ratings, hyperparams hp, std::size_t dim)
      : id_(std::move(id)),
        ratings_(std::move(ratings)),
        hp_(hp),
        model_(make_local_model(id_, dim)),
        token_rng_(hp.seed ^ fnv1a64(id_)) {}

  const std::string& id() const override { return id_; }

  std::optional<client_update> train_round(const global_item_params& snapshot) override {
    if (ratings_.empty()) return std::nullopt;
    auto result = local_train(model_, snapshot, ratings_, hp_);
    model_ = std::move(result.local);
    result.update.client_round_token = next_token();
    return std::move(result.update);
  }

  const local_model& model() const noexcept { return model_; }
  const std::vector<rating>& ratings() const noexcept { return ratings_; }
  void add_rating(rating r) { ratings_.push_back(std::move(r)); }

 private:
  std::string next_token() {
    static constexpr char hex[] = "0123456789abcdef";
    std::string token(16, '0');
    auto bits = token_rng_.next_u64();
    for (auto& c : token) {
      c = hex[bits & 0xF];
      bits >>= 4;
    }
    return token;
  }

  std::string id_;
  std::vector<rating> ratings_;
  hyperparams hp_;
  local_model model_;
  seeded_rng token_rng_;
};

struct round_report {
  std::uint64_t round_index = 0;
  std::size_t sampled = 0;
  std::size_t participants = 0;
  bool applied = false;
  std::uint64_t version_before = 0;
  std::uint64_t version_after = 0;
  std::map<std::string, std::size_t, std::less<>> item_update_counts;
  std::optional<double> rmse_before;
  std::optional<double> rmse_after;
};

enum class execution_mode { sequential, concurrent };

struct round_options {
  double sampling_fraction = 1.0;
  std::uint64_t seed = 0;
  execution_mode mode = execution_mode::sequential;
  /// Optional held-out evaluation, called on the pre- and post-round model.
  std::function<double(const global_item_params&)> validate;
};

struct round_result {
  global_item_params params;
  round_report report;
};

/// Seeded sample of ceil(fraction * n) pool indices, without replacement,
/// returned in ascending order.
inline std::vector<std::size_t> sample_clients(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw error(error_code::invalid_argument, "sampling fraction must lie in (0, 1]");
  }
  const auto count = std::min(
      n, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n))));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  seeded_rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.index(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// One synchronous round: sample, broadcast, train, aggregate.
inline round_result run_round(const global_item_params& global,
                              std::span<fl_client* const> pool,
                              const round_options& opts = {}) {
  if (pool.empty()) throw error(error_code::invalid_argument, "client pool is empty");
  const auto chosen = sample_clients(pool.size(), opts.sampling_fraction, opts.seed);

  auto train_one = [&global](fl_client* client) -> std::optional<client_update> {
    try {
      return client->train_round(global);
    } catch (const error&) {
      return std::nullopt;
    }
  };

  std::vector<std::optional<client_update>> returned(chosen.size());
  if (opts.mode == execution_mode::concurrent) {
    std::vector<std::future<std::optional<client_update>>> futures;
    futures.reserve(chosen.size());
    for (auto i : chosen) futures.push_back(std::async(std::launch::async, train_one, pool[i]));
    for (std::size_t k = 0; k < futures.size(); ++k) returned[k] = futures[k].get();
  } else {
    for (std::size_t k = 0; k < chosen.size(); ++k) returned[k] = train_one(pool[chosen[k]]);
  }

  std::vector<client_update> updates;
  for (auto& u : returned) {
    if (u) updates.push_back(std::move(*u));
  }

  round_result out;
  out.report.sampled = chosen.size();
  out.report.version_before = global.version;
  if (opts.validate) out.report.rmse_before = opts.validate(global);

  auto agg = aggregate(global, updates);
  out.params = std::move(agg.params);
  out.report.applied = agg.applied;
  out.report.participants = agg.participants;
  out.report.item_update_counts = std::move(agg.item_update_counts);
  out.report.version_after = out.params.version;
  out.report.round_index = out.params.version;
  if (opts.validate) out.report.rmse_after = opts.validate(out.params);
  return out;
}

}  // namespace airtown

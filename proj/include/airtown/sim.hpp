#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "airtown/aqi_field.hpp"
#include "airtown/cf_model.hpp"
#include "airtown/error.hpp"
#include "airtown/fed.hpp"
#include "airtown/geo.hpp"
#include "airtown/random.hpp"
#include "airtown/service.hpp"
#include "airtown/timestamp.hpp"
#include "airtown/wire.hpp"

namespace airtown::sim {

using json = nlohmann::json;

/// km per degree of latitude used for local grid offsets.
inline constexpr double km_per_degree = 111.19;

/// Default demo location: Aldo Moro Square, Bari.
inline const geo_point& aldo_moro_square() {
  static const geo_point p{41.1258, 16.8674};
  return p;
}

/// Reading timestamp for generated data (2024-06-01T12:00:00Z).
inline constexpr unix_seconds demo_timestamp = 1717243200;

/// Local equirectangular offset: `east_km`, `north_km` from `origin`.
inline geo_point offset(const geo_point& origin, double east_km, double north_km) {
  constexpr double to_rad = 3.14159265358979323846 / 180.0;
  return geo_point(origin.lat() + north_km / km_per_degree,
                   origin.lon() + east_km / (km_per_degree * std::cos(origin.lat() * to_rad)));
}

struct grid_spec {
  geo_point center = aldo_moro_square();
  double side_km = 1.0;
  int n_per_side = 4;
  double aqi_lo = 20.0;
  double aqi_hi = 70.0;
};

/// n_per_side^2 sensors evenly spaced over a side_km square centred on the
/// grid centre, AQI drawn uniformly from [aqi_lo, aqi_hi]. Row-major from
/// the south-west corner.
inline std::vector<sensor_reading> generate_sensor_grid(const grid_spec& g, std::uint64_t seed,
                                                        unix_seconds timestamp = demo_timestamp) {
  if (g.n_per_side < 2) throw error(error_code::config_error, "n_per_side must be >= 2");
  if (!(g.aqi_lo < g.aqi_hi)) throw error(error_code::config_error, "aqi_lo must be below aqi_hi");
  if (!(g.side_km > 0.0)) throw error(error_code::config_error, "side_km must be > 0");
  seeded_rng rng(seed);
  std::vector<sensor_reading> out;
  const double step = g.side_km / (g.n_per_side - 1);
  for (int row = 0; row < g.n_per_side; ++row) {
    for (int col = 0; col < g.n_per_side; ++col) {
      char id[16];
      std::snprintf(id, sizeof(id), "s%02d", row * g.n_per_side + col);
      const auto loc = offset(g.center, -g.side_km / 2 + col * step, -g.side_km / 2 + row * step);
      out.push_back({id, loc, rng.uniform(g.aqi_lo, g.aqi_hi), std::nullopt, std::nullopt,
                     std::nullopt, timestamp});
    }
  }
  return out;
}

/// Synthetic restaurants scattered inside the grid square, plus a cafe and a
/// park that the restaurant filter must exclude.
inline std::vector<poi> generate_demo_pois(const grid_spec& g, std::uint64_t seed,
                                           int restaurants = 8) {
  static const char* names[] = {"Trattoria del Porto", "Osteria Murat", "Pizzeria Sparano",
                                "Braceria Petruzzelli", "Focacceria Piccinni", "Ristorante Vittorio",
                                "Panzerotti Argiro", "Enoteca Crisanzio", "Taverna Abate",
                                "Bottega Cavour", "Cucina Manzoni", "Friggitoria Calefati"};
  seeded_rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const double half = 0.45 * g.side_km;
  std::vector<poi> out;
  for (int i = 0; i < restaurants; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "r%02d", i + 1);
    const double east = rng.uniform(-half, half);
    const double north = rng.uniform(-half, half);
    out.push_back({id, names[i % 12], "restaurant", offset(g.center, east, north)});
  }
  out.push_back({"c01", "Caffe Borghese", "cafe", offset(g.center, rng.uniform(-half, half), rng.uniform(-half, half))});
  out.push_back({"k01", "Giardino Isabella", "park", offset(g.center, rng.uniform(-half, half), rng.uniform(-half, half))});
  return out;
}

struct demo_user_profile {
  std::string username;
  /// Ratings keyed by username; the service assigns the real user id.
  std::vector<rating> ratings;
};

/// Two users with opposite tastes over a seeded split of the restaurants.
/// Each rates six restaurants: liked ones 4-5, the rest 1-2. Health
/// sensitivity is expressed through alpha only.
inline std::pair<demo_user_profile, demo_user_profile> generate_demo_users(const poi_catalog& catalog,
                                                                           std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const auto& [id, p] : catalog.pois()) {
    if (p.category == "restaurant") ids.push_back(id);
  }
  if (ids.size() < 6) {
    throw error(error_code::catalog_too_small, "demo needs at least 6 restaurants");
  }
  seeded_rng rng(seed ^ 0x5851f42d4c957f2dULL);
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.index(i)]);
  const std::size_t half = ids.size() / 2;

  auto profile = [&](const std::string& name, bool likes_first_half) {
    demo_user_profile u{name, {}};
    std::vector<std::size_t> order(ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    order.resize(6);
    std::sort(order.begin(), order.end());
    for (auto i : order) {
      const bool liked = (i < half) == likes_first_half;
      const double value = liked ? 4.0 + static_cast<double>(rng.index(2))
                                 : 1.0 + static_cast<double>(rng.index(2));
      u.ratings.push_back({name, ids[i], value});
    }
    return u;
  };
  auto user1 = profile("user1", true);
  auto user2 = profile("user2", false);
  return {std::move(user1), std::move(user2)};
}

/// Client-side view of the service: a request function. The demo runs it
/// in-process; the same bodies go over HTTP in `airtown serve`.
using transport = std::function<api_response(const api_request&)>;

struct captured_request {
  std::string from;
  api_request request;
};

/// A simulated device. Ratings, user embedding and bias stay in this object;
/// what leaves it is exactly what passes through `transport`.
class demo_client {
 public:
  demo_client(std::string username, std::string password, std::vector<rating> ratings,
              hyperparams hp)
      : username_(std::move(username)),
        password_(std::move(password)),
        ratings_(std::move(ratings)),
        hp_(hp),
        model_(make_local_model(username_, hp.d)) {}

  const std::string& username() const noexcept { return username_; }
  const local_model& model() const noexcept { return model_; }
  const std::vector<rating>& ratings() const noexcept { return ratings_; }
  /// Every user-side parameter value this client has held.
  const std::vector<double>& private_history() const noexcept { return history_; }

  void register_account(const transport& send) {
    call(send, "POST", "/auth/register", {{"username", username_}, {"password", password_}}, 201);
  }

  void login(const transport& send) {
    const auto resp = call(send, "POST", "/auth/login", {{"username", username_}, {"password", password_}});
    token_ = resp.at("token").get<std::string>();
  }

  /// Survey answers, submitted once at bootstrap.
  void submit_ratings(const transport& send) {
    for (const auto& r : ratings_) {
      call(send, "POST", "/ratings", {{"poi_id", r.poi_id}, {"value", r.value}}, 201);
    }
  }

  /// Download the global model, train locally, upload item deltas.
  void train_round(const transport& send) {
    const auto global = wire::global_from_json(call(send, "GET", "/fl/global", nullptr));
    auto result = local_train(model_, global, ratings_, hp_);
    model_ = std::move(result.local);
    for (double v : model_.p) history_.push_back(v);
    history_.push_back(model_.b);
    result.update.client_round_token = username_ + "-" + std::to_string(global.version);
    call(send, "POST", "/fl/update", wire::to_json(result.update), 202);
  }

  /// Requests a ranked list, supplying preference scores computed on-device.
  json recommend(const transport& send, const geo_point& where, double radius_km, double a,
                 std::size_t k, const std::string& category) {
    const auto global = wire::global_from_json(call(send, "GET", "/fl/global", nullptr));
    const auto catalog = call(send, "GET", "/pois", nullptr);
    json prefs = json::object();
    for (const auto& p : catalog.at("pois")) {
      const auto id = p.at("id").get<std::string>();
      if (global.items.contains(id)) prefs[id] = predict(model_, global, id);
    }
    return call(send, "POST", "/recommend",
                {{"lat", where.lat()},
                 {"lon", where.lon()},
                 {"radius_km", radius_km},
                 {"alpha", a},
                 {"k", k},
                 {"category", category},
                 {"raw_prefs", std::move(prefs)}});
  }

  json call(const transport& send, const std::string& method, const std::string& path,
            const json& body, int expected_status = 200) const {
    api_request req{method, path, {}, body.is_null() ? std::string() : body.dump(), token_};
    const auto resp = send(req);
    if (resp.status != expected_status) {
      throw error(error_code::conflict, method + " " + path + " returned " +
                                            std::to_string(resp.status) + ": " + resp.body);
    }
    return json::parse(resp.body);
  }

 private:
  std::string username_;
  std::string password_;
  std::vector<rating> ratings_;
  hyperparams hp_;
  local_model model_;
  std::string token_;
  std::vector<double> history_;
};

struct demo_options {
  std::uint64_t seed = 7;
  grid_spec grid;
  int restaurants = 8;
  int rounds = 50;
  double radius_km = 1.0;
  hyperparams hp;
  /// Empty: in-memory service.
  std::string data_dir;
  /// Restart the service from data_dir after this many rounds.
  std::optional<int> restart_after_round;
  /// When set, every client-to-server request is appended here.
  std::vector<captured_request>* traffic = nullptr;
  /// When set, receives every user-side parameter value the clients held.
  std::vector<double>* private_values = nullptr;
};

struct demo_assertion {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct demo_report {
  json document;
  std::vector<demo_assertion> assertions;

  bool passed() const {
    return std::all_of(assertions.begin(), assertions.end(), [](const auto& a) { return a.passed; });
  }
};

namespace detail {

inline std::vector<std::string> list_ids(const json& items) {
  std::vector<std::string> out;
  for (const auto& it : items) out.push_back(it.at("poi").at("id").get<std::string>());
  return out;
}

inline bool sorted_by(const json& items, const char* key, bool ascending) {
  for (std::size_t i = 1; i < items.size(); ++i) {
    const double prev = items[i - 1].at(key).get<double>();
    const double cur = items[i].at(key).get<double>();
    if (ascending ? cur < prev : cur > prev) return false;
  }
  return true;
}

inline std::string join(const std::vector<std::string>& ids) {
  std::string out;
  for (const auto& id : ids) out += (out.empty() ? "" : ",") + id;
  return out;
}

/// Candidate order by one component score, descending, with the ranking
/// tie-break (distance, then id).
inline std::vector<std::string> order_by(const json& items, const char* key) {
  std::vector<const json*> rows;
  for (const auto& it : items) rows.push_back(&it);
  std::sort(rows.begin(), rows.end(), [key](const json* a, const json* b) {
    const double x = a->at(key).get<double>(), y = b->at(key).get<double>();
    if (x != y) return x > y;
    const double da = a->at("distance_km").get<double>(), db = b->at("distance_km").get<double>();
    if (da != db) return da < db;
    return a->at("poi").at("id").get<std::string>() < b->at("poi").at("id").get<std::string>();
  });
  std::vector<std::string> out;
  for (const auto* r : rows) out.push_back(r->at("poi").at("id").get<std::string>());
  return out;
}

}  // namespace detail

/// Replays the two-user demonstration: bootstrap, federated rounds, the
/// alpha sweep for user 1 and alpha 0.3 for user 2, then checks the four
/// qualitative claims.
inline demo_report run_demo(const demo_options& opts) {
  service_config cfg;
  cfg.data_dir = opts.data_dir;
  cfg.password_hash_iterations = 1000;
  cfg.hp = opts.hp;
  cfg.hp.seed = opts.seed;
  cfg.aqi_score_lo = opts.grid.aqi_lo;
  cfg.aqi_score_hi = opts.grid.aqi_hi;

  auto svc = std::make_unique<service>(cfg);
  transport direct = [&svc](const api_request& req) { return svc->handle(req); };
  auto sender = [&](const std::string& who) -> transport {
    return [&, who](const api_request& req) {
      if (opts.traffic) opts.traffic->push_back({who, req});
      return direct(req);
    };
  };

  const auto sensors = generate_sensor_grid(opts.grid, opts.seed);
  const auto pois = generate_demo_pois(opts.grid, opts.seed, opts.restaurants);

  demo_client op("operator", "operator-pass", {}, cfg.hp);
  const auto op_send = sender("operator");
  op.register_account(op_send);
  op.login(op_send);
  json poi_docs = json::array();
  for (const auto& p : pois) poi_docs.push_back(wire::to_json(p));
  op.call(op_send, "POST", "/pois", {{"pois", poi_docs}}, 201);
  json sensor_docs = json::array();
  for (const auto& r : sensors) sensor_docs.push_back(wire::to_json(r));
  op.call(op_send, "POST", "/sensors/readings", {{"readings", sensor_docs}});

  const auto [profile1, profile2] = generate_demo_users(*svc->catalog(), opts.seed);
  demo_client user1(profile1.username, "pass-1", profile1.ratings, cfg.hp);
  demo_client user2(profile2.username, "pass-2", profile2.ratings, cfg.hp);
  const auto send1 = sender(user1.username());
  const auto send2 = sender(user2.username());
  for (auto* u : {&user1, &user2}) {
    const auto& send = u == &user1 ? send1 : send2;
    u->register_account(send);
    u->login(send);
    u->submit_ratings(send);
  }

  for (int round = 1; round <= opts.rounds; ++round) {
    user1.train_round(send1);
    user2.train_round(send2);
    op.call(op_send, "POST", "/fl/round", nullptr);
    if (opts.restart_after_round && *opts.restart_after_round == round) {
      svc.reset();
      svc = std::make_unique<service>(cfg);
      op.login(op_send);
      user1.login(send1);
      user2.login(send2);
    }
  }

  const auto& where = opts.grid.center;
  const std::size_t k = pois.size();
  const auto a0 = user1.recommend(send1, where, opts.radius_km, 0.0, k, "restaurant");
  const auto a05 = user1.recommend(send1, where, opts.radius_km, 0.5, k, "restaurant");
  const auto a1 = user1.recommend(send1, where, opts.radius_km, 1.0, k, "restaurant");
  const auto u2 = user2.recommend(send2, where, opts.radius_km, 0.3, k, "restaurant");

  if (opts.private_values) {
    for (const auto* u : {&user1, &user2}) {
      opts.private_values->insert(opts.private_values->end(), u->private_history().begin(),
                                  u->private_history().end());
    }
  }

  demo_report report;
  const auto& items0 = a0.at("items");
  const auto& items05 = a05.at("items");
  const auto& items1 = a1.at("items");
  const auto& items_u2 = u2.at("items");
  const auto ids0 = detail::list_ids(items0);
  const auto ids05 = detail::list_ids(items05);
  const auto ids1 = detail::list_ids(items1);
  const auto ids_u2 = detail::list_ids(items_u2);
  const auto aqi_order = detail::order_by(items05, "s_aqi");
  const auto mf_order = detail::order_by(items05, "s_mf");

  report.assertions.push_back(
      {"alpha0_aqi_ascending", detail::sorted_by(items0, "aqi", true) && ids0 == aqi_order,
       "alpha=0 list: " + detail::join(ids0)});
  report.assertions.push_back(
      {"alpha1_mf_descending", detail::sorted_by(items1, "s_mf", false) && ids1 == mf_order,
       "alpha=1 list: " + detail::join(ids1)});
  const bool endpoints_disagree = aqi_order != mf_order;
  report.assertions.push_back(
      {"alpha05_distinct_from_endpoints", !endpoints_disagree || (ids05 != ids0 && ids05 != ids1),
       "alpha=0.5 list: " + detail::join(ids05) +
           (endpoints_disagree ? "" : " (endpoint orders agree; check vacuous)")});
  report.assertions.push_back({"user2_distinct_from_user1_alpha1", ids_u2 != ids1,
                               "user2 alpha=0.3 list: " + detail::join(ids_u2)});

  json assertions = json::array();
  for (const auto& a : report.assertions) {
    assertions.push_back({{"name", a.name}, {"passed", a.passed}, {"detail", a.detail}});
  }
  json sensor_list = json::array();
  for (const auto& r : sensors) sensor_list.push_back(wire::to_json(r));
  report.document = {
      {"seed", opts.seed},
      {"center", {{"lat", where.lat()}, {"lon", where.lon()}}},
      {"grid",
       {{"side_km", opts.grid.side_km},
        {"n_per_side", opts.grid.n_per_side},
        {"aqi_lo", opts.grid.aqi_lo},
        {"aqi_hi", opts.grid.aqi_hi}}},
      {"aqi_score_band", {opts.grid.aqi_lo, opts.grid.aqi_hi}},
      {"rounds", opts.rounds},
      {"model_version", a1.at("model_version")},
      {"sensors", std::move(sensor_list)},
      {"user1", {{"alpha_0", a0}, {"alpha_0.5", a05}, {"alpha_1", a1}}},
      {"user2", {{"alpha_0.3", u2}}},
      {"assertions", std::move(assertions)},
      {"passed", report.passed()}};
  return report;
}

struct convergence_options {
  int users = 20;
  int items = 30;
  int rank = 2;
  int rounds = 50;
  std::uint64_t seed = 1;
  hyperparams hp;
  /// Items each user has rated. Must stay below the step-size stability
  /// limit of full-batch descent on the summed loss (about 1/lr - 1).
  int ratings_per_user = 18;
  /// Fraction of each user's ratings held out for evaluation.
  double holdout = 0.2;
  /// Factor coordinates ~ N(factor_mean, factor_stddev^2).
  double factor_mean = 1.3;
  double factor_stddev = 0.5;
  double noise_stddev = 0.1;
  execution_mode mode = execution_mode::sequential;
};

struct convergence_report {
  /// rmse[0] is before any training; rmse[r] after round r.
  std::vector<double> rmse;
  std::size_t train_ratings = 0;
  std::size_t test_ratings = 0;

  double ratio() const { return rmse.back() / rmse.front(); }

  json to_json() const {
    return {{"rmse", rmse},
            {"initial_rmse", rmse.front()},
            {"final_rmse", rmse.back()},
            {"ratio", ratio()},
            {"train_ratings", train_ratings},
            {"test_ratings", test_ratings}};
  }
};

struct synthetic_ratings {
  std::vector<rating> train;
  std::vector<rating> test;
  std::vector<std::string> users;
  std::vector<std::string> items;
};

/// Ratings from a seeded low-rank model, r = clamp(round(mu + p.q + noise), 1, 5),
/// with mu = 3 - rank * factor_mean^2 so ratings centre on 3. Each user rates
/// `ratings_per_user` distinct items; round(holdout * ratings_per_user) of them
/// go to the test split.
inline synthetic_ratings make_synthetic_ratings(const convergence_options& o) {
  if (o.users < 1 || o.items < 1 || o.rank < 1) throw error(error_code::config_error, "sizes must be >= 1");
  if (o.ratings_per_user < 2 || o.ratings_per_user > o.items) {
    throw error(error_code::config_error, "ratings_per_user must be in [2, items]");
  }
  if (!(o.holdout > 0.0 && o.holdout < 1.0)) throw error(error_code::config_error, "holdout must be in (0, 1)");
  seeded_rng rng(o.seed);
  synthetic_ratings out;
  auto factors = [&](int n, const char* prefix, std::vector<std::string>& ids) {
    std::vector<std::vector<double>> f(n);
    for (int j = 0; j < n; ++j) {
      char id[16];
      std::snprintf(id, sizeof(id), "%s%03d", prefix, j);
      ids.push_back(id);
      for (int k = 0; k < o.rank; ++k) f[j].push_back(rng.normal(o.factor_mean, o.factor_stddev));
    }
    return f;
  };
  const auto p = factors(o.users, "u", out.users);
  const auto q = factors(o.items, "i", out.items);
  const double mu = 3.0 - o.rank * o.factor_mean * o.factor_mean;
  const auto n_test = static_cast<int>(std::lround(o.holdout * o.ratings_per_user));

  std::vector<int> order(o.items);
  for (int u = 0; u < o.users; ++u) {
    for (int i = 0; i < o.items; ++i) order[i] = i;
    for (int i = o.items; i > 1; --i) std::swap(order[i - 1], order[rng.index(static_cast<std::uint64_t>(i))]);
    for (int j = 0; j < o.ratings_per_user; ++j) {
      const int i = order[j];
      double dot = 0.0;
      for (int k = 0; k < o.rank; ++k) dot += p[u][k] * q[i][k];
      const double r = std::clamp(std::round(mu + dot + rng.normal(0, o.noise_stddev)), 1.0, 5.0);
      (j < n_test ? out.test : out.train).push_back({out.users[u], out.items[i], r});
    }
  }
  return out;
}

inline double heldout_rmse(const std::vector<std::unique_ptr<local_client>>& clients,
                           const global_item_params& g, const std::vector<rating>& test) {
  std::map<std::string, const local_model*> models;
  for (const auto& c : clients) models[c->id()] = &c->model();
  double se = 0.0;
  for (const auto& r : test) {
    const double e = r.value - predict(*models.at(r.user_id), g, r.poi_id);
    se += e * e;
  }
  return std::sqrt(se / static_cast<double>(test.size()));
}

/// Federated training on a synthetic low-rank instance, recording held-out
/// RMSE after every round.
inline convergence_report run_convergence(const convergence_options& o) {
  const auto data = make_synthetic_ratings(o);
  if (data.test.empty() || data.train.empty()) {
    throw error(error_code::config_error, "instance too small for a train/test split");
  }
  std::map<std::string, std::vector<rating>> by_user;
  for (const auto& r : data.train) by_user[r.user_id].push_back(r);

  std::vector<std::unique_ptr<local_client>> clients;
  for (const auto& u : data.users) {
    clients.push_back(std::make_unique<local_client>(u, by_user[u], o.hp, o.hp.d));
  }
  std::vector<fl_client*> pool;
  for (auto& c : clients) pool.push_back(c.get());

  auto global = make_genesis(data.items, genesis_mean(data.train), o.hp.d, o.hp.seed ^ o.seed);

  convergence_report report;
  report.train_ratings = data.train.size();
  report.test_ratings = data.test.size();
  report.rmse.push_back(heldout_rmse(clients, global, data.test));
  for (int round = 0; round < o.rounds; ++round) {
    round_options ro;
    ro.seed = o.seed + static_cast<std::uint64_t>(round);
    ro.mode = o.mode;
    global = run_round(global, pool, ro).params;
    report.rmse.push_back(heldout_rmse(clients, global, data.test));
  }
  return report;
}

}  // namespace airtown::sim

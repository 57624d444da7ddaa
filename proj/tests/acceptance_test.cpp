// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <latch>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "airtown/aqi_field.hpp"
#include "airtown/fed.hpp"
#include "airtown/random.hpp"
#include "airtown/rerank.hpp"
#include "oracles.hpp"
#include "service_fixture.hpp"

using namespace airtown;
using fixture::json;

namespace {

struct outcome {
  bool passed = true;
  std::string detail;
};

/// Collects failures; the first few messages end up in the detail line.
class checker {
 public:
  void expect(bool ok, const std::string& what) {
    ++checks_;
    if (ok) return;
    ++failures_;
    if (failures_ <= 3) messages_ << (failures_ > 1 ? "; " : "") << what;
  }
  outcome done(const std::string& summary) const {
    if (failures_ == 0) return {true, summary};
    std::ostringstream out;
    out << failures_ << "/" << checks_ << " checks failed: " << messages_.str();
    return {false, out.str()};
  }

 private:
  std::size_t checks_ = 0;
  std::size_t failures_ = 0;
  std::ostringstream messages_;
};

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1. demo replication

outcome demo_replication() {
  checker c;
  const auto t0 = std::chrono::steady_clock::now();
  const auto main_run = sim::run_demo({});
  for (const auto& a : main_run.assertions) c.expect(a.passed, "seed 7 " + a.name + ": " + a.detail);
  std::size_t vacuous = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    sim::demo_options opts;
    opts.seed = seed;
    const auto r = sim::run_demo(opts);
    for (const auto& a : r.assertions) {
      c.expect(a.passed, "seed " + std::to_string(seed) + " " + a.name + ": " + a.detail);
      if (a.name == "alpha05_distinct_from_endpoints" && a.detail.find("agree") != std::string::npos) ++vacuous;
    }
  }
  const double elapsed = seconds_since(t0);
  c.expect(elapsed < 5.0, fmt("runtime %.2f s exceeds 5 s", elapsed));
  return c.done("seed 7 and seeds 1..20 pass all four assertions, " + std::to_string(vacuous) +
                " vacuous alpha=0.5 checks, " + fmt("%.2f s", elapsed));
}

// 2. interpolation exactness

outcome interpolation_exactness() {
  checker c;
  const auto t0 = std::chrono::steady_clock::now();
  seeded_rng rng(2002);
  const geo_point center = sim::aldo_moro_square();
  double worst = 0.0;
  std::size_t nodes_checked = 0;
  for (int layout = 0; layout < 50; ++layout) {
    const std::size_t n = 1 + rng.index(64);
    std::vector<geo_point> sites;
    while (sites.size() < n) {
      const auto p = sim::offset(center, rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5));
      const bool crowded = std::any_of(sites.begin(), sites.end(), [&](const geo_point& q) {
        return oracle::chord_distance_km(p.lat(), p.lon(), q.lat(), q.lon()) < 0.01;
      });
      if (!crowded) sites.push_back(p);
    }
    std::vector<sensor_reading> readings;
    for (std::size_t i = 0; i < n; ++i) {
      readings.push_back({"s" + std::to_string(i), sites[i], rng.uniform(20.0, 70.0), std::nullopt, std::nullopt,
                          std::nullopt, sim::demo_timestamp});
    }
    const auto field = fit_interpolator(readings);
    for (const auto& r : readings) {
      const double rel = std::abs(interpolate(field, r.location) - r.aqi) / r.aqi;
      worst = std::max(worst, rel);
      ++nodes_checked;
      c.expect(rel <= 1e-6, "layout " + std::to_string(layout) + " node " + r.sensor_id + fmt(" rel %.3g", rel));
    }

    const double level = rng.uniform(20.0, 70.0);
    for (auto& r : readings) r.aqi = level;
    const auto flat = fit_interpolator(readings);
    for (int q = 0; q < 100; ++q) {
      const auto p = sim::offset(center, rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0));
      const double v = interpolate(flat, p);
      c.expect(v == level, "layout " + std::to_string(layout) + fmt(" constant field off by %.3g", v - level));
    }
  }
  const double elapsed = seconds_since(t0);
  c.expect(elapsed < 5.0, fmt("runtime %.2f s exceeds 5 s", elapsed));
  return c.done(std::to_string(nodes_checked) + " nodes, worst relative error " + fmt("%.2e", worst) +
                ", 5000 constant-field queries exact, " + fmt("%.2f s", elapsed));
}

// 3. FedAvg oracle equivalence

outcome fedavg_equivalence() {
  checker c;
  seeded_rng rng(3003);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + rng.index(4);
    std::vector<std::string> ids;
    const std::size_t n_items = 1 + rng.index(8);
    for (std::size_t i = 0; i < n_items; ++i) ids.push_back("i" + std::to_string(i));
    auto g = make_genesis(ids, rng.uniform(2.0, 4.0), d, 500 + trial);
    g.version = rng.index(10);
    const std::size_t k = 1 + rng.index(5);
    std::vector<client_update> ups;
    std::vector<std::vector<oracle::delta>> mirror;
    for (std::size_t cl = 0; cl < k; ++cl) {
      client_update u;
      u.client_round_token = "c" + std::to_string(cl);
      u.base_version = g.version;
      std::vector<oracle::delta> m;
      for (const auto& id : ids) {
        if (rng.uniform01() < 0.4) continue;
        item_delta delta{std::vector<double>(d), rng.normal(0, 1), static_cast<std::uint32_t>(1 + rng.index(6))};
        for (auto& v : delta.delta_q) v = rng.normal(0, 1);
        m.push_back({id, delta.delta_q, delta.delta_b, static_cast<double>(delta.weight)});
        u.items[id] = std::move(delta);
      }
      ups.push_back(std::move(u));
      mirror.push_back(std::move(m));
    }
    std::map<std::string, std::pair<std::vector<double>, double>> plain;
    for (const auto& [id, item] : g.items) plain[id] = {item.q, item.b};
    const auto expected = oracle::fedavg(plain, mirror);
    const auto out = aggregate(g, ups);
    for (const auto& [id, item] : out.params.items) {
      for (std::size_t j = 0; j < d; ++j) {
        const double err = std::abs(item.q[j] - expected.at(id).first[j]);
        worst = std::max(worst, err);
        c.expect(err <= 1e-9, "trial " + std::to_string(trial) + " item " + id + fmt(" q err %.3g", err));
      }
      const double err = std::abs(item.b - expected.at(id).second);
      worst = std::max(worst, err);
      c.expect(err <= 1e-9, "trial " + std::to_string(trial) + " item " + id + fmt(" b err %.3g", err));
    }
    c.expect(out.applied && out.params.version == g.version + 1, "trial " + std::to_string(trial) + " version");
    c.expect(out.params.mu == g.mu, "trial " + std::to_string(trial) + " mu changed");
  }
  return c.done("100 instances, worst abs error " + fmt("%.2e", worst));
}

// 4. centralized bridge

outcome centralized_bridge() {
  checker c;
  seeded_rng rng(4004);
  double worst = 0.0;
  for (int trial = 0; trial < 25; ++trial) {
    hyperparams hp;
    hp.d = 1 + rng.index(4);
    hp.epochs_per_round = 1 + static_cast<int>(rng.index(10));
    hp.reg = rng.uniform(0.0, 0.1);
    std::vector<std::string> items;
    const std::size_t n_items = 2 + rng.index(9);
    for (std::size_t i = 0; i < n_items; ++i) items.push_back("p" + std::to_string(i));
    std::vector<rating> ratings;
    std::vector<oracle::obs> data;
    for (const auto& id : items) {
      if (rng.uniform01() < 0.25) continue;
      const double v = 1.0 + static_cast<double>(rng.index(5));
      ratings.push_back({"solo", id, v});
      data.push_back({"solo", id, v});
    }
    if (ratings.empty()) {
      ratings.push_back({"solo", items[0], 3.0});
      data.push_back({"solo", items[0], 3.0});
    }
    const auto g = make_genesis(items, rng.uniform(2.5, 3.5), hp.d, 900 + trial);

    local_client solo("solo", ratings, hp, hp.d);
    std::vector<fl_client*> pool = {&solo};
    const auto after = run_round(g, pool, {}).params;

    oracle::mf_state s;
    s.mu = g.mu;
    s.p["solo"] = std::vector<double>(hp.d, 0.0);
    s.bu["solo"] = 0.0;
    for (const auto& [id, item] : g.items) {
      s.q[id] = item.q;
      s.bi[id] = item.b;
    }
    const auto central = oracle::centralized_train(s, data, hp.lr, hp.reg, hp.epochs_per_round);
    for (const auto& id : items) {
      for (std::size_t k = 0; k < hp.d; ++k) {
        const double err = std::abs(after.items.at(id).q[k] - central.q.at(id)[k]);
        worst = std::max(worst, err);
        c.expect(err <= 1e-9, "trial " + std::to_string(trial) + " " + id + fmt(" q err %.3g", err));
      }
      const double err = std::abs(after.items.at(id).b - central.bi.at(id));
      worst = std::max(worst, err);
      c.expect(err <= 1e-9, "trial " + std::to_string(trial) + " " + id + fmt(" b err %.3g", err));
    }
  }
  return c.done("25 single-client instances, worst item-parameter error " + fmt("%.2e", worst));
}

// 5. convergence

outcome convergence() {
  checker c;
  const auto t0 = std::chrono::steady_clock::now();
  sim::convergence_options opts;
  opts.rounds = 50;
  opts.seed = 1;
  const auto r = sim::run_convergence(opts);
  const double elapsed = seconds_since(t0);
  c.expect(r.rmse.size() == 51, "expected 51 RMSE values");
  c.expect(r.rmse.back() <= 0.5 * r.rmse.front(), fmt("ratio %.4f above 0.5", r.ratio()));
  c.expect(elapsed < 30.0, fmt("runtime %.2f s exceeds 30 s", elapsed));
  std::ostringstream out;
  out << "held-out RMSE " << fmt("%.4f", r.rmse.front()) << " -> " << fmt("%.4f", r.rmse.back()) << " (ratio "
      << fmt("%.4f", r.ratio()) << "), " << fmt("%.2f s", elapsed);
  return c.done(out.str());
}

// 6. gradient check

double rel_diff(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

outcome gradient_check() {
  checker c;
  seeded_rng rng(6006);
  double worst = 0.0;
  std::size_t compared = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + rng.index(4);
    const std::size_t n_items = 1 + rng.index(10);
    const double reg = rng.uniform(0.0, 0.1);
    global_item_params global;
    global.mu = rng.uniform(2.0, 4.0);
    global.dim = d;
    local_model user = make_local_model("u", d);
    for (auto& v : user.p) v = rng.normal(0, 0.7);
    user.b = rng.normal(0, 0.3);
    std::vector<rating> ratings;
    oracle::mf_state s;
    s.mu = global.mu;
    s.p["u"] = user.p;
    s.bu["u"] = user.b;
    std::vector<oracle::obs> data;
    for (std::size_t i = 0; i < n_items; ++i) {
      item_params item{std::vector<double>(d), rng.normal(0, 0.3)};
      for (auto& v : item.q) v = rng.normal(0, 0.7);
      const std::string id = "i" + std::to_string(i);
      global.items[id] = item;
      s.q[id] = item.q;
      s.bi[id] = item.b;
      const double v = std::round(rng.uniform(1.0, 5.0));
      ratings.push_back({"u", id, v});
      data.push_back({"u", id, v});
    }
    const auto g = loss_and_gradients(user, global, ratings, reg);
    auto compare = [&](double analytic, double numeric, const std::string& what) {
      const double e = rel_diff(analytic, numeric);
      worst = std::max(worst, e);
      ++compared;
      c.expect(e < 1e-5, "trial " + std::to_string(trial) + " " + what + fmt(" rel %.3g", e));
    };
    for (std::size_t k = 0; k < d; ++k) {
      compare(g.p[k], oracle::central_difference(s, data, reg, [k](oracle::mf_state& m) { return &m.p["u"][k]; }),
              "p");
    }
    compare(g.b_u, oracle::central_difference(s, data, reg, [](oracle::mf_state& m) { return &m.bu["u"]; }), "b_u");
    for (const auto& [id, ig] : g.items) {
      for (std::size_t k = 0; k < d; ++k) {
        compare(ig.q[k],
                oracle::central_difference(s, data, reg, [&, k](oracle::mf_state& m) { return &m.q[id][k]; }),
                "q " + id);
      }
      compare(ig.b, oracle::central_difference(s, data, reg, [&](oracle::mf_state& m) { return &m.bi[id]; }),
              "b " + id);
    }
  }
  return c.done(std::to_string(compared) + " partial derivatives over 100 instances, worst relative error " +
                fmt("%.2e", worst));
}

// 7. privacy invariant

void collect_keys(const json& j, std::set<std::string>& keys) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) {
      keys.insert(k);
      collect_keys(v, keys);
    }
  } else if (j.is_array()) {
    for (const auto& v : j) collect_keys(v, keys);
  }
}

outcome privacy_invariant() {
  checker c;
  std::vector<sim::captured_request> traffic;
  std::vector<double> private_values;
  sim::demo_options opts;
  opts.traffic = &traffic;
  opts.private_values = &private_values;
  const auto report = sim::run_demo(opts);
  c.expect(report.passed(), "demo assertions failed during the traffic capture");
  c.expect(!traffic.empty(), "no traffic captured");

  const std::set<std::string> update_fields = {"client_round_token", "base_version", "items",
                                               "item_id", "delta_q", "delta_b", "weight"};
  const std::set<std::string> user_side = {"p", "p_u", "b_u", "user_embedding", "user_bias", "embedding", "bu"};
  std::size_t updates = 0;
  for (const auto& cap : traffic) {
    if (cap.request.body.empty()) continue;
    std::set<std::string> keys;
    collect_keys(json::parse(cap.request.body), keys);
    for (const auto& k : keys) c.expect(!user_side.contains(k), cap.request.path + " carries field " + k);
    if (cap.request.method == "POST" && cap.request.path == "/fl/update") {
      ++updates;
      for (const auto& k : keys) c.expect(update_fields.contains(k), "/fl/update carries field " + k);
    }
  }
  c.expect(updates == 2u * 50u, "expected 100 update uploads, saw " + std::to_string(updates));

  std::size_t scanned = 0;
  for (double v : private_values) {
    const auto text = json(v).dump();
    if (v == 0.0 || text.size() < 6) continue;
    ++scanned;
    for (const auto& cap : traffic) {
      c.expect(cap.request.body.find(text) == std::string::npos,
               cap.request.path + " body contains user-side value " + text);
    }
  }
  c.expect(scanned > private_values.size() / 2, "too few distinctive private values to scan");
  return c.done(std::to_string(traffic.size()) + " requests, " + std::to_string(updates) +
                " update schemas item-only, " + std::to_string(scanned) + " user-side values absent from every body");
}

// 8. rank monotonicity

std::vector<std::string> sorted_ids(std::vector<candidate> cs, double candidate::*key) {
  std::sort(cs.begin(), cs.end(), [key](const candidate& x, const candidate& y) {
    if (x.*key != y.*key) return x.*key > y.*key;
    if (x.distance_km != y.distance_km) return x.distance_km < y.distance_km;
    return x.place.id < y.place.id;
  });
  std::vector<std::string> out;
  for (const auto& x : cs) out.push_back(x.place.id);
  return out;
}

std::vector<std::string> ids_of(const std::vector<ranked_candidate>& list) {
  std::vector<std::string> out;
  for (const auto& x : list) out.push_back(x.place.id);
  return out;
}

outcome rank_monotonicity() {
  checker c;
  seeded_rng rng(8008);
  const geo_point here = sim::aldo_moro_square();
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.index(15);
    std::vector<candidate> cs;
    for (std::size_t i = 0; i < n; ++i) {
      const double aqi = rng.uniform(0.0, 300.0);
      cs.push_back({poi{"c" + std::to_string(i), "c", "restaurant", here}, rng.uniform(0.0, 2.0), aqi,
                    rng.uniform01(), aqi_to_score(aqi)});
    }
    const auto best = std::max_element(cs.begin(), cs.end(), [](const candidate& x, const candidate& y) {
                        return x.s_aqi < y.s_aqi;
                      })->place.id;

    std::vector<double> grid;
    for (int i = 0; i <= 10; ++i) grid.push_back(i / 10.0);
    for (int i = 0; i < 5; ++i) grid.push_back(rng.uniform01());
    std::sort(grid.begin(), grid.end());
    std::size_t previous = 0;
    for (double a : grid) {
      const auto list = rank_candidates(cs, alpha(a), n);
      const auto it = std::find_if(list.begin(), list.end(), [&](const auto& x) { return x.place.id == best; });
      c.expect(it->rank >= previous, "trial " + std::to_string(trial) + fmt(" rank improved at alpha %.3f", a));
      previous = it->rank;
    }

    const auto zero = rank_candidates(cs, alpha(0.0), n);
    const auto one = rank_candidates(cs, alpha(1.0), n);
    c.expect(ids_of(zero) == sorted_ids(cs, &candidate::s_aqi), "trial " + std::to_string(trial) + " alpha 0 order");
    c.expect(std::is_sorted(zero.begin(), zero.end(), [](const auto& x, const auto& y) { return x.aqi < y.aqi; }),
             "trial " + std::to_string(trial) + " alpha 0 list not AQI-ascending");
    c.expect(ids_of(one) == sorted_ids(cs, &candidate::s_mf), "trial " + std::to_string(trial) + " alpha 1 order");
    c.expect(std::is_sorted(one.begin(), one.end(), [](const auto& x, const auto& y) { return x.s_mf > y.s_mf; }),
             "trial " + std::to_string(trial) + " alpha 1 list not s_mf-descending");
  }
  return c.done("1000 candidate sets x 16 alphas, best-air candidate never rises, endpoint orders exact");
}

// 9. service round-trip

outcome service_round_trip() {
  checker c;
  {
    const auto uninterrupted = sim::run_demo({});
    fixture::temp_dir dir("accept");
    sim::demo_options opts;
    opts.data_dir = dir.str();
    opts.restart_after_round = 25;
    const auto restarted = sim::run_demo(opts);
    c.expect(restarted.document == uninterrupted.document, "restart after round 25 changed the demo responses");
  }

  service svc(fixture::quick_config());
  auto op = fixture::signed_in(svc, "op");
  fixture::load_demo_world(op, 9);
  std::map<std::uint64_t, std::shared_ptr<const global_item_params>> snapshots;
  snapshots[svc.global_snapshot()->version] = svc.global_snapshot();
  std::vector<json> responses;
  std::mutex responses_mu;
  int failed_calls = 0;
  const std::vector<rating> mine = {{"u1", "r01", 5.0}, {"u1", "r03", 1.0}, {"u1", "r05", 4.0}, {"u1", "r07", 2.0}};

  for (int round = 0; round < 10; ++round) {
    std::latch start(101);
    std::vector<std::thread> readers;
    for (int i = 0; i < 100; ++i) {
      readers.emplace_back([&] {
        start.arrive_and_wait();
        const auto r = op.call("GET", "/recommend", nullptr, {{"lat", "41.1258"}, {"lon", "16.8674"}, {"alpha", "1"}});
        std::lock_guard lock(responses_mu);
        if (r.status == 200) {
          responses.push_back(r.body);
        } else {
          ++failed_calls;
        }
      });
    }
    const auto g = svc.global_snapshot();
    const auto t = local_train(make_local_model("u1", g->dim), *g, mine, svc.config().hp);
    start.arrive_and_wait();
    svc.submit_update(t.update);
    svc.trigger_round();
    const auto next = svc.global_snapshot();
    snapshots[next->version] = next;
    for (auto& th : readers) th.join();
  }

  c.expect(failed_calls == 0, std::to_string(failed_calls) + " recommend calls failed");
  c.expect(snapshots.size() == 11, "expected 11 model versions");
  std::set<std::uint64_t> seen;
  for (const auto& body : responses) {
    const auto v = body.at("model_version").get<std::uint64_t>();
    seen.insert(v);
    const auto it = snapshots.find(v);
    c.expect(it != snapshots.end(), "response reports unknown version " + std::to_string(v));
    if (it == snapshots.end()) continue;
    std::vector<scored_item> raw;
    for (const auto& item : body.at("items")) {
      const auto id = item.at("poi").at("id").get<std::string>();
      raw.push_back({id, predict_cold(*it->second, id)});
    }
    const auto norm = normalize_scores(raw);
    bool consistent = norm.size() == body.at("items").size();
    for (std::size_t i = 0; consistent && i < norm.size(); ++i) {
      consistent = norm[i].score == body.at("items")[i].at("s_mf").get<double>();
    }
    c.expect(consistent, "response at version " + std::to_string(v) + " mixes model versions");
  }
  c.expect(responses.size() == 1000, "expected 1000 responses");
  return c.done("restart mid-demo reproduces every response; " + std::to_string(responses.size()) +
                " concurrent recommends across 10 rounds saw " + std::to_string(seen.size()) +
                " versions, none torn");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<outcome()>>> criteria = {
      {"demo replication", demo_replication},
      {"interpolation exactness", interpolation_exactness},
      {"fedavg oracle equivalence", fedavg_equivalence},
      {"centralized bridge", centralized_bridge},
      {"convergence", convergence},
      {"gradient check", gradient_check},
      {"privacy invariant", privacy_invariant},
      {"rank monotonicity", rank_monotonicity},
      {"service round-trip", service_round_trip},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.passed) ++failures;
    std::printf("%s %zu %s (%.0f ms): %s\n", o.passed ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                1000.0 * seconds_since(t0), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}

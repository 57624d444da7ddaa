#pragma once

#include <charconv>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "airtown/aqi_field.hpp"
#include "airtown/auth.hpp"
#include "airtown/cf_model.hpp"
#include "airtown/config.hpp"
#include "airtown/error.hpp"
#include "airtown/fed.hpp"
#include "airtown/geo.hpp"
#include "airtown/rerank.hpp"
#include "airtown/store.hpp"
#include "airtown/timestamp.hpp"
#include "airtown/wire.hpp"

namespace airtown {

/// Transport-neutral request. The HTTP adapter and the in-process
/// simulator both go through service::handle with these.
struct api_request {
  std::string method;
  std::string path;
  std::map<std::string, std::string, std::less<>> query;
  std::string body;
  std::string bearer_token;
};

struct api_response {
  int status = 200;
  std::string body;
};

struct account {
  std::string user_id;
  std::string username;
  auth::password_hash password;
  unix_seconds created_at = 0;
};

struct recommendation_request {
  geo_point center;
  double radius_km = 1.0;
  alpha weight{0.5};
  std::size_t k = default_top_k;
  std::optional<std::string> category;
  /// Client-computed raw preference scores keyed by poi id. When present
  /// they replace the server's cold-user predictor.
  std::optional<std::map<std::string, double, std::less<>>> raw_prefs;
};

struct recommendation_response {
  std::uint64_t model_version = 0;
  unix_seconds field_fitted_at = 0;
  double alpha = 0.0;
  std::vector<ranked_candidate> items;
};

inline int http_status(error_code code) {
  switch (code) {
    case error_code::invalid_argument:
    case error_code::config_error:
    case error_code::parse_error:
      return 400;
    case error_code::authentication_failed:
    case error_code::token_expired:
      return 401;
    case error_code::not_found:
      return 404;
    case error_code::duplicate_username:
    case error_code::conflict:
    case error_code::stale_update:
      return 409;
    case error_code::item_not_in_model:
    case error_code::nothing_to_train:
    case error_code::no_candidates:
    case error_code::dimension_mismatch:
    case error_code::catalog_too_small:
      return 422;
    case error_code::no_sensor_data:
    case error_code::degenerate_sensor_layout:
      return 503;
  }
  return 500;
}

namespace detail {

/// Immutable value behind a swappable pointer. Readers copy the pointer and
/// then work lock-free on a consistent snapshot.
template <typename T>
class snapshot_slot {
 public:
  std::shared_ptr<const T> get() const {
    std::lock_guard lock(mu_);
    return value_;
  }
  void set(std::shared_ptr<const T> next) {
    std::lock_guard lock(mu_);
    value_ = std::move(next);
  }

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const T> value_;
};

inline std::int64_t system_clock_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace detail

/// The service layer: accounts, POI/sensor/rating persistence, the
/// recommendation pipeline and the federated round endpoints.
class service {
 public:
  using clock_fn = std::function<std::int64_t()>;

  static constexpr std::string_view pois_file = "pois.csv";
  static constexpr std::string_view readings_file = "readings.jsonl";
  static constexpr std::string_view accounts_file = "accounts.json";
  static constexpr std::string_view model_file = "global_model.json";
  static constexpr std::string_view ratings_log = "ratings.log";

  explicit service(service_config cfg, clock_fn clock = detail::system_clock_seconds)
      : cfg_(std::move(cfg)), clock_(std::move(clock)), store_(cfg_.data_dir) {
    cfg_.validate();
    catalog_.set(std::make_shared<const poi_catalog>());
    load();
  }

  service(const service&) = delete;
  service& operator=(const service&) = delete;

  const service_config& config() const noexcept { return cfg_; }

  // accounts

  account register_user(const std::string& username, const std::string& password) {
    if (username.empty() || password.empty()) {
      throw error(error_code::invalid_argument, "username and password are required");
    }
    std::lock_guard lock(accounts_mu_);
    if (accounts_.contains(username)) {
      throw error(error_code::duplicate_username, "username '" + username + "' is taken");
    }
    account acc{"u" + std::to_string(++user_seq_), username,
                auth::hash_password(password, cfg_.password_hash_iterations), clock_()};
    accounts_.emplace(username, acc);
    persist_accounts();
    return acc;
  }

  struct session_grant {
    std::string token;
    std::string user_id;
    std::int64_t expires_at;
  };

  session_grant login(const std::string& username, const std::string& password) {
    std::string user_id;
    {
      std::lock_guard lock(accounts_mu_);
      auto it = accounts_.find(username);
      if (it == accounts_.end() || !auth::verify_password(password, it->second.password)) {
        throw error(error_code::authentication_failed, "wrong username or password");
      }
      user_id = it->second.user_id;
    }
    const auto now = clock_();
    auto token = sessions_.issue(user_id, now, cfg_.token_expiry_s);
    return {std::move(token), std::move(user_id), now + cfg_.token_expiry_s};
  }

  std::string user_for_token(std::string_view token) const {
    return sessions_.resolve(token, clock_());
  }

  // catalog

  std::shared_ptr<const poi_catalog> catalog() const { return catalog_.get(); }

  /// Adds POIs atomically (all or none). New items join the global model
  /// with their deterministic initial parameters.
  std::size_t add_pois(const std::vector<poi>& pois) {
    std::lock_guard lock(catalog_mu_);
    auto current = catalog_.get();
    poi_catalog next = *current;
    for (const auto& p : pois) next = next.with(p);
    std::ostringstream out;
    write_catalog(out, next);
    store_.write_atomic(pois_file, out.str());
    catalog_.set(std::make_shared<const poi_catalog>(std::move(next)));
    extend_model();
    return pois.size();
  }

  // ratings

  void add_rating(const std::string& user_id, const std::string& poi_id, double value) {
    rating r{user_id, poi_id, value};
    validate_rating(r);
    if (!catalog_.get()->find(poi_id)) {
      throw error(error_code::not_found, "unknown poi '" + poi_id + "'");
    }
    std::lock_guard lock(ratings_mu_);
    std::ostringstream line;
    if (ratings_.empty() && !ratings_log_started_) {
      line << ratings_header << '\n';
      ratings_log_started_ = true;
    }
    write_rating_line(line, r);
    store_.append(ratings_log, line.str());
    ratings_[{user_id, poi_id}] = value;
  }

  std::vector<rating> ratings() const {
    std::lock_guard lock(ratings_mu_);
    std::vector<rating> out;
    for (const auto& [key, value] : ratings_) out.push_back({key.first, key.second, value});
    return out;
  }

  // sensors

  /// Validates the whole batch first; a bad record rejects everything and
  /// names its index. Returns the new field's fitted_at.
  unix_seconds ingest_readings(const std::vector<sensor_reading>& batch) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      try {
        validate_reading(batch[i]);
      } catch (const error& e) {
        throw error(e.code(), "reading " + std::to_string(i) + ": " + e.what());
      }
    }
    std::lock_guard lock(readings_mu_);
    auto merged = latest_;
    for (const auto& r : batch) {
      auto it = merged.find(r.sensor_id);
      if (it == merged.end()) {
        merged.emplace(r.sensor_id, r);
      } else if (supersedes(r, it->second)) {
        it->second = r;
      }
    }
    std::vector<sensor_reading> all;
    for (const auto& [id, r] : merged) all.push_back(r);
    auto field = std::make_shared<const aqi_field>(fit_interpolator(all));
    std::string doc;
    for (const auto& r : all) doc += wire::to_json(r).dump() + "\n";
    store_.write_atomic(readings_file, doc);
    latest_ = std::move(merged);
    field_.set(field);
    return field->fitted_at;
  }

  std::vector<sensor_reading> sensors() const {
    std::lock_guard lock(readings_mu_);
    std::vector<sensor_reading> out;
    for (const auto& [id, r] : latest_) out.push_back(r);
    return out;
  }

  std::shared_ptr<const aqi_field> field() const { return field_.get(); }

  double aqi_at(const geo_point& p) const {
    auto f = field_.get();
    if (!f) throw error(error_code::no_sensor_data, "no sensor data");
    return interpolate(*f, p);
  }

  // federated model

  /// Current global snapshot; creates the genesis model on first use.
  std::shared_ptr<const global_item_params> global_snapshot() {
    ensure_model();
    auto m = model_.get();
    if (!m) throw error(error_code::not_found, "no model: the POI catalog is empty");
    return m;
  }

  /// Queues an update for the next round after checking it against the
  /// current version. Returns the number of queued updates.
  std::size_t submit_update(client_update update) {
    ensure_model();
    std::lock_guard lock(fl_mu_);
    auto current = model_.get();
    if (!current) throw error(error_code::not_found, "no model: the POI catalog is empty");
    if (update.base_version != current->version) {
      throw error(error_code::stale_update,
                  "stale update: built against version " + std::to_string(update.base_version) +
                      ", current version is " + std::to_string(current->version));
    }
    detail::validate_update_shape(update, *current);
    pending_.push_back(std::move(update));
    return pending_.size();
  }

  /// Aggregates every update received since the last round. Readers keep
  /// using the previous snapshot until the new one is swapped in.
  round_report trigger_round() {
    ensure_model();
    std::lock_guard lock(fl_mu_);
    auto current = model_.get();
    if (!current) throw error(error_code::not_found, "no model: the POI catalog is empty");
    auto updates = std::move(pending_);
    pending_.clear();

    round_report report;
    report.version_before = current->version;
    report.sampled = updates.size();
    auto agg = aggregate(*current, updates);
    report.applied = agg.applied;
    report.participants = agg.participants;
    report.item_update_counts = std::move(agg.item_update_counts);
    report.version_after = agg.params.version;
    report.round_index = current->version + 1;
    if (agg.applied) {
      auto next = std::make_shared<const global_item_params>(std::move(agg.params));
      persist_model(*next);
      model_.set(std::move(next));
    }
    return report;
  }

  // recommendation pipeline

  recommendation_response recommend(const recommendation_request& req) {
    if (!(req.radius_km > 0.0) || !std::isfinite(req.radius_km)) {
      throw error(error_code::invalid_argument, "radius_km must be positive");
    }
    if (req.k < 1) throw error(error_code::invalid_argument, "k must be >= 1");
    ensure_model();
    const auto catalog = catalog_.get();
    const auto model = model_.get();
    const auto field = field_.get();

    recommendation_response resp;
    resp.model_version = model ? model->version : 0;
    resp.alpha = req.weight.value();
    if (field) resp.field_fitted_at = field->fitted_at;

    const auto hits = pois_within_radius(*catalog, req.center, req.radius_km, req.category);
    if (hits.empty()) return resp;
    if (!field) throw error(error_code::no_sensor_data, "no sensor data");

    std::vector<scored_item> raw;
    raw.reserve(hits.size());
    for (const auto& h : hits) {
      if (req.raw_prefs) {
        auto it = req.raw_prefs->find(h.place.id);
        if (it == req.raw_prefs->end()) {
          throw error(error_code::invalid_argument, "raw_prefs has no score for candidate '" + h.place.id + "'");
        }
        raw.push_back({h.place.id, it->second});
      } else {
        if (!model) throw error(error_code::item_not_in_model, "no model for cold-start scores");
        raw.push_back({h.place.id, predict_cold(*model, h.place.id)});
      }
    }
    const auto s_mf = normalize_scores(raw);

    std::vector<candidate> cands;
    cands.reserve(hits.size());
    for (std::size_t i = 0; i < hits.size(); ++i) {
      const double aqi = interpolate(*field, hits[i].place.location);
      cands.push_back({hits[i].place, hits[i].distance_km, aqi, s_mf[i].score,
                       aqi_to_score(aqi, cfg_.aqi_score_lo, cfg_.aqi_score_hi)});
    }
    resp.items = rank_candidates(cands, req.weight, req.k);
    return resp;
  }

  // router

  api_response handle(const api_request& req) {
    try {
      return route(req);
    } catch (const error& e) {
      nlohmann::json body = {{"error_code", std::string(to_string(e.code()))}, {"message", e.what()}};
      if (e.code() == error_code::stale_update) {
        if (auto m = model_.get()) body["current_version"] = m->version;
      }
      return {http_status(e.code()), body.dump()};
    } catch (const nlohmann::json::exception& e) {
      return {400, nlohmann::json{{"error_code", "parse_error"}, {"message", e.what()}}.dump()};
    }
  }

 private:
  using json = nlohmann::json;

  static api_response ok(const json& body, int status = 200) { return {status, body.dump()}; }

  static json parse_body(const api_request& req) {
    if (req.body.empty()) throw error(error_code::parse_error, "request body is required");
    try {
      return json::parse(req.body);
    } catch (const json::parse_error& e) {
      throw error(error_code::parse_error, std::string("malformed JSON: ") + e.what());
    }
  }

  static std::optional<std::string> query(const api_request& req, std::string_view key) {
    auto it = req.query.find(key);
    if (it == req.query.end()) return std::nullopt;
    return it->second;
  }

  static double query_number(const api_request& req, std::string_view key) {
    auto v = query(req, key);
    if (!v) throw error(error_code::invalid_argument, "missing query parameter '" + std::string(key) + "'");
    return detail::parse_double(*v, key);
  }

  api_response route(const api_request& req) {
    const auto& m = req.method;
    const auto& p = req.path;
    if (p == "/healthz" && m == "GET") return healthz();
    if (p == "/auth/register" && m == "POST") return post_register(req);
    if (p == "/auth/login" && m == "POST") return post_login(req);
    if (p == "/recommend" && (m == "GET" || m == "POST")) return get_recommend(req);
    if (p == "/ratings" && m == "POST") return post_rating(req);
    if (p == "/aqi" && m == "GET") return get_aqi(req);
    if (p == "/sensors/readings" && m == "POST") return post_readings(req);
    if (p == "/sensors" && m == "GET") return get_sensors();
    if (p == "/pois" && m == "GET") return get_pois();
    if (p == "/pois" && m == "POST") return post_pois(req);
    if (p == "/fl/global" && m == "GET") return get_global(req);
    if (p == "/fl/update" && m == "POST") return post_update(req);
    if (p == "/fl/round" && m == "POST") return post_round(req);
    throw error(error_code::not_found, "no route for " + m + " " + p);
  }

  api_response healthz() {
    auto model = model_.get();
    auto field = field_.get();
    return ok({{"status", "ok"},
               {"model_version", model ? json(model->version) : json(nullptr)},
               {"pois", catalog_.get()->size()},
               {"sensors", field ? field->nodes.size() : 0}});
  }

  api_response post_register(const api_request& req) {
    const auto body = parse_body(req);
    const auto acc = register_user(wire::detail::string(body, "username", "registration"),
                                   wire::detail::string(body, "password", "registration"));
    return ok({{"user_id", acc.user_id},
               {"username", acc.username},
               {"created_at", format_iso8601_utc(acc.created_at)}},
              201);
  }

  api_response post_login(const api_request& req) {
    const auto body = parse_body(req);
    const auto grant = login(wire::detail::string(body, "username", "login"),
                             wire::detail::string(body, "password", "login"));
    return ok({{"token", grant.token},
               {"user_id", grant.user_id},
               {"expires_at", format_iso8601_utc(grant.expires_at)}});
  }

  api_response get_recommend(const api_request& req) {
    user_for_token(req.bearer_token);
    json body = json::object();
    if (!req.body.empty()) body = parse_body(req);
    wire::detail::require_object(body, "recommendation request");

    auto number_field = [&](std::string_view key, std::optional<double> fallback) -> double {
      if (auto it = body.find(std::string(key)); it != body.end()) {
        return wire::detail::number(body, key, "recommendation request");
      }
      if (query(req, key)) return query_number(req, key);
      if (fallback) return *fallback;
      throw error(error_code::invalid_argument, "missing parameter '" + std::string(key) + "'");
    };

    const double lat = number_field("lat", std::nullopt);
    const double lon = number_field("lon", std::nullopt);
    recommendation_request r{geo_point(lat, lon), number_field("radius_km", cfg_.radius_default_km),
                             alpha(number_field("alpha", cfg_.alpha_default)), cfg_.k_default,
                             std::nullopt, std::nullopt};
    const double k = number_field("k", static_cast<double>(cfg_.k_default));
    if (!(k >= 1.0) || k != std::floor(k)) throw error(error_code::invalid_argument, "k must be a positive integer");
    r.k = static_cast<std::size_t>(k);
    if (auto it = body.find("category"); it != body.end()) {
      r.category = wire::detail::string(body, "category", "recommendation request");
    } else if (auto c = query(req, "category"); c && !c->empty()) {
      r.category = *c;
    }
    if (auto it = body.find("raw_prefs"); it != body.end()) {
      if (!it->is_object()) throw error(error_code::parse_error, "raw_prefs must be an object");
      std::map<std::string, double, std::less<>> prefs;
      for (const auto& [id, v] : it->items()) {
        if (!v.is_number() || !std::isfinite(v.get<double>())) {
          throw error(error_code::parse_error, "raw_prefs values must be finite numbers");
        }
        prefs[id] = v.get<double>();
      }
      r.raw_prefs = std::move(prefs);
    }

    const auto resp = recommend(r);
    json items = json::array();
    for (const auto& c : resp.items) items.push_back(wire::to_json(c));
    return ok({{"model_version", resp.model_version},
               {"field_fitted_at", format_iso8601_utc(resp.field_fitted_at)},
               {"alpha", resp.alpha},
               {"items", std::move(items)}});
  }

  api_response post_rating(const api_request& req) {
    const auto user_id = user_for_token(req.bearer_token);
    const auto body = parse_body(req);
    const auto poi_id = wire::detail::string(body, "poi_id", "rating");
    const double value = wire::detail::number(body, "value", "rating");
    add_rating(user_id, poi_id, value);
    return ok(wire::to_json(rating{user_id, poi_id, value}), 201);
  }

  api_response get_aqi(const api_request& req) {
    const geo_point p(query_number(req, "lat"), query_number(req, "lon"));
    const auto f = field_.get();
    if (!f) throw error(error_code::no_sensor_data, "no sensor data");
    const double aqi = interpolate(*f, p);
    return ok({{"lat", p.lat()},
               {"lon", p.lon()},
               {"aqi", aqi},
               {"s_aqi", aqi_to_score(aqi, cfg_.aqi_score_lo, cfg_.aqi_score_hi)},
               {"field_fitted_at", format_iso8601_utc(f->fitted_at)}});
  }

  api_response post_readings(const api_request& req) {
    user_for_token(req.bearer_token);
    const auto body = parse_body(req);
    const json* list = &body;
    if (body.is_object()) list = &wire::detail::field(body, "readings", "ingestion batch");
    if (!list->is_array()) throw error(error_code::parse_error, "readings must be an array");
    std::vector<sensor_reading> batch;
    for (std::size_t i = 0; i < list->size(); ++i) {
      try {
        batch.push_back(wire::reading_from_json((*list)[i]));
      } catch (const error& e) {
        throw error(e.code(), "reading " + std::to_string(i) + ": " + e.what());
      }
    }
    const auto fitted = ingest_readings(batch);
    return ok({{"accepted", batch.size()}, {"field_fitted_at", format_iso8601_utc(fitted)}});
  }

  api_response get_sensors() {
    json list = json::array();
    for (const auto& r : sensors()) list.push_back(wire::to_json(r));
    return ok({{"readings", std::move(list)}});
  }

  api_response get_pois() {
    const auto catalog = catalog_.get();
    json list = json::array();
    for (const auto& [id, p] : catalog->pois()) list.push_back(wire::to_json(p));
    return ok({{"categories", catalog->categories()}, {"pois", std::move(list)}});
  }

  api_response post_pois(const api_request& req) {
    user_for_token(req.bearer_token);
    const auto body = parse_body(req);
    const json* list = &body;
    if (body.is_object()) list = &wire::detail::field(body, "pois", "poi batch");
    if (!list->is_array()) throw error(error_code::parse_error, "pois must be an array");
    std::vector<poi> pois;
    for (const auto& entry : *list) pois.push_back(wire::poi_from_json(entry));
    const auto added = add_pois(pois);
    auto model = model_.get();
    return ok({{"added", added}, {"model_version", model ? json(model->version) : json(nullptr)}}, 201);
  }

  api_response get_global(const api_request& req) {
    user_for_token(req.bearer_token);
    return ok(wire::to_json(*global_snapshot()));
  }

  api_response post_update(const api_request& req) {
    user_for_token(req.bearer_token);
    auto update = wire::client_update_from_json(parse_body(req));
    const auto version = update.base_version;
    const auto queued = submit_update(std::move(update));
    return ok({{"accepted", true}, {"base_version", version}, {"pending", queued}}, 202);
  }

  api_response post_round(const api_request& req) {
    user_for_token(req.bearer_token);
    return ok(wire::to_json(trigger_round()));
  }

  // model lifecycle

  /// Genesis happens lazily so that mu reflects every rating known when the
  /// first federated or recommendation call arrives.
  void ensure_model() {
    if (model_.get()) return;
    const auto catalog = catalog_.get();
    if (catalog->empty()) return;
    std::lock_guard lock(fl_mu_);
    if (model_.get()) return;
    std::vector<std::string> ids;
    for (const auto& [id, p] : catalog->pois()) ids.push_back(id);
    const auto known = ratings();
    auto genesis = std::make_shared<const global_item_params>(
        make_genesis(ids, genesis_mean(known), cfg_.hp.d, cfg_.hp.seed));
    persist_model(*genesis);
    model_.set(std::move(genesis));
  }

  /// Adds catalog items missing from an existing model. The version bumps
  /// so that clients observe the new snapshot; queued updates become stale.
  void extend_model() {
    std::lock_guard lock(fl_mu_);
    auto current = model_.get();
    if (!current) return;
    const auto catalog = catalog_.get();
    global_item_params next = *current;
    bool changed = false;
    for (const auto& [id, p] : catalog->pois()) {
      if (!next.items.contains(id)) {
        next.items.emplace(id, initial_item(id, next.dim, cfg_.hp.seed));
        changed = true;
      }
    }
    if (!changed) return;
    ++next.version;
    auto ptr = std::make_shared<const global_item_params>(std::move(next));
    persist_model(*ptr);
    model_.set(std::move(ptr));
  }

  // persistence

  void persist_model(const global_item_params& g) const {
    store_.write_atomic(model_file, wire::to_json(g).dump() + "\n");
  }

  void persist_accounts() const {
    json list = json::array();
    for (const auto& [name, acc] : accounts_) {
      list.push_back({{"user_id", acc.user_id},
                      {"username", acc.username},
                      {"salt", acc.password.salt_hex},
                      {"password_hash", acc.password.hash_hex},
                      {"iterations", acc.password.iterations},
                      {"created_at", acc.created_at}});
    }
    store_.write_atomic(accounts_file,
                        json{{"next_user_seq", user_seq_}, {"accounts", std::move(list)}}.dump() + "\n");
  }

  static std::vector<sensor_reading> parse_readings_text(const std::string& text) {
    std::vector<sensor_reading> out;
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return out;
    if (text[first] == '[') {
      for (const auto& doc : json::parse(text)) out.push_back(wire::reading_from_json(doc));
      return out;
    }
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      out.push_back(wire::reading_from_json(json::parse(line)));
    }
    return out;
  }

  static std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error(error_code::not_found, "cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  }

  void load() {
    if (auto text = store_.read(pois_file)) {
      std::istringstream in(*text);
      catalog_.set(std::make_shared<const poi_catalog>(parse_catalog(in)));
    } else if (!cfg_.catalog_file.empty()) {
      auto catalog = load_catalog(cfg_.catalog_file);
      std::ostringstream out;
      write_catalog(out, catalog);
      store_.write_atomic(pois_file, out.str());
      catalog_.set(std::make_shared<const poi_catalog>(std::move(catalog)));
    }

    if (auto text = store_.read(accounts_file)) {
      const auto doc = json::parse(*text);
      user_seq_ = doc.at("next_user_seq").get<std::uint64_t>();
      for (const auto& a : doc.at("accounts")) {
        account acc{a.at("user_id").get<std::string>(), a.at("username").get<std::string>(),
                    {a.at("salt").get<std::string>(), a.at("password_hash").get<std::string>(),
                     a.at("iterations").get<int>()},
                    a.at("created_at").get<std::int64_t>()};
        accounts_.emplace(acc.username, std::move(acc));
      }
    }

    if (auto text = store_.read(ratings_log)) {
      std::istringstream in(*text);
      for (const auto& r : parse_ratings(in)) ratings_[{r.user_id, r.poi_id}] = r.value;
      ratings_log_started_ = true;
    } else if (!cfg_.ratings_file.empty()) {
      std::istringstream in(read_file(cfg_.ratings_file));
      for (const auto& r : parse_ratings(in)) add_rating(r.user_id, r.poi_id, r.value);
    }

    std::vector<sensor_reading> readings;
    if (auto text = store_.read(readings_file)) {
      readings = parse_readings_text(*text);
      for (const auto& r : latest_readings(readings)) latest_.emplace(r.sensor_id, r);
      if (!readings.empty()) field_.set(std::make_shared<const aqi_field>(fit_interpolator(readings)));
    } else if (!cfg_.readings_file.empty()) {
      ingest_readings(parse_readings_text(read_file(cfg_.readings_file)));
    }

    if (auto text = store_.read(model_file)) {
      model_.set(std::make_shared<const global_item_params>(wire::global_from_json(json::parse(*text))));
    }
  }

  service_config cfg_;
  clock_fn clock_;
  file_store store_;

  detail::snapshot_slot<poi_catalog> catalog_;
  detail::snapshot_slot<aqi_field> field_;
  detail::snapshot_slot<global_item_params> model_;

  std::mutex catalog_mu_;
  mutable std::mutex readings_mu_;
  std::map<std::string, sensor_reading> latest_;

  std::mutex accounts_mu_;
  std::map<std::string, account> accounts_;
  std::uint64_t user_seq_ = 0;
  auth::session_table sessions_;

  mutable std::mutex ratings_mu_;
  std::map<std::pair<std::string, std::string>, double> ratings_;
  bool ratings_log_started_ = false;

  std::mutex fl_mu_;
  std::vector<client_update> pending_;
};

}  // namespace airtown

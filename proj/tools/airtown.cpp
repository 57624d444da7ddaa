#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "airtown/config.hpp"
#include "airtown/sim.hpp"
#include "airtown/http.hpp"

#include <CLI11.hpp>

namespace {

using namespace airtown;

httplib::Server* running_server = nullptr;

void stop_server(int) {
  if (running_server) running_server->stop();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error(error_code::invalid_argument, "cannot write '" + path + "'");
  out << text;
  if (!out) throw error(error_code::invalid_argument, "write to '" + path + "' failed");
}

int serve(const std::string& config_path) {
  const auto cfg = load_config(config_path);
  service svc(cfg);
  httplib::Server server;
  mount(server, svc);
  running_server = &server;
  std::signal(SIGINT, stop_server);
  std::signal(SIGTERM, stop_server);
  std::cout << "airtown listening on " << cfg.bind_address << ":" << cfg.port
            << (cfg.data_dir.empty() ? " (in-memory)" : " data_dir=" + cfg.data_dir) << std::endl;
  const bool ok = server.listen(cfg.bind_address, cfg.port);
  running_server = nullptr;
  if (!ok) {
    std::cerr << "error: cannot listen on " << cfg.bind_address << ":" << cfg.port << "\n";
    return 1;
  }
  return 0;
}

void print_list(const char* title, const nlohmann::json& resp) {
  std::cout << title << "\n";
  for (const auto& it : resp.at("items")) {
    std::printf("  %2d. %-4s %-22s aqi=%6.2f s_mf=%.3f s_aqi=%.3f s=%.3f d=%.3fkm\n",
                it.at("rank").get<int>(), it.at("poi").at("id").get<std::string>().c_str(),
                it.at("poi").at("name").get<std::string>().c_str(), it.at("aqi").get<double>(),
                it.at("s_mf").get<double>(), it.at("s_aqi").get<double>(), it.at("s").get<double>(),
                it.at("distance_km").get<double>());
  }
}

int demo(std::uint64_t seed, int rounds, const std::string& json_out) {
  sim::demo_options opts;
  opts.seed = seed;
  opts.rounds = rounds;
  const auto report = sim::run_demo(opts);
  const auto& doc = report.document;
  std::cout << "demo seed=" << seed << " rounds=" << rounds << " model_version=" << doc.at("model_version") << "\n";
  print_list("user 1, alpha = 0", doc.at("user1").at("alpha_0"));
  print_list("user 1, alpha = 0.5", doc.at("user1").at("alpha_0.5"));
  print_list("user 1, alpha = 1", doc.at("user1").at("alpha_1"));
  print_list("user 2, alpha = 0.3", doc.at("user2").at("alpha_0.3"));
  for (const auto& a : report.assertions) {
    std::cout << (a.passed ? "PASS " : "FAIL ") << a.name << ": " << a.detail << "\n";
  }
  if (!json_out.empty()) write_text(json_out, doc.dump(2) + "\n");
  return report.passed() ? 0 : 1;
}

int converge(int rounds, std::uint64_t seed, const std::string& json_out) {
  sim::convergence_options opts;
  opts.rounds = rounds;
  opts.seed = seed;
  const auto report = sim::run_convergence(opts);
  std::cout << "convergence seed=" << seed << " train=" << report.train_ratings << " test=" << report.test_ratings
            << "\n";
  for (std::size_t r = 0; r < report.rmse.size(); ++r) {
    if (r % 5 == 0 || r + 1 == report.rmse.size()) std::printf("  round %3zu  rmse %.6f\n", r, report.rmse[r]);
  }
  const bool passed = report.rmse.back() <= 0.5 * report.rmse.front();
  std::printf("%s convergence: final %.6f vs round-0 %.6f (ratio %.4f, target <= 0.5)\n", passed ? "PASS" : "FAIL",
              report.rmse.back(), report.rmse.front(), report.ratio());
  if (!json_out.empty()) write_text(json_out, report.to_json().dump(2) + "\n");
  return passed ? 0 : 1;
}

int gen(bool pois, bool sensors, bool ratings, std::uint64_t seed, const std::string& out_path) {
  if (pois + sensors + ratings != 1) {
    std::cerr << "error: choose exactly one of --pois, --sensors, --ratings\n";
    return 2;
  }
  const sim::grid_spec grid;
  std::ostringstream out;
  if (pois || ratings) {
    poi_catalog catalog;
    for (const auto& p : sim::generate_demo_pois(grid, seed)) catalog = catalog.with(p);
    if (pois) {
      write_catalog(out, catalog);
    } else {
      const auto [u1, u2] = sim::generate_demo_users(catalog, seed);
      std::vector<rating> all = u1.ratings;
      all.insert(all.end(), u2.ratings.begin(), u2.ratings.end());
      write_ratings(out, all);
    }
  } else {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& r : sim::generate_sensor_grid(grid, seed)) list.push_back(wire::to_json(r));
    out << list.dump(2) << "\n";
  }
  write_text(out_path, out.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"airtown: pollution-aware POI recommendation with federated matrix factorization"};
  app.require_subcommand(1);

  std::string config_path;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  serve_cmd->add_option("--config", config_path, "key = value configuration file")->required();

  std::uint64_t seed = 7;
  int rounds = 50;
  std::string json_out;
  auto* demo_cmd = app.add_subcommand("demo", "Replay the two-user demonstration and check its assertions");
  demo_cmd->add_option("--seed", seed, "scenario seed");
  demo_cmd->add_option("--rounds", rounds, "federated rounds before the requests")->check(CLI::PositiveNumber);
  demo_cmd->add_option("--json", json_out, "write the full report to this file");

  std::uint64_t conv_seed = 1;
  int conv_rounds = 50;
  std::string conv_json;
  auto* conv_cmd = app.add_subcommand("converge", "Federated training on the 20x30 rank-2 instance");
  conv_cmd->add_option("--rounds", conv_rounds, "federated rounds")->check(CLI::NonNegativeNumber);
  conv_cmd->add_option("--seed", conv_seed, "instance seed");
  conv_cmd->add_option("--json", conv_json, "write per-round RMSE to this file");

  bool gen_pois = false, gen_sensors = false, gen_ratings = false;
  std::uint64_t gen_seed = 7;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen", "Write synthetic bootstrap data");
  gen_cmd->add_flag("--pois", gen_pois, "POI catalog CSV");
  gen_cmd->add_flag("--sensors", gen_sensors, "sensor readings JSON");
  gen_cmd->add_flag("--ratings", gen_ratings, "bootstrap ratings CSV");
  gen_cmd->add_option("--seed", gen_seed, "scenario seed");
  gen_cmd->add_option("--out", gen_out, "output file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve_cmd) return serve(config_path);
    if (*demo_cmd) return demo(seed, rounds, json_out);
    if (*conv_cmd) return converge(conv_rounds, conv_seed, conv_json);
    if (*gen_cmd) return gen(gen_pois, gen_sensors, gen_ratings, gen_seed, gen_out);
  } catch (const error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "race/checkpoint.hpp"
#include "race/config.hpp"
#include "race/report.hpp"
#include "race/resource_alloc.hpp"
#include "race/training.hpp"
#include "race/verify.hpp"

namespace fs = std::filesystem;
using namespace race;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int episodes = 0;
  std::string out_dir;
};

ScenarioConfig load(const Common& c) {
  ScenarioConfig cfg = c.config.empty() ? ScenarioConfig{} : load_config(c.config);
  if (c.seed_set) cfg.seed = c.seed;
  if (c.episodes > 0) cfg.episodes = c.episodes;
  cfg.validate();
  return cfg;
}

std::string resolve_out(const Common& c, const ScenarioConfig& cfg) {
  fs::path p = c.out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(c.out_dir);
  if (const char* root = std::getenv("RACE_OUTPUT_ROOT"); root && p.is_relative()) p = fs::path(root) / p;
  fs::create_directories(p);
  return p.string();
}

void write_run_info(const std::string& dir, const ScenarioConfig& cfg) {
  std::ofstream o(dir + "/config.json");
  o << to_json(cfg).dump(2) << '\n';
  std::ofstream h(dir + "/config_hash.txt");
  h << hex64(config_hash(cfg)) << '\n';
}

void write_summary(const std::string& path, const std::string& policy,
                   const std::vector<EpisodeSummary>& eps, const ScenarioConfig& cfg,
                   double wall) {
  double aoi = 0, flmd = 0, acc = 0, rew = 0;
  for (const auto& e : eps) {
    aoi += e.sum_aoi;
    flmd += e.final_flmd;
    acc += e.final_accuracy;
    rew += e.mean_reward;
  }
  const double n = eps.empty() ? 1.0 : static_cast<double>(eps.size());
  Json j{{"policy", policy},
         {"episodes", eps.size()},
         {"mean_sum_aoi", aoi / n},
         {"mean_final_flmd", flmd / n},
         {"mean_final_accuracy", acc / n},
         {"mean_reward", rew / n},
         {"wall_time_s", wall},
         {"config_hash", hex64(config_hash(cfg))},
         {"seed", cfg.seed}};
  std::ofstream o(path);
  o << j.dump(2) << '\n';
}

void add_common(CLI::App* app, Common& c, bool episodes) {
  app->add_option("--config", c.config, "Scenario configuration file (JSON)");
  app->add_option_function<std::uint64_t>(
      "--seed", [&c](const std::uint64_t& s) { c.seed = s, c.seed_set = true; },
      "Root seed, overrides the configuration");
  if (episodes) app->add_option("--episodes", c.episodes, "Number of episodes");
  app->add_option("--out-dir", c.out_dir,
                  "Output directory; relative paths are placed under $RACE_OUTPUT_ROOT when set");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_allocate(const Common& c, const std::string& input, const std::string& output) {
  const ScenarioConfig cfg = load(c);
  std::ifstream in(input);
  if (!in) throw ConfigError("cannot open device file " + input);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("device file parse error: ") + e.what());
  }
  if (!j.is_array()) throw ConfigError("device file must hold an array of device objects");
  std::ofstream file;
  if (!output.empty()) {
    file.open(output);
    if (!file) throw Error("cannot write " + output);
  }
  std::ostream& out = output.empty() ? std::cout : file;
  out << "device,feasible,chi,rho,tx_time,total_delay,energy,binding,residual\n";
  bool any_infeasible = false;
  for (std::size_t i = 0; i < j.size(); ++i) {
    CostSection cs = cfg.costs;
    double samples = 100, gain = 0;
    detail::Reader r(j[i], "device[" + std::to_string(i) + "]");
    r.get("samples", samples);
    r.get("gain", gain);
    r.get("cycles_per_sample", cs.cycles_per_sample);
    r.get("cpu_hz", cs.cpu_hz);
    r.get("kappa", cs.kappa);
    r.get("max_power_dbm", cs.max_power_dbm);
    r.get("max_energy_j", cs.max_energy);
    r.get("model_bits", cs.model_bits);
    const DeviceProfile p = cs.profile(samples);
    p.validate();
    if (!(gain > 0)) throw ConfigError("device gain must be positive");
    if (!check_feasibility(p, gain, cfg.channel.bandwidth)) {
      any_infeasible = true;
      out << i << ",0,,,,,,,\n";
      continue;
    }
    const auto a = optimal_allocation(p, gain, cfg.channel.bandwidth, cfg.solver);
    out << i << ",1," << fmt17(a.chi) << ',' << fmt17(a.rho) << ',' << fmt17(a.tx_time) << ','
        << fmt17(a.total_delay) << ',' << fmt17(a.energy) << ','
        << (a.binding == Binding::EnergyBinding ? "energy" : "slack") << ',' << fmt17(a.residual)
        << '\n';
  }
  if (any_infeasible) {
    std::cerr << "one or more devices are infeasible\n";
    return 3;
  }
  return 0;
}

int cmd_train(const Common& c, int checkpoint_every) {
  ScenarioConfig cfg = load(c);
  if (checkpoint_every >= 0) cfg.checkpoint_every = checkpoint_every;
  const std::string dir = resolve_out(c, cfg);
  write_run_info(dir, cfg);
  World world(cfg);
  auto mp = make_mappo<float>(cfg);
  RunOptions opt;
  opt.out_dir = dir;
  opt.checkpoint_every = cfg.checkpoint_every;
  opt.on_episode = [](const EpisodeSummary& s) {
    std::cerr << "episode " << s.episode + 1 << " sum_aoi " << s.sum_aoi << " reward "
              << s.mean_reward << '\n';
  };
  const auto t0 = std::chrono::steady_clock::now();
  const auto eps = train_mappo(world, mp, cfg.episodes, opt);
  write_summary(dir + "/train_summary.json", "mappo", eps, cfg, seconds_since(t0));
  std::cout << "wrote " << dir << '\n';
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& ckpt, int seeds) {
  const ScenarioConfig cfg = load(c);
  const std::string dir = resolve_out(c, cfg);
  write_run_info(dir, cfg);
  World world(cfg);
  auto mp = make_mappo<float>(cfg);
  load_checkpoint(mp, ckpt);
  MappoSelector<float> sel(mp, false);
  RunOptions opt;
  opt.out_dir = dir;
  const auto t0 = std::chrono::steady_clock::now();
  const auto eps = evaluate_policy(world, sel, evaluation_seeds(cfg.seed, seeds), opt);
  write_summary(dir + "/mappo_summary.json", "mappo", eps, cfg, seconds_since(t0));
  std::cout << "wrote " << dir << '\n';
  return 0;
}

int cmd_baseline(const Common& c, const std::string& policy, int seeds) {
  const ScenarioConfig cfg = load(c);
  const std::string dir = resolve_out(c, cfg);
  write_run_info(dir, cfg);
  World world(cfg);
  auto p = make_baseline(policy);
  RunOptions opt;
  opt.out_dir = dir;
  const auto t0 = std::chrono::steady_clock::now();
  const auto eps = evaluate_policy(world, *p, evaluation_seeds(cfg.seed, seeds), opt);
  write_summary(dir + "/" + policy + "_summary.json", policy, eps, cfg, seconds_since(t0));
  std::cout << "wrote " << dir << '\n';
  return 0;
}

int cmd_verify(const Common& c) {
  const ScenarioConfig cfg = load(c);
  const std::string dir = resolve_out(c, cfg);
  const auto rows = run_verification(cfg.seed, dir);
  CsvFile csv(dir + "/verify.csv", "check,empirical,bound,pass,gated,note");
  bool ok = true;
  for (const auto& r : rows) {
    csv.line(r.name + "," + fmt17(r.empirical) + "," + fmt17(r.bound) + "," + (r.pass ? "1" : "0") +
             "," + (r.gated ? "1" : "0") + ",\"" + r.note + "\"");
    std::cout << (r.pass ? "PASS " : (r.gated ? "FAIL " : "WARN ")) << r.name << "  " << r.empirical << " vs "
              << r.bound << "  (" << r.note << ")\n";
    if (r.gated && !r.pass) ok = false;
  }
  return ok ? 0 : 4;
}

int cmd_report(const Common& c) {
  const ScenarioConfig cfg = load(c);
  const std::string dir = resolve_out(c, cfg);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().filename().string().size() > 13 &&
        e.path().filename().string().ends_with("_episodes.csv"))
      files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error("no *_episodes.csv files in " + dir);
  std::cout << "policy,episodes,mean_sum_aoi,mean_objective,mean_reward,mean_final_flmd,mean_final_accuracy\n";
  for (const auto& f : files) {
    std::ifstream in(f);
    std::string line;
    std::getline(in, line);
    std::string policy;
    double sums[5] = {0, 0, 0, 0, 0};
    int n = 0;
    while (std::getline(in, line)) {
      std::vector<std::string> cols;
      std::stringstream ss(line);
      for (std::string col; std::getline(ss, col, ',');) cols.push_back(col);
      if (cols.size() != 8) throw Error("malformed row in " + f.string());
      policy = cols[0];
      for (int i = 0; i < 5; ++i) sums[i] += std::stod(cols[3 + i]);
      ++n;
    }
    if (n == 0) continue;
    std::cout << policy << ',' << n;
    for (double s : sums) std::cout << ',' << fmt17(s / n);
    std::cout << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage resource allocation and device selection for platoon federated learning"};
  app.require_subcommand(1);
  Common common;

  auto* alloc = app.add_subcommand("allocate", "Solve the per-device resource allocation");
  std::string input, output;
  add_common(alloc, common, false);
  alloc->add_option("--devices", input, "JSON array of {samples, gain, ...} device objects")->required();
  alloc->add_option("--output", output, "CSV output file (stdout when omitted)");

  auto* train = app.add_subcommand("train", "Train the multi-agent selection policy");
  add_common(train, common, true);
  int ckpt_every = -1;
  train->add_option("--checkpoint-every", ckpt_every, "Checkpoint cadence in episodes");

  auto* eval = app.add_subcommand("evaluate", "Evaluate a trained checkpoint");
  add_common(eval, common, false);
  std::string ckpt;
  int seeds = 20;
  eval->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  eval->add_option("--seeds", seeds, "Number of evaluation seeds");

  auto* base = app.add_subcommand("baseline", "Evaluate a baseline selection policy");
  add_common(base, common, false);
  std::string policy = "greedy_aoi";
  base->add_option("--policy", policy, "random, round_robin, greedy_aoi or convex_greedy");
  base->add_option("--seeds", seeds, "Number of evaluation seeds");

  auto* verify = app.add_subcommand("verify", "Run the convergence-theory checks");
  add_common(verify, common, false);

  auto* report = app.add_subcommand("report", "Summarise *_episodes.csv files in the output directory");
  add_common(report, common, false);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*alloc) return cmd_allocate(common, input, output);
    if (*train) return cmd_train(common, ckpt_every);
    if (*eval) return cmd_evaluate(common, ckpt, seeds);
    if (*base) return cmd_baseline(common, policy, seeds);
    if (*verify) return cmd_verify(common);
    if (*report) return cmd_report(common);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 0;
}

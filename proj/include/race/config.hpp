#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "race/channel.hpp"
#include "race/cost_model.hpp"
#include "race/errors.hpp"
#include "race/fl_engine.hpp"
#include "race/mappo.hpp"
#include "race/nn/tsfen.hpp"
#include "race/platoon.hpp"
#include "race/resource_alloc.hpp"
#include "race/rng.hpp"

namespace race {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

enum class ThresholdMode { Fixed, Adaptive };
enum class MaskMode { Binary, Adaptive };

struct ThresholdConfig {
  ThresholdMode mode = ThresholdMode::Fixed;
  double lambda = 2.0e-3;
  double lambda_min = 1.0e-3;
  double lambda_max = 4.0e-3;
  double beta_adapt = 1.0;
  MaskMode mask = MaskMode::Binary;
  double beta_temp = 1.0;
  double pl_ratio = 0.1;
};

struct SelectionConfig {
  int subchannels = 4;
  int history = 5;
  double alpha = 1.0;
  double beta = 10.0;
  std::string policy = "mappo";
};

struct TaskSection {
  TaskConfig task;
  double learning_rate = 1.0e-4;
  double init_scale = 0.01;
  int adversary = -1;
  double adversary_factor = 10.0;
};

struct CostSection {
  double cycles_per_sample = 1.0e7;
  double cpu_hz = 0.5e9;
  double kappa = 1.0e-28;
  double max_power_dbm = 15.0;
  double max_energy = 0.1;
  double model_bits = 1.0e6;

  DeviceProfile profile(double samples) const {
    DeviceProfile p;
    p.samples = samples;
    p.cycles_per_sample = cycles_per_sample;
    p.cpu_hz = cpu_hz;
    p.kappa = kappa;
    p.max_power = dbm_to_watts(max_power_dbm);
    p.max_energy = max_energy;
    p.model_bits = model_bits;
    return p;
  }
};

struct NetworkSection {
  int d_model = 64;
  int heads = 8;
  int lstm_hidden = 64;
  int head_hidden = 128;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  PlatoonInit platoon;
  IdmParams idm;
  LeaderProfile leader;
  ChannelParams channel;
  CostSection costs;
  SolverSettings solver;
  TaskSection task;
  ThresholdConfig thresholds;
  SelectionConfig selection;
  MappoHyper mappo;
  NetworkSection network;
  int rounds = 100;
  int episodes = 500;
  std::string output_dir = "out";
  int checkpoint_every = 50;

  std::size_t devices() const { return platoon.followers; }

  nn::TsfenConfig tsfen() const {
    nn::TsfenConfig c;
    c.d_model = network.d_model;
    c.heads = network.heads;
    c.lstm_hidden = network.lstm_hidden;
    c.head_hidden = network.head_hidden;
    c.history = selection.history;
    c.devices = static_cast<int>(devices());
    return c;
  }

  void validate() const {
    idm.validate();
    channel.validate();
    solver.validate();
    task.task.validate();
    tsfen().validate();
    if (platoon.followers < 1) throw ConfigError("platoon needs at least one follower");
    if (task.task.devices != platoon.followers)
      throw ConfigError("task device count must equal the number of followers");
    if (!(platoon.speed_lo >= 0 && platoon.speed_hi >= platoon.speed_lo))
      throw ConfigError("invalid initial speed range");
    if (!(platoon.gap_lo > 0 && platoon.gap_hi >= platoon.gap_lo))
      throw ConfigError("invalid initial gap range");
    if (!(platoon.vehicle_length > 0)) throw ConfigError("vehicle length must be positive");
    if (leader.segments.empty()) throw ConfigError("leader profile needs at least one segment");
    costs.profile(1.0).validate();
    if (selection.subchannels < 0) throw ConfigError("subchannel count must be non-negative");
    if (selection.history < 1) throw ConfigError("history length must be at least 1");
    if (selection.alpha < 0 || selection.beta < 0) throw ConfigError("reward weights must be >= 0");
    if (!(task.learning_rate >= 0)) throw ConfigError("learning rate must be non-negative");
    if (!(task.init_scale > 0)) throw ConfigError("model init scale must be positive");
    if (!(thresholds.lambda > 0)) throw ConfigError("FLMD threshold must be positive");
    if (!(thresholds.lambda_max >= thresholds.lambda_min && thresholds.lambda_min > 0))
      throw ConfigError("adaptive threshold needs lambda_max >= lambda_min > 0");
    if (!(thresholds.pl_ratio > 0 && thresholds.pl_ratio < 1))
      throw ConfigError("pl_ratio must lie in (0, 1)");
    if (!(thresholds.beta_temp > 0)) throw ConfigError("mask temperature must be positive");
    if (rounds < 1 || episodes < 1) throw ConfigError("rounds and episodes must be positive");
    if (mappo.batch_size < 1 || mappo.episodes_per_update < 1 || mappo.epochs < 0)
      throw ConfigError("invalid MAPPO batch settings");
  }
};

namespace detail {

// Reads fields from a JSON object and rejects keys that were never asked for.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + path_ + "." + it.key());
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const Json::exception& e) {
      throw ConfigError("bad value for " + path_ + "." + key + ": " + e.what());
    }
  }

  const Json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  const std::string& path() const { return path_; }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline std::string threshold_mode_name(ThresholdMode m) {
  return m == ThresholdMode::Fixed ? "fixed" : "adaptive";
}
inline std::string mask_mode_name(MaskMode m) { return m == MaskMode::Binary ? "binary" : "adaptive"; }

}  // namespace detail

inline Json to_json(const ScenarioConfig& c) {
  Json leader = Json::array();
  for (const auto& s : c.leader.segments) leader.push_back({s.start_time, s.speed});
  return Json{
      {"schema_version", kSchemaVersion},
      {"seed", c.seed},
      {"platoon",
       {{"followers", c.platoon.followers},
        {"speed_range", {c.platoon.speed_lo, c.platoon.speed_hi}},
        {"gap_range", {c.platoon.gap_lo, c.platoon.gap_hi}},
        {"vehicle_length", c.platoon.vehicle_length},
        {"leader_profile", leader},
        {"idm",
         {{"a_max", c.idm.a_max},
          {"b_max", c.idm.b_max},
          {"d_min", c.idm.d_min},
          {"t_min", c.idm.t_min},
          {"v_des", c.idm.v_des},
          {"sensitivity_exponent", c.idm.sensitivity_exponent},
          {"tau", c.idm.tau},
          {"emergency_decel", c.idm.emergency_decel}}}}},
      {"channel",
       {{"bandwidth_hz", c.channel.bandwidth},
        {"path_loss_exponent", c.channel.path_loss_exponent},
        {"frequency_factor", c.channel.frequency_factor},
        {"noise_dbm", c.channel.noise_dbm},
        {"estimation_error", c.channel.estimation_error}}},
      {"costs",
       {{"cycles_per_sample", c.costs.cycles_per_sample},
        {"cpu_hz", c.costs.cpu_hz},
        {"kappa", c.costs.kappa},
        {"max_power_dbm", c.costs.max_power_dbm},
        {"max_energy_j", c.costs.max_energy},
        {"model_bits", c.costs.model_bits}}},
      {"solver",
       {{"root_tolerance", c.solver.root_tolerance},
        {"max_iterations", c.solver.max_iterations},
        {"delta_max_factor", c.solver.delta_max_factor}}},
      {"task",
       {{"classes", c.task.task.classes},
        {"features", c.task.task.features},
        {"train_samples", c.task.task.train_samples},
        {"test_samples", c.task.task.test_samples},
        {"dirichlet", c.task.task.dirichlet},
        {"class_weights", c.task.task.class_weights},
        {"cluster_scale", c.task.task.cluster_scale},
        {"learning_rate", c.task.learning_rate},
        {"init_scale", c.task.init_scale},
        {"adversary", c.task.adversary},
        {"adversary_factor", c.task.adversary_factor}}},
      {"thresholds",
       {{"mode", detail::threshold_mode_name(c.thresholds.mode)},
        {"lambda", c.thresholds.lambda},
        {"lambda_min", c.thresholds.lambda_min},
        {"lambda_max", c.thresholds.lambda_max},
        {"beta_adapt", c.thresholds.beta_adapt},
        {"mask", detail::mask_mode_name(c.thresholds.mask)},
        {"beta_temp", c.thresholds.beta_temp},
        {"pl_ratio", c.thresholds.pl_ratio}}},
      {"selection",
       {{"subchannels", c.selection.subchannels},
        {"history", c.selection.history},
        {"alpha", c.selection.alpha},
        {"beta", c.selection.beta},
        {"policy", c.selection.policy}}},
      {"mappo",
       {{"gamma", c.mappo.gamma},
        {"gae_lambda", c.mappo.gae_lambda},
        {"clip", c.mappo.clip},
        {"lr", c.mappo.lr},
        {"batch_size", c.mappo.batch_size},
        {"episodes_per_update", c.mappo.episodes_per_update},
        {"epochs", c.mappo.epochs},
        {"max_grad_norm", c.mappo.max_grad_norm},
        {"scale_rewards", c.mappo.scale_rewards},
        {"d_model", c.network.d_model},
        {"heads", c.network.heads},
        {"lstm_hidden", c.network.lstm_hidden},
        {"head_hidden", c.network.head_hidden}}},
      {"horizon", {{"rounds", c.rounds}, {"episodes", c.episodes}}},
      {"output", {{"dir", c.output_dir}, {"checkpoint_every", c.checkpoint_every}}}};
}

inline ScenarioConfig config_from_json(const Json& j) {
  ScenarioConfig c;
  detail::Reader root(j, "config");
  int version = kSchemaVersion;
  root.get("schema_version", version);
  if (version != kSchemaVersion)
    throw ConfigError("unsupported schema_version " + std::to_string(version));
  root.get("seed", c.seed);
  if (const Json* s = root.sub("platoon")) {
    detail::Reader r(*s, "platoon");
    r.get("followers", c.platoon.followers);
    std::vector<double> range;
    if (const Json* v = r.sub("speed_range")) {
      range = v->get<std::vector<double>>();
      if (range.size() != 2) throw ConfigError("platoon.speed_range needs two entries");
      c.platoon.speed_lo = range[0];
      c.platoon.speed_hi = range[1];
    }
    if (const Json* v = r.sub("gap_range")) {
      range = v->get<std::vector<double>>();
      if (range.size() != 2) throw ConfigError("platoon.gap_range needs two entries");
      c.platoon.gap_lo = range[0];
      c.platoon.gap_hi = range[1];
    }
    r.get("vehicle_length", c.platoon.vehicle_length);
    if (const Json* v = r.sub("leader_profile")) {
      c.leader.segments.clear();
      for (const auto& seg : *v) {
        if (!seg.is_array() || seg.size() != 2)
          throw ConfigError("leader_profile entries are [start_time, speed]");
        c.leader.segments.push_back({seg[0].get<double>(), seg[1].get<double>()});
      }
    }
    if (const Json* v = r.sub("idm")) {
      detail::Reader q(*v, "platoon.idm");
      q.get("a_max", c.idm.a_max);
      q.get("b_max", c.idm.b_max);
      q.get("d_min", c.idm.d_min);
      q.get("t_min", c.idm.t_min);
      q.get("v_des", c.idm.v_des);
      q.get("sensitivity_exponent", c.idm.sensitivity_exponent);
      q.get("tau", c.idm.tau);
      q.get("emergency_decel", c.idm.emergency_decel);
    }
  }
  if (const Json* s = root.sub("channel")) {
    detail::Reader r(*s, "channel");
    r.get("bandwidth_hz", c.channel.bandwidth);
    r.get("path_loss_exponent", c.channel.path_loss_exponent);
    r.get("frequency_factor", c.channel.frequency_factor);
    r.get("noise_dbm", c.channel.noise_dbm);
    r.get("estimation_error", c.channel.estimation_error);
  }
  if (const Json* s = root.sub("costs")) {
    detail::Reader r(*s, "costs");
    r.get("cycles_per_sample", c.costs.cycles_per_sample);
    r.get("cpu_hz", c.costs.cpu_hz);
    r.get("kappa", c.costs.kappa);
    r.get("max_power_dbm", c.costs.max_power_dbm);
    r.get("max_energy_j", c.costs.max_energy);
    r.get("model_bits", c.costs.model_bits);
  }
  if (const Json* s = root.sub("solver")) {
    detail::Reader r(*s, "solver");
    r.get("root_tolerance", c.solver.root_tolerance);
    r.get("max_iterations", c.solver.max_iterations);
    r.get("delta_max_factor", c.solver.delta_max_factor);
  }
  if (const Json* s = root.sub("task")) {
    detail::Reader r(*s, "task");
    r.get("classes", c.task.task.classes);
    r.get("features", c.task.task.features);
    r.get("train_samples", c.task.task.train_samples);
    r.get("test_samples", c.task.task.test_samples);
    r.get("dirichlet", c.task.task.dirichlet);
    r.get("class_weights", c.task.task.class_weights);
    r.get("cluster_scale", c.task.task.cluster_scale);
    r.get("learning_rate", c.task.learning_rate);
    r.get("init_scale", c.task.init_scale);
    r.get("adversary", c.task.adversary);
    r.get("adversary_factor", c.task.adversary_factor);
  }
  if (const Json* s = root.sub("thresholds")) {
    detail::Reader r(*s, "thresholds");
    std::string mode = detail::threshold_mode_name(c.thresholds.mode);
    r.get("mode", mode);
    if (mode == "fixed") c.thresholds.mode = ThresholdMode::Fixed;
    else if (mode == "adaptive") c.thresholds.mode = ThresholdMode::Adaptive;
    else throw ConfigError("thresholds.mode must be fixed or adaptive");
    r.get("lambda", c.thresholds.lambda);
    r.get("lambda_min", c.thresholds.lambda_min);
    r.get("lambda_max", c.thresholds.lambda_max);
    r.get("beta_adapt", c.thresholds.beta_adapt);
    std::string mask = detail::mask_mode_name(c.thresholds.mask);
    r.get("mask", mask);
    if (mask == "binary") c.thresholds.mask = MaskMode::Binary;
    else if (mask == "adaptive") c.thresholds.mask = MaskMode::Adaptive;
    else throw ConfigError("thresholds.mask must be binary or adaptive");
    r.get("beta_temp", c.thresholds.beta_temp);
    r.get("pl_ratio", c.thresholds.pl_ratio);
  }
  if (const Json* s = root.sub("selection")) {
    detail::Reader r(*s, "selection");
    r.get("subchannels", c.selection.subchannels);
    r.get("history", c.selection.history);
    r.get("alpha", c.selection.alpha);
    r.get("beta", c.selection.beta);
    r.get("policy", c.selection.policy);
  }
  if (const Json* s = root.sub("mappo")) {
    detail::Reader r(*s, "mappo");
    r.get("gamma", c.mappo.gamma);
    r.get("gae_lambda", c.mappo.gae_lambda);
    r.get("clip", c.mappo.clip);
    r.get("lr", c.mappo.lr);
    r.get("batch_size", c.mappo.batch_size);
    r.get("episodes_per_update", c.mappo.episodes_per_update);
    r.get("epochs", c.mappo.epochs);
    r.get("max_grad_norm", c.mappo.max_grad_norm);
    r.get("scale_rewards", c.mappo.scale_rewards);
    r.get("d_model", c.network.d_model);
    r.get("heads", c.network.heads);
    r.get("lstm_hidden", c.network.lstm_hidden);
    r.get("head_hidden", c.network.head_hidden);
  }
  if (const Json* s = root.sub("horizon")) {
    detail::Reader r(*s, "horizon");
    r.get("rounds", c.rounds);
    r.get("episodes", c.episodes);
  }
  if (const Json* s = root.sub("output")) {
    detail::Reader r(*s, "output");
    r.get("dir", c.output_dir);
    r.get("checkpoint_every", c.checkpoint_every);
  }
  c.task.task.devices = c.platoon.followers;
  c.validate();
  return c;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

// FNV-1a over the canonical JSON, ignoring output settings.
inline std::uint64_t config_hash(const ScenarioConfig& c) {
  Json j = to_json(c);
  j.erase("output");
  return fnv1a64(j.dump());
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

}  // namespace race

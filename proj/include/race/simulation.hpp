#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "race/aoi_metrics.hpp"
#include "race/channel.hpp"
#include "race/config.hpp"
#include "race/cost_model.hpp"
#include "race/errors.hpp"
#include "race/fl_engine.hpp"
#include "race/mappo.hpp"
#include "race/platoon.hpp"
#include "race/resource_alloc.hpp"
#include "race/rng.hpp"
#include "race/selection.hpp"

namespace race {

// Device selection strategy called once per round.
class SelectionPolicy {
 public:
  virtual ~SelectionPolicy() = default;
  virtual void begin_episode() {}
  virtual SelectionAction select(const MdpState& state, const std::vector<double>& mask,
                                 const std::vector<double>& aoi, int agents, Rng& rng) = 0;
  virtual std::string name() const = 0;
};

class BaselineSelector : public SelectionPolicy {
 public:
  explicit BaselineSelector(BaselineKind kind) : policy_(kind) {}
  void begin_episode() override { policy_.reset(); }
  SelectionAction select(const MdpState&, const std::vector<double>& mask,
                         const std::vector<double>& aoi, int agents, Rng& rng) override {
    return policy_.select(aoi, mask, agents, rng);
  }
  std::string name() const override { return to_string(policy_.kind()); }

 private:
  BaselinePolicy policy_;
};

template <class S = float>
class MappoSelector : public SelectionPolicy {
 public:
  MappoSelector(Mappo<S>& mappo, bool training) : mappo_(mappo), training_(training) {}

  SelectionAction select(const MdpState& state, const std::vector<double>& mask,
                         const std::vector<double>&, int agents, Rng& rng) override {
    if (agents != mappo_.agents()) throw Error("agent count differs from the trained policy");
    if (training_) mappo_.normalizer().update(state);
    last_state_ = state;
    last_ = mappo_.act(state, mask, rng, !training_, training_);
    return last_.action;
  }
  std::string name() const override { return "mappo"; }

  const MdpState& last_state() const { return last_state_; }
  const typename Mappo<S>::Decision& last_decision() const { return last_; }

 private:
  Mappo<S>& mappo_;
  bool training_;
  MdpState last_state_;
  typename Mappo<S>::Decision last_;
};

inline std::unique_ptr<SelectionPolicy> make_baseline(const std::string& name) {
  return std::make_unique<BaselineSelector>(parse_baseline(name));
}

// Per-episode random streams derived from one seed.
struct EpisodeStreams {
  Rng platoon, channel, model, policy;

  explicit EpisodeStreams(std::uint64_t seed)
      : platoon(Rng::stream(seed, "platoon-init")),
        channel(Rng::stream(seed, "channel")),
        model(Rng::stream(seed, "model-init")),
        policy(Rng::stream(seed, "policy")) {}
};

inline std::uint64_t episode_seed(std::uint64_t root, int episode) {
  return splitmix64(root ^ splitmix64(fnv1a64("episode") + static_cast<std::uint64_t>(episode)));
}

class World {
 public:
  explicit World(const ScenarioConfig& cfg)
      : cfg_(cfg), task_(generate_task(cfg.seed, task_config(cfg))) {
    cfg_.validate();
    for (const auto& sh : task_.shards) profiles_.push_back(cfg_.costs.profile(static_cast<double>(sh.size())));
    weights_ = task_.sample_counts();
  }

  const ScenarioConfig& config() const { return cfg_; }
  const SyntheticTask& task() const { return task_; }
  const std::vector<DeviceProfile>& profiles() const { return profiles_; }
  std::size_t devices() const { return task_.shards.size(); }
  int round() const { return round_; }
  int episode() const { return episode_; }
  const Vec& model() const { return model_; }
  const std::vector<double>& aoi() const { return aoi_; }
  const PlatoonState& platoon() const { return platoon_; }
  double objective_cum() const { return objective_cum_; }

  // Starts a new episode; all randomness of the episode comes from this seed.
  void reset(std::uint64_t seed, int episode = 0) {
    streams_ = std::make_unique<EpisodeStreams>(seed);
    platoon_ = init_platoon(cfg_.platoon, cfg_.leader, streams_->platoon);
    model_ = initial_model(task_.dim(), cfg_.task.init_scale, streams_->model);
    aoi_.assign(devices(), 0.0);
    round_ = 0;
    episode_ = episode;
    objective_cum_ = 0.0;
    grad_norm_init_ = global_gradient(model_).norm();
  }

  Rng& policy_rng() { return streams_->policy; }

  Vec global_gradient(const Vec& w) const {
    Vec g = Vec::Zero(w.size());
    double total = 0.0;
    for (std::size_t n = 0; n < devices(); ++n) {
      g += weights_[n] * local_gradient(w, task_.shards[n]);
      total += weights_[n];
    }
    return g / total;
  }

  double threshold() const {
    const auto& th = cfg_.thresholds;
    if (th.mode == ThresholdMode::Fixed) return th.lambda;
    return adaptive_threshold(global_gradient(model_).norm(), grad_norm_init_, th.lambda_min,
                              th.lambda_max, th.beta_adapt);
  }

  // One communication round.
  RoundLedger run_round(SelectionPolicy& policy) {
    if (!streams_) throw Error("world must be reset before running a round");
    try {
      return run_round_impl(policy);
    } catch (const CollisionError& e) {
      throw CollisionError(std::string(e.what()) + " (round " + std::to_string(round_) + ")");
    } catch (const InfeasibleError& e) {
      throw InfeasibleError(std::string(e.what()) + " (round " + std::to_string(round_) + ")");
    } catch (const ConvergenceError& e) {
      throw ConvergenceError(std::string(e.what()) + " (round " + std::to_string(round_) + ")");
    }
  }

 private:
  static TaskConfig task_config(const ScenarioConfig& cfg) {
    TaskConfig t = cfg.task.task;
    t.devices = cfg.platoon.followers;
    return t;
  }

  RoundLedger run_round_impl(SelectionPolicy& policy) {
    const int n = static_cast<int>(devices());
    const int m_sub = cfg_.selection.history;
    const int k = cfg_.selection.subchannels;
    const double bw = cfg_.channel.bandwidth;

    // Platoon motion and per-sub-period channels; the last one is used for allocation.
    const PlatoonState prev = platoon_;
    platoon_ = step_platoon(prev, cfg_.idm, cfg_.leader);
    std::vector<std::vector<double>> gains(m_sub, std::vector<double>(n));
    for (int m = 0; m < m_sub; ++m) {
      const auto dist = interpolate_distances(prev, platoon_, static_cast<double>(m + 1) / m_sub);
      for (int i = 0; i < n; ++i)
        gains[m][i] = realize_channel(dist[i], cfg_.channel, streams_->channel).composite_gain;
    }
    const std::vector<double>& gain = gains.back();

    // Stage 1.
    std::vector<AllocationResult> alloc(n);
    std::vector<double> feasible(n, 1.0), delay(n), energy(n);
    for (int i = 0; i < n; ++i) {
      if (!check_feasibility(profiles_[i], gain[i], bw)) {
        feasible[i] = 0.0;
        delay[i] = std::numeric_limits<double>::infinity();
        energy[i] = 0.0;
        continue;
      }
      alloc[i] = optimal_allocation(profiles_[i], gain[i], bw, cfg_.solver);
      delay[i] = alloc[i].total_delay;
      energy[i] = alloc[i].energy;
    }

    // Local updates and drift.
    std::vector<Vec> local(n);
    std::vector<double> theta(n);
    for (int i = 0; i < n; ++i) {
      local[i] = local_update(model_, task_.shards[i], cfg_.task.learning_rate);
      if (i == cfg_.task.adversary) local[i] = model_ + cfg_.task.adversary_factor * (local[i] - model_);
      theta[i] = flmd(local[i], model_);
    }

    const double lam = threshold();
    std::vector<double> mask =
        cfg_.thresholds.mask == MaskMode::Binary
            ? binary_mask(theta, lam)
            : adaptive_mask(theta, lam, cfg_.thresholds.beta_temp, cfg_.thresholds.pl_ratio, round_);
    for (int i = 0; i < n; ++i) mask[i] *= feasible[i];

    std::vector<Snapshot> snaps(m_sub);
    for (int m = 0; m < m_sub; ++m) snaps[m] = Snapshot{theta, gains[m], aoi_};
    const MdpState state = build_state(snaps, m_sub);

    SelectionAction act = policy.select(state, mask, aoi_, k, streams_->policy);
    if (static_cast<int>(act.device.size()) != k) throw Error("policy returned a wrong number of actions");
    check_assignment(act.device, devices());
    for (int d : act.device)
      if (d >= 0 && !(mask[d] > 0.0)) throw Error("policy selected a masked device");

    RoundLedger l;
    l.episode = episode_;
    l.round = round_;
    l.theta = theta;
    l.gain = gain;
    l.assignment = act.device;
    l.delay = delay;
    l.energy = energy;
    l.round_delay = round_delay(act.device, delay);

    const auto selected = act.selected(devices());
    aoi_ = update_aoi(aoi_, selected, l.round_delay);
    l.aoi = aoi_;

    // Aggregate selected devices whose drift passes the threshold.
    std::vector<Vec> models;
    std::vector<double> w;
    l.aggregated.assign(n, 0);
    for (int i = 0; i < n; ++i)
      if (selected[i] && theta[i] <= lam) {
        l.aggregated[i] = 1;
        models.push_back(local[i]);
        w.push_back(weights_[i]);
      }
    if (!models.empty()) model_ = fedavg(models, w);

    const double r = reward(aoi_, theta, cfg_.selection.alpha, cfg_.selection.beta, m_sub,
                            std::max(k, 1));
    l.reward.assign(k, r);
    l.objective = objective_term(aoi_, theta, cfg_.selection.alpha, cfg_.selection.beta);
    objective_cum_ += l.objective;
    l.objective_cum = objective_cum_;
    l.accuracy = accuracy(model_, task_.test);
    ++round_;
    return l;
  }

  ScenarioConfig cfg_;
  SyntheticTask task_;
  std::vector<DeviceProfile> profiles_;
  std::vector<double> weights_;
  std::unique_ptr<EpisodeStreams> streams_;
  PlatoonState platoon_;
  Vec model_;
  std::vector<double> aoi_;
  int round_ = 0;
  int episode_ = 0;
  double objective_cum_ = 0.0;
  double grad_norm_init_ = 1.0;
};

// Ledger invariants checked on every emitted round.
inline void check_ledger(const RoundLedger& l, const std::vector<double>& prev_aoi,
                         const std::vector<DeviceProfile>& profiles) {
  const std::size_t n = l.aoi.size();
  check_assignment(l.assignment, n);
  std::vector<char> sel(n, 0);
  for (int d : l.assignment)
    if (d >= 0) sel[d] = 1;
  double dmax = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (sel[i]) {
      dmax = std::max(dmax, l.delay[i]);
      if (l.aoi[i] != 0.0) throw VerificationError("selected device has non-zero age");
      if (l.energy[i] > profiles[i].max_energy * (1.0 + 1e-6))
        throw VerificationError("energy budget exceeded");
    }
    if (l.aggregated[i] && !sel[i]) throw VerificationError("aggregated device was not selected");
  }
  if (dmax != l.round_delay) throw VerificationError("round delay is not the max selected delay");
  for (std::size_t i = 0; i < n; ++i)
    if (!sel[i] && l.aoi[i] != prev_aoi[i] + l.round_delay)
      throw VerificationError("age recursion violated");
}

struct EpisodeSummary {
  int episode = 0;
  std::uint64_t seed = 0;
  double sum_aoi = 0.0;
  double objective = 0.0;
  double mean_reward = 0.0;
  double final_flmd = 0.0;
  double final_accuracy = 0.0;
  int rounds = 0;
};

inline double final_aggregated_flmd(const RoundLedger& l) {
  double s = 0.0;
  int c = 0;
  for (std::size_t i = 0; i < l.theta.size(); ++i)
    if (l.aggregated[i]) {
      s += l.theta[i];
      ++c;
    }
  return c ? s / c : 0.0;
}

template <class OnRound>
EpisodeSummary run_episode(World& world, SelectionPolicy& policy, std::uint64_t seed,
                           int episode, OnRound&& on_round, bool check = true) {
  world.reset(seed, episode);
  policy.begin_episode();
  EpisodeSummary s;
  s.episode = episode;
  s.seed = seed;
  const int rounds = world.config().rounds;
  double reward_sum = 0.0;
  RoundLedger last;
  for (int t = 0; t < rounds; ++t) {
    const std::vector<double> prev = world.aoi();
    RoundLedger l = world.run_round(policy);
    if (check) check_ledger(l, prev, world.profiles());
    for (double a : l.aoi) s.sum_aoi += a;
    reward_sum += l.reward.empty() ? 0.0 : l.reward.front();
    on_round(l, t + 1 == rounds);
    last = std::move(l);
  }
  s.rounds = rounds;
  s.objective = world.objective_cum();
  s.mean_reward = reward_sum / rounds;
  s.final_flmd = final_aggregated_flmd(last);
  s.final_accuracy = last.accuracy;
  return s;
}

inline EpisodeSummary run_episode(World& world, SelectionPolicy& policy, std::uint64_t seed,
                                  int episode = 0) {
  return run_episode(world, policy, seed, episode, [](const RoundLedger&, bool) {});
}

}  // namespace race

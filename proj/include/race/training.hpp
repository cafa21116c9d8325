#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "race/checkpoint.hpp"
#include "race/mappo.hpp"
#include "race/report.hpp"
#include "race/simulation.hpp"

namespace race {

struct RunOptions {
  // Empty disables all file output.
  std::string out_dir;
  bool write_rounds = true;
  int checkpoint_every = 0;
  std::function<void(const EpisodeSummary&)> on_episode;
};

inline std::uint64_t evaluation_seed(std::uint64_t root, int index) {
  return episode_seed(root ^ fnv1a64("evaluation"), index);
}

template <class S>
Mappo<S> make_mappo(const ScenarioConfig& cfg) {
  return Mappo<S>(cfg.selection.subchannels, cfg.tsfen(), cfg.mappo, cfg.seed);
}

template <class S>
std::vector<EpisodeSummary> train_mappo(World& world, Mappo<S>& mp, int episodes,
                                        const RunOptions& opt = {}) {
  const auto& cfg = world.config();
  MappoSelector<S> sel(mp, true);
  Rng update_rng = Rng::stream(cfg.seed, "ppo-minibatch");
  CsvFile rounds, summary;
  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    if (opt.write_rounds)
      rounds.open(opt.out_dir + "/train_rounds.csv",
                  round_csv_header(world.devices(), cfg.selection.subchannels));
    summary.open(opt.out_dir + "/train_episodes.csv", summary_csv_header());
  }
  std::vector<EpisodeSummary> out;
  for (int e = 0; e < episodes; ++e) {
    auto on_round = [&](const RoundLedger& l, bool last) {
      const double r = l.reward.front();
      if (mp.hyper().scale_rewards) mp.return_scaler().observe(r, mp.hyper().gamma);
      mp.store(sel.last_state(), sel.last_decision(), r, last);
      if (rounds.is_open()) rounds.line(round_csv_row(l));
    };
    EpisodeSummary s = run_episode(world, sel, episode_seed(cfg.seed, e), e, on_round);
    mp.return_scaler().reset_episode();
    if ((e + 1) % cfg.mappo.episodes_per_update == 0 || e + 1 == episodes) mp.update(update_rng);
    if (summary.is_open()) summary.line(summary_csv_row("mappo", s));
    if (!opt.out_dir.empty() && opt.checkpoint_every > 0 && (e + 1) % opt.checkpoint_every == 0)
      save_checkpoint(mp, opt.out_dir + "/checkpoint_" + std::to_string(e + 1) + ".bin");
    if (opt.on_episode) opt.on_episode(s);
    out.push_back(s);
  }
  if (!opt.out_dir.empty()) save_checkpoint(mp, opt.out_dir + "/checkpoint_final.bin");
  return out;
}

// Runs one episode per evaluation seed; seed order fixes the output order.
inline std::vector<EpisodeSummary> evaluate_policy(World& world, SelectionPolicy& policy,
                                                   const std::vector<std::uint64_t>& seeds,
                                                   const RunOptions& opt = {}) {
  CsvFile rounds, summary;
  const auto& cfg = world.config();
  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    if (opt.write_rounds)
      rounds.open(opt.out_dir + "/" + policy.name() + "_rounds.csv",
                  round_csv_header(world.devices(), cfg.selection.subchannels));
    summary.open(opt.out_dir + "/" + policy.name() + "_episodes.csv", summary_csv_header());
  }
  std::vector<EpisodeSummary> out;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    auto on_round = [&](const RoundLedger& l, bool) {
      if (rounds.is_open()) rounds.line(round_csv_row(l));
    };
    EpisodeSummary s = run_episode(world, policy, seeds[i], static_cast<int>(i), on_round);
    if (summary.is_open()) summary.line(summary_csv_row(policy.name(), s));
    if (opt.on_episode) opt.on_episode(s);
    out.push_back(s);
  }
  return out;
}

inline std::vector<std::uint64_t> evaluation_seeds(std::uint64_t root, int count) {
  std::vector<std::uint64_t> s;
  for (int i = 0; i < count; ++i) s.push_back(evaluation_seed(root, i));
  return s;
}

}  // namespace race

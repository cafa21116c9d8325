// Runs a short episode with the greedy age baseline and prints the per-round ledger.
#include <cstdio>

#include "race/simulation.hpp"

int main() {
  using namespace race;
  ScenarioConfig cfg;
  cfg.rounds = 10;
  World world(cfg);
  BaselineSelector policy(BaselineKind::GreedyAoi);
  run_episode(world, policy, 7, 0, [](const RoundLedger& l, bool) {
    double sum = 0;
    for (double a : l.aoi) sum += a;
    std::printf("round %2d  selected", l.round);
    for (int d : l.assignment) std::printf(" %2d", d);
    std::printf("  delay %.3f s  sum_aoi %.3f  reward %.4f  acc %.3f\n", l.round_delay, sum,
                l.reward.front(), l.accuracy);
  });
}

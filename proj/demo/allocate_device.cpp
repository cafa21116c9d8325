// Solves the resource allocation for a few devices at increasing distance.
#include <cstdio>

#include "race/channel.hpp"
#include "race/config.hpp"
#include "race/resource_alloc.hpp"

int main() {
  using namespace race;
  const ScenarioConfig cfg;
  std::printf("%8s %8s %10s %10s %12s %12s %8s\n", "samples", "dist_m", "chi", "rho", "tx_s",
              "delay_s", "binding");
  for (double samples : {50.0, 200.0, 500.0})
    for (double dist : {50.0, 200.0, 2000.0}) {
      const DeviceProfile p = cfg.costs.profile(samples);
      const double gain = cfg.channel.frequency_factor * std::pow(dist, -cfg.channel.path_loss_exponent) /
                          cfg.channel.noise_watts();
      if (!check_feasibility(p, gain, cfg.channel.bandwidth)) {
        std::printf("%8.0f %8.0f  infeasible\n", samples, dist);
        continue;
      }
      const auto a = optimal_allocation(p, gain, cfg.channel.bandwidth, cfg.solver);
      std::printf("%8.0f %8.0f %10.4f %10.3g %12.4g %12.4g %8s\n", samples, dist, a.chi, a.rho,
                  a.tx_time, a.total_delay, a.binding == Binding::EnergyBinding ? "energy" : "slack");
    }
}

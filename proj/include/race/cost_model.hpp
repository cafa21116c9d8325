#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "race/channel.hpp"
#include "race/errors.hpp"

namespace race {

struct DeviceProfile {
  double samples = 100.0;            // zeta
  double cycles_per_sample = 1.0e7;  // mu
  double cpu_hz = 0.5e9;             // G
  double kappa = 1.0e-28;
  double max_power = dbm_to_watts(15.0);
  double max_energy = 0.1;
  double model_bits = 1.0e6;

  double comp_energy(double chi) const {
    const double f = chi * cpu_hz;
    return kappa * cycles_per_sample * samples * f * f;
  }
  double comp_time(double chi) const { return cycles_per_sample * samples / (chi * cpu_hz); }

  void validate() const {
    if (!(samples > 0 && cycles_per_sample > 0 && cpu_hz > 0 && kappa > 0 && max_power > 0 &&
          max_energy > 0 && model_bits > 0))
      throw ConfigError("device profile entries must be strictly positive");
  }
};

struct DeviceCosts {
  double comp_time = 0.0;
  double comp_energy = 0.0;
  double tx_time = 0.0;
  double tx_energy = 0.0;
  double total_time = 0.0;
  double total_energy = 0.0;
};

inline DeviceCosts device_costs(const DeviceProfile& p, double chi, double rho, double gain,
                                double bandwidth) {
  if (!(chi > 0.0)) throw Error("zero computation allocation gives infinite delay");
  const double rate = data_rate(bandwidth, rho, p.max_power, gain);
  if (!(rate > 0.0)) throw Error("zero data rate gives infinite delay");
  DeviceCosts c;
  c.comp_time = p.comp_time(chi);
  c.comp_energy = p.comp_energy(chi);
  c.tx_time = p.model_bits / rate;
  c.tx_energy = rho * p.max_power * c.tx_time;
  c.total_time = c.comp_time + c.tx_time;
  c.total_energy = c.comp_energy + c.tx_energy;
  return c;
}

// assignment[k] is the device on subchannel k, or -1 if the subchannel is idle.
inline void check_assignment(const std::vector<int>& assignment, std::size_t devices) {
  std::vector<char> used(devices, 0);
  for (int d : assignment) {
    if (d < 0) continue;
    if (static_cast<std::size_t>(d) >= devices) throw Error("assignment device out of range");
    if (used[d]) throw Error("device assigned to more than one subchannel");
    used[d] = 1;
  }
}

inline double round_delay(const std::vector<int>& assignment, const std::vector<double>& delays) {
  check_assignment(assignment, delays.size());
  double m = 0.0;
  for (int d : assignment)
    if (d >= 0) m = std::max(m, delays[d]);
  return m;
}

}  // namespace race

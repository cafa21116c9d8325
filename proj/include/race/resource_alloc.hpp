#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "race/channel.hpp"
#include "race/cost_model.hpp"
#include "race/errors.hpp"
#include "race/roots.hpp"

namespace race {

struct SolverSettings {
  double root_tolerance = 1.0e-6;
  int max_iterations = 100;
  double delta_max_factor = 1.0e3;

  void validate() const {
    if (!(root_tolerance > 0)) throw ConfigError("root tolerance must be positive");
    if (max_iterations < 1) throw ConfigError("max iterations must be at least 1");
    if (!(delta_max_factor > 1)) throw ConfigError("delta_max factor must exceed 1");
  }
};

enum class Binding { EnergySlack, EnergyBinding };

struct AllocationResult {
  double chi = 1.0;
  double rho = 1.0;
  double tx_time = 0.0;
  Binding binding = Binding::EnergySlack;
  // Multipliers for energy, chi <= 1, chi >= 0 and rho <= 1.
  double lambda1 = 0.0, lambda2 = 0.0, lambda3 = 0.0, lambda4 = 0.0;
  double total_delay = 0.0;
  double energy = 0.0;
  // Energy minus budget.
  double residual = 0.0;
};

inline bool check_feasibility(double model_bits, double max_energy, double bandwidth,
                              double gain) {
  return !(std::numbers::ln2 * model_bits >= max_energy * bandwidth * gain);
}

inline bool check_feasibility(const DeviceProfile& p, double gain, double bandwidth) {
  return check_feasibility(p.model_bits, p.max_energy, bandwidth, gain);
}

// Full-power transmission time, the lower end of the search interval.
inline double min_tx_time(const DeviceProfile& p, double gain, double bandwidth) {
  return p.model_bits / data_rate(bandwidth, 1.0, p.max_power, gain);
}

// rho * P * delta written in terms of delta alone.
inline double tx_energy_for_time(double delta, double model_bits, double bandwidth, double gain) {
  return delta * std::expm1(std::numbers::ln2 * model_bits / (delta * bandwidth)) / gain;
}

// d/d(delta) of tx_energy_for_time.
inline double tx_energy_slope(double delta, double model_bits, double bandwidth, double gain) {
  const double x = model_bits / (delta * bandwidth);
  const double p = std::exp2(x);
  return (p - 1.0 - x * std::numbers::ln2 * p) / gain;
}

inline double rho_from_delta(double delta, double model_bits, double bandwidth, double power,
                             double gain) {
  if (!(delta > 0.0)) throw Error("transmission time must be positive");
  const double rho = std::expm1(std::numbers::ln2 * model_bits / (delta * bandwidth)) /
                     (power * gain);
  if (rho > 1.0 + 1e-9)
    throw InfeasibleError("transmission time below the full-power minimum");
  return std::min(rho, 1.0);
}

inline double solve_binding_delta(double chi, const DeviceProfile& p, double gain,
                                  double bandwidth, const SolverSettings& s = {}) {
  const double e_cp = p.comp_energy(chi);
  const double lo = min_tx_time(p, gain, bandwidth);
  const double hi = s.delta_max_factor * lo;
  auto g = [&](double d) {
    return e_cp + tx_energy_for_time(d, p.model_bits, bandwidth, gain) - p.max_energy;
  };
  const double glo = g(lo);
  const double ghi = g(hi);
  if ((glo > 0.0) == (ghi > 0.0) && glo != 0.0 && ghi != 0.0)
    throw InfeasibleError("energy residual does not change sign on the search interval");
  return brent_root(g, lo, hi, s.root_tolerance, s.max_iterations).root;
}

namespace detail {

inline void finish(AllocationResult& r, const DeviceProfile& p, double gain, double bandwidth) {
  r.total_delay = p.comp_time(r.chi) + r.tx_time;
  r.energy = p.comp_energy(r.chi) + r.rho * p.max_power * r.tx_time;
  r.residual = r.energy - p.max_energy;
  (void)gain;
  (void)bandwidth;
}

}  // namespace detail

inline AllocationResult optimal_allocation(const DeviceProfile& p, double gain, double bandwidth,
                                           const SolverSettings& s = {}) {
  p.validate();
  if (!(gain > 0.0) || !check_feasibility(p, gain, bandwidth))
    throw InfeasibleError("device cannot meet its energy budget at any allocation");

  const double kmz = p.kappa * p.cycles_per_sample * p.samples;
  const double g3 = p.cpu_hz * p.cpu_hz * p.cpu_hz;
  const double d_min = min_tx_time(p, gain, bandwidth);
  const double e_full = p.max_power * d_min;
  AllocationResult r;

  if (p.comp_energy(1.0) + e_full <= p.max_energy) {
    r.chi = 1.0;
    r.rho = 1.0;
    r.tx_time = d_min;
    r.binding = Binding::EnergySlack;
    r.lambda2 = p.cycles_per_sample * p.samples / p.cpu_hz;
    r.lambda4 = 1.0;
    detail::finish(r, p, gain, bandwidth);
    return r;
  }
  r.binding = Binding::EnergyBinding;

  const double e_inf = std::numbers::ln2 * p.model_bits / (bandwidth * gain);
  const double d_hi = s.delta_max_factor * d_min;
  const double e_hi = tx_energy_for_time(d_hi, p.model_bits, bandwidth, gain);
  const double inf = std::numeric_limits<double>::infinity();

  auto chi_of = [&](double lam) {
    return std::min(1.0, std::cbrt(1.0 / (2.0 * lam * p.kappa * g3)));
  };
  // Binding transmission time for a given chi; infinity if the budget is out of reach.
  auto delta_of = [&](double chi) {
    const double budget = p.max_energy - p.comp_energy(chi);
    if (budget <= std::max(e_inf, e_hi)) return inf;
    if (budget >= e_full) return d_min;
    return solve_binding_delta(chi, p, gain, bandwidth, s);
  };
  auto stationarity = [&](double lam, double delta) {
    if (!std::isfinite(delta)) return 1.0;
    return 1.0 + lam * tx_energy_slope(delta, p.model_bits, bandwidth, gain);
  };

  // chi = 1 with the energy constraint binding.
  const double lam_one = 1.0 / (2.0 * p.kappa * g3);
  const double d_one = delta_of(1.0);
  if (std::isfinite(d_one)) {
    const double lam = -1.0 / tx_energy_slope(d_one, p.model_bits, bandwidth, gain);
    if (lam <= lam_one) {
      r.chi = 1.0;
      r.tx_time = d_one;
      r.rho = rho_from_delta(d_one, p.model_bits, bandwidth, p.max_power, gain);
      r.lambda1 = lam;
      r.lambda2 = p.cycles_per_sample * p.samples / p.cpu_hz - 2.0 * lam * kmz * p.cpu_hz *
                                                                   p.cpu_hz;
      detail::finish(r, p, gain, bandwidth);
      return r;
    }
  }

  // Full-power corner: chi set by the leftover budget.
  double lam_hi = inf;
  if (p.max_energy > e_full) {
    const double chi_c = std::sqrt((p.max_energy - e_full) / (kmz * p.cpu_hz * p.cpu_hz));
    const double lam_c = 1.0 / (2.0 * p.kappa * g3 * chi_c * chi_c * chi_c);
    const double slack = stationarity(lam_c, d_min);
    if (slack >= 0.0) {
      r.chi = chi_c;
      r.rho = 1.0;
      r.tx_time = d_min;
      r.lambda1 = lam_c;
      r.lambda4 = slack;
      detail::finish(r, p, gain, bandwidth);
      return r;
    }
    lam_hi = lam_c;
  }
  if (!std::isfinite(lam_hi)) {
    lam_hi = lam_one * 2.0;
    while (stationarity(lam_hi, delta_of(chi_of(lam_hi))) > 0.0) {
      lam_hi *= 4.0;
      if (lam_hi > 1e300) throw ConvergenceError("multiplier search diverged");
    }
  }
  double lo = std::log(lam_one), hi = std::log(lam_hi);
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::fabs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    const double lam = std::exp(mid);
    if (stationarity(lam, delta_of(chi_of(lam))) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  const double lam = std::exp(0.5 * (lo + hi));
  r.chi = chi_of(lam);
  r.tx_time = delta_of(r.chi);
  if (!std::isfinite(r.tx_time)) throw ConvergenceError("multiplier search ended out of range");
  r.rho = rho_from_delta(r.tx_time, p.model_bits, bandwidth, p.max_power, gain);
  r.lambda1 = lam;
  detail::finish(r, p, gain, bandwidth);
  return r;
}

inline double high_snr_delta(double chi, const DeviceProfile& p, double gain, double bandwidth) {
  if (p.max_power * gain < 10.0) throw RegimeError("high-SNR formula needs P*gain >= 10");
  const double e_cp = p.comp_energy(chi);
  return p.model_bits / (bandwidth * std::log2(1.0 + p.max_energy * gain / e_cp));
}

inline double large_model_delta(double chi, const DeviceProfile& p, double gain,
                                double bandwidth) {
  const double arg = (p.max_energy - p.comp_energy(chi)) * gain /
                     (p.model_bits * std::numbers::ln2);
  const double lg = std::log(arg);
  if (!(arg > 0.0) || !(lg > 0.0)) throw RegimeError("large-model formula has no valid log");
  return p.model_bits * std::numbers::ln2 / (bandwidth * lg);
}

inline bool large_model_regime(double delta, const DeviceProfile& p, double bandwidth) {
  return p.model_bits / (delta * bandwidth) >= 3.0;
}

}  // namespace race

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "race/resource_alloc.hpp"
#include "support/oracles.hpp"

namespace race {
namespace {

oracle::Device to_oracle(const DeviceProfile& p) {
  return {p.samples, p.cycles_per_sample, p.cpu_hz, p.kappa, p.max_power, p.max_energy,
          p.model_bits};
}

double table_gain(double distance, double fading = 1.0) {
  return fading * std::pow(distance, -3.76) / dbm_to_watts(-174.0);
}

TEST(BrentRoot, SolvesPolynomial) {
  auto f = [](double x) { return x * x * x - 2.0 * x - 5.0; };
  const auto r = brent_root(f, 2.0, 3.0, 1e-14, 100);
  EXPECT_NEAR(r.root, 2.0945514815423265, 1e-13);
}

TEST(BrentRoot, RequiresBracket) {
  auto f = [](double x) { return x * x + 1.0; };
  EXPECT_THROW(brent_root(f, -1.0, 1.0, 1e-12, 100), InfeasibleError);
}

TEST(BrentRoot, IterationCap) {
  auto f = [](double x) { return std::tanh(x - 0.3); };
  EXPECT_THROW(brent_root(f, -100.0, 100.0, 1e-300, 2), ConvergenceError);
}

TEST(Feasibility, BoundaryIsInfeasible) {
  const double D = 1e6, e = 0.1, B = 1e6;
  const double gain = std::numbers::ln2 * D / (e * B);
  EXPECT_FALSE(check_feasibility(D, e, B, gain));
  EXPECT_TRUE(check_feasibility(D, e, B, gain * (1 + 1e-12)));
  EXPECT_TRUE(check_feasibility(1e-30, e, B, 1.0));
}

TEST(Feasibility, DefaultDeviceAtGainTen) {
  // ln2 * 1e6 = 693147 > 0.1 * 1e6 * 10 = 1e6 is false, so feasible.
  EXPECT_TRUE(check_feasibility(1e6, 0.1, 1e6, 10.0));
  EXPECT_FALSE(check_feasibility(1e6, 0.1, 1e6, 6.9));
}

TEST(RhoFromDelta, FullPowerBoundary) {
  DeviceProfile p;
  const double g = 1e9, B = 1e6;
  const double d = min_tx_time(p, g, B);
  EXPECT_NEAR(rho_from_delta(d, p.model_bits, B, p.max_power, g), 1.0, 1e-12);
  EXPECT_LT(rho_from_delta(1e6 * d, p.model_bits, B, p.max_power, g), 1e-3);
  EXPECT_THROW(rho_from_delta(0.5 * d, p.model_bits, B, p.max_power, g), InfeasibleError);
}

TEST(RhoFromDelta, RoundTrip) {
  Rng rng(11);
  DeviceProfile p;
  for (int i = 0; i < 500; ++i) {
    const double g = std::exp(rng.uniform(std::log(10.0), std::log(1e13)));
    const double B = rng.uniform(1e5, 1e7);
    const double d = min_tx_time(p, g, B) * rng.uniform(1.0, 50.0);
    const double rho = rho_from_delta(d, p.model_bits, B, p.max_power, g);
    const double rate = data_rate(B, rho, p.max_power, g);
    EXPECT_NEAR(rate, p.model_bits / d, 1e-9 * p.model_bits / d);
  }
}

TEST(SolveBindingDelta, ResidualAndBisectionOracle) {
  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    DeviceProfile p;
    p.samples = std::round(rng.uniform(400, 2000));
    const double g = table_gain(rng.uniform(10, 300), rng.exponential());
    if (!check_feasibility(p, g, 1e6)) continue;
    const double chi = rng.uniform(0.3, 0.6);
    if (p.comp_energy(chi) + p.max_power * min_tx_time(p, g, 1e6) <= p.max_energy) continue;
    double d;
    try {
      d = solve_binding_delta(chi, p, g, 1e6);
    } catch (const InfeasibleError&) {
      continue;
    }
    const double res = p.comp_energy(chi) + tx_energy_for_time(d, p.model_bits, 1e6, g) -
                       p.max_energy;
    EXPECT_LE(std::fabs(res), 1e-6 * p.max_energy);
    EXPECT_NEAR(d, oracle::binding_delta(chi, to_oracle(p), g, 1e6), 1e-6);
  }
}

TEST(SolveBindingDelta, NoSignChangeThrows) {
  DeviceProfile p;
  p.samples = 10;
  EXPECT_THROW(solve_binding_delta(1.0, p, 1e12, 1e6), InfeasibleError);
}

TEST(OptimalAllocation, LargeBudgetIsSlack) {
  DeviceProfile p;
  p.max_energy = 1e3;
  const auto r = optimal_allocation(p, 1e10, 1e6);
  EXPECT_EQ(r.binding, Binding::EnergySlack);
  EXPECT_EQ(r.chi, 1.0);
  EXPECT_EQ(r.rho, 1.0);
  EXPECT_EQ(r.lambda1, 0.0);
}

TEST(OptimalAllocation, SlackCaseHasNoInteriorStationaryChi) {
  DeviceProfile p;
  const auto r = optimal_allocation(p, 1e10, 1e6);
  ASSERT_EQ(r.binding, Binding::EnergySlack);
  // With lambda1 = 0 the chi-derivative of the Lagrangian is -mu*zeta/(chi^2 G) < 0.
  for (double chi = 0.01; chi < 1.0; chi += 0.01)
    EXPECT_LT(-p.cycles_per_sample * p.samples / (chi * chi * p.cpu_hz) + r.lambda1, 0.0);
}

TEST(OptimalAllocation, InfeasibleThrows) {
  DeviceProfile p;
  EXPECT_THROW(optimal_allocation(p, 5.0, 1e6), InfeasibleError);
}

TEST(OptimalAllocation, BindingCaseMeetsBudgetAndBeatsGrid) {
  Rng rng(21);
  int binding = 0;
  for (int i = 0; i < 8; ++i) {
    DeviceProfile p;
    p.samples = std::round(rng.uniform(300, 2500));
    p.max_energy = rng.uniform(0.05, 0.2);
    const double g = rng.uniform() < 0.5 ? table_gain(rng.uniform(10, 300), rng.exponential())
                                         : std::exp(rng.uniform(std::log(30.0), std::log(3e3)));
    if (!check_feasibility(p, g, 1e6)) continue;
    const auto r = optimal_allocation(p, g, 1e6);
    EXPECT_GT(r.chi, 0.0);
    EXPECT_LE(r.chi, 1.0);
    EXPECT_LE(r.rho, 1.0);
    EXPECT_LE(r.residual, 1e-6 * p.max_energy);
    if (r.binding == Binding::EnergyBinding) {
      ++binding;
      EXPECT_LE(std::fabs(r.residual), 1e-6 * p.max_energy);
    }
    const auto grid = oracle::grid_allocation(to_oracle(p), g, 1e6);
    if (grid.feasible) EXPECT_LE(r.total_delay, grid.best_delay * (1 + 1e-9));
  }
  EXPECT_GT(binding, 0);
}

TEST(OptimalAllocation, LowSnrUsesReducedPower) {
  DeviceProfile p;
  p.samples = 3000;
  p.max_energy = 0.3;
  const double g = 200.0;
  const auto r = optimal_allocation(p, g, 1e6);
  EXPECT_EQ(r.binding, Binding::EnergyBinding);
  EXPECT_LE(std::fabs(r.residual), 1e-6 * p.max_energy);
  const auto grid = oracle::grid_allocation(to_oracle(p), g, 1e6);
  ASSERT_TRUE(grid.feasible);
  EXPECT_LE(r.total_delay, grid.best_delay * (1 + 1e-9));
  EXPECT_GE(r.total_delay, grid.best_delay - 2.0 * grid.slack);
}

TEST(ClosedForms, HighSnrInvertsItsApproximateConstraint) {
  DeviceProfile p;
  p.samples = 800;
  const double g = 1e11, B = 1e6, chi = 0.6;
  const double d = high_snr_delta(chi, p, g, B);
  // The closed form satisfies 2^(D/(dB)) = 1 + e_max g / e_cp exactly.
  EXPECT_NEAR(std::exp2(p.model_bits / (d * B)), 1.0 + p.max_energy * g / p.comp_energy(chi),
              1e-9 * (1.0 + p.max_energy * g / p.comp_energy(chi)));
  EXPECT_LT(high_snr_delta(chi, p, 10 * g, B), d);
  EXPECT_THROW(high_snr_delta(chi, p, 1.0, B), RegimeError);
}

TEST(ClosedForms, LargeModelFormula) {
  DeviceProfile p;
  p.samples = 800;
  const double g = 1e11, B = 1e6, chi = 0.6;
  const long double arg = (static_cast<long double>(p.max_energy) - p.comp_energy(chi)) * g /
                          (p.model_bits * std::numbers::ln2_v<long double>);
  const long double want = p.model_bits * std::numbers::ln2_v<long double> / (B * std::log(arg));
  EXPECT_NEAR(large_model_delta(chi, p, g, B), static_cast<double>(want), 1e-15);
  auto q = p;
  q.model_bits *= 2;
  EXPECT_GT(large_model_delta(chi, q, g, B), 2.0 * large_model_delta(chi, p, g, B));
  p.samples = 1e6;
  EXPECT_THROW(large_model_delta(1.0, p, g, B), RegimeError);
}

}  // namespace
}  // namespace race

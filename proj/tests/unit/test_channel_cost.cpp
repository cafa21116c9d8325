#include <gtest/gtest.h>

#include <cmath>

#include "race/channel.hpp"
#include "race/cost_model.hpp"

namespace race {
namespace {

TEST(Channel, PerfectCsiUsesEstimateOnly) {
  ChannelParams p;
  p.estimation_error = 0.0;
  Rng rng(1);
  const auto r = realize_channel(50.0, p, rng);
  EXPECT_EQ(r.composite_gain, r.estimated_gain);
}

TEST(Channel, PureErrorLimit) {
  ChannelParams p;
  p.estimation_error = 1.0;
  Rng rng(1);
  const auto r = realize_channel(50.0, p, rng);
  EXPECT_EQ(r.composite_gain, r.error_gain);
}

TEST(Channel, FadingHasUnitMean) {
  Rng rng(2024);
  double s = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) s += fading_power(rng);
  EXPECT_GE(s / n, 0.99);
  EXPECT_LE(s / n, 1.01);
}

TEST(Channel, PathLossScaling) {
  ChannelParams p;
  Rng rng(5);
  const int n = 200000;
  double s1 = 0.0, s2 = 0.0, q1 = 0.0, q2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double a = realize_channel(40.0, p, rng).estimated_gain;
    const double b = realize_channel(80.0, p, rng).estimated_gain;
    s1 += a;
    s2 += b;
    q1 += a * a;
    q2 += b * b;
  }
  const double m1 = s1 / n, m2 = s2 / n;
  const double v1 = q1 / n - m1 * m1, v2 = q2 / n - m2 * m2;
  const double ratio = m2 / m1;
  // Delta-method standard error of the ratio.
  const double se = ratio * std::sqrt(v1 / (n * m1 * m1) + v2 / (n * m2 * m2));
  EXPECT_NEAR(ratio, std::pow(2.0, -p.path_loss_exponent), 3.0 * se);
}

TEST(Channel, CompositeGainBounds) {
  Rng rng(9);
  for (double pe : {0.0, 0.1, 0.5, 0.9, 1.0}) {
    ChannelParams p;
    p.estimation_error = pe;
    for (int i = 0; i < 1000; ++i) {
      const auto r = realize_channel(rng.uniform(5.0, 300.0), p, rng);
      const double w = std::sqrt(1 - pe) + std::sqrt(pe);
      const double lo = std::min(r.estimated_gain, r.error_gain) * w;
      const double hi = std::max(r.estimated_gain, r.error_gain) * w;
      EXPECT_GE(r.composite_gain, lo * (1 - 1e-12));
      EXPECT_LE(r.composite_gain, hi * (1 + 1e-12));
    }
  }
}

TEST(Channel, RejectsNonPositiveDistance) {
  Rng rng(1);
  EXPECT_THROW(realize_channel(0.0, ChannelParams{}, rng), Error);
}

TEST(DataRate, Basics) {
  EXPECT_EQ(data_rate(1e6, 0.0, 1.0, 5.0), 0.0);
  EXPECT_DOUBLE_EQ(data_rate(1.0, 1.0, 1.0, 1.0), 1.0);
  const double p = dbm_to_watts(15.0);
  EXPECT_NEAR(data_rate(1e6, 1.0, p, 10.0 / p), 1e6 * std::log2(11.0), 1e-6);
}

TEST(DataRate, IncreasingInRho) {
  for (double rho = 0.0; rho < 1.0; rho += 0.01)
    EXPECT_LT(data_rate(1e6, rho, 0.03, 100.0), data_rate(1e6, rho + 0.01, 0.03, 100.0));
}

TEST(DbmToWatts, KnownValues) {
  EXPECT_DOUBLE_EQ(dbm_to_watts(30.0), 1.0);
  EXPECT_NEAR(dbm_to_watts(15.0), 0.031622776601683791, 1e-17);
}

TEST(DeviceCosts, DefaultComputationTime) {
  DeviceProfile p;
  p.samples = 1;
  const auto c = device_costs(p, 1.0, 1.0, 1e10, 1e6);
  EXPECT_DOUBLE_EQ(c.comp_time, 0.02);
}

TEST(DeviceCosts, ScalingInChi) {
  DeviceProfile p;
  const auto a = device_costs(p, 0.3, 1.0, 1e10, 1e6);
  const auto b = device_costs(p, 0.6, 1.0, 1e10, 1e6);
  EXPECT_DOUBLE_EQ(a.comp_time, 2.0 * b.comp_time);
  EXPECT_DOUBLE_EQ(4.0 * a.comp_energy, b.comp_energy);
  for (double chi : {0.1, 0.25, 0.7, 1.0}) {
    const auto c = device_costs(p, chi, 1.0, 1e10, 1e6);
    EXPECT_NEAR(c.comp_time * chi, p.comp_time(1.0), 1e-12);
    EXPECT_NEAR(c.comp_energy / (chi * chi), p.comp_energy(1.0), 1e-15);
  }
}

TEST(DeviceCosts, ArithmeticExample) {
  DeviceProfile p;
  p.model_bits = 1e6;
  p.max_power = 0.01;
  // rate = 5 Mbit/s with rho * P = 10 mW.
  const double gain = (std::exp2(5.0) - 1.0) / 0.01;
  const auto c = device_costs(p, 1.0, 1.0, gain, 1e6);
  EXPECT_NEAR(c.tx_time, 0.2, 1e-12);
  EXPECT_NEAR(c.tx_energy, 2e-3, 1e-15);
  EXPECT_EQ(c.total_energy, c.comp_energy + c.tx_energy);
  EXPECT_EQ(c.total_time, c.comp_time + c.tx_time);
}

TEST(DeviceCosts, ZeroAllocationThrows) {
  DeviceProfile p;
  EXPECT_THROW(device_costs(p, 0.0, 1.0, 1e10, 1e6), Error);
  EXPECT_THROW(device_costs(p, 1.0, 0.0, 1e10, 1e6), Error);
}

TEST(RoundDelay, MaxOverAssigned) {
  EXPECT_EQ(round_delay({0}, {0.3}), 0.3);
  EXPECT_EQ(round_delay({0, 1, 2}, {0.1, 0.5, 0.2}), 0.5);
  EXPECT_EQ(round_delay({-1, -1}, {0.1, 0.5}), 0.0);
}

TEST(RoundDelay, RejectsDuplicateDevice) {
  EXPECT_THROW(round_delay({1, 1}, {0.1, 0.5}), Error);
}

TEST(RoundDelay, MatchesExhaustiveMaxAndIsPermutationInvariant) {
  Rng rng(3);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> delays(20);
    for (auto& d : delays) d = rng.uniform(0.0, 5.0);
    std::vector<int> perm(20);
    for (int i = 0; i < 20; ++i) perm[i] = i;
    rng.shuffle(perm.begin(), perm.end());
    std::vector<int> assign(perm.begin(), perm.begin() + 4);
    double want = 0.0;
    for (int n = 0; n < 20; ++n)
      for (int d : assign)
        if (d == n && delays[n] > want) want = delays[n];
    EXPECT_EQ(round_delay(assign, delays), want);
    std::reverse(assign.begin(), assign.end());
    EXPECT_EQ(round_delay(assign, delays), want);
  }
}

}  // namespace
}  // namespace race

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "race/errors.hpp"
#include "race/rng.hpp"

namespace race {

struct IdmParams {
  double a_max = 0.73;
  double b_max = 1.67;
  double d_min = 2.0;
  double t_min = 1.5;
  double v_des = 30.0;
  double sensitivity_exponent = 4.0;
  double tau = 1.0;
  // Lower bound on commanded acceleration, m/s^2.
  double emergency_decel = 9.0;

  void validate() const {
    if (!(a_max > 0 && b_max > 0 && d_min > 0 && t_min > 0 && v_des > 0 && tau > 0 &&
          emergency_decel > 0))
      throw ConfigError("IDM parameters must be strictly positive");
    if (sensitivity_exponent < 1.0 || sensitivity_exponent > 5.0)
      throw ConfigError("IDM sensitivity exponent must lie in [1, 5]");
  }
};

struct SpeedSegment {
  double start_time = 0.0;
  double speed = 18.0;
};

// Piecewise-constant leader speed.
struct LeaderProfile {
  std::vector<SpeedSegment> segments{{0.0, 18.0}};

  double speed_at(double t) const {
    double v = segments.empty() ? 0.0 : segments.front().speed;
    for (const auto& s : segments)
      if (t >= s.start_time) v = s.speed;
    return v;
  }
};

// Index 0 is the leader, followers are 1..N in front-to-back order.
struct PlatoonState {
  double time = 0.0;
  std::vector<double> x;
  std::vector<double> v;
  std::vector<double> a;
  std::vector<double> length;

  std::size_t size() const { return x.size(); }
  std::size_t followers() const { return x.empty() ? 0 : x.size() - 1; }

  // Bumper-to-bumper gap in front of vehicle n (n >= 1).
  double gap(std::size_t n) const { return x[n - 1] - x[n] - length[n - 1]; }

  // Distance from follower n to the leader, used as the link distance.
  double distance_to_leader(std::size_t n) const { return x[0] - x[n]; }
};

struct PlatoonInit {
  std::size_t followers = 20;
  double speed_lo = 15.0;
  double speed_hi = 20.0;
  double gap_lo = 10.0;
  double gap_hi = 15.0;
  double vehicle_length = 5.0;
};

inline double safe_distance(double v, double dv, const IdmParams& p) {
  return p.d_min + p.t_min * v + v * dv / (2.0 * std::sqrt(p.a_max * p.b_max));
}

inline double idm_acceleration(double v, double dv, double dx, const IdmParams& p) {
  if (!(dx > 0.0)) throw CollisionError("non-positive gap in IDM acceleration");
  const double s = safe_distance(v, dv, p) / dx;
  return p.a_max * (1.0 - std::pow(v / p.v_des, p.sensitivity_exponent) - s * s);
}

inline PlatoonState init_platoon(const PlatoonInit& init, const LeaderProfile& leader,
                                 Rng& rng) {
  PlatoonState s;
  const std::size_t n = init.followers + 1;
  s.x.resize(n);
  s.v.resize(n);
  s.a.assign(n, 0.0);
  s.length.assign(n, init.vehicle_length);
  s.x[0] = 0.0;
  s.v[0] = leader.speed_at(0.0);
  for (std::size_t i = 1; i < n; ++i) {
    s.v[i] = rng.uniform(init.speed_lo, init.speed_hi);
    s.x[i] = s.x[i - 1] - s.length[i - 1] - rng.uniform(init.gap_lo, init.gap_hi);
  }
  return s;
}

namespace detail {

struct Kinematics {
  double x, v, a;
};

inline Kinematics integrate(double x, double v, double a, double tau) {
  const double v_next = v + a * tau;
  if (v_next >= 0.0) return {x + v * tau + 0.5 * a * tau * tau, v_next, a};
  // Stops inside the step.
  return {x + v * v / (2.0 * -a), 0.0, 0.0};
}

}  // namespace detail

inline PlatoonState step_platoon(const PlatoonState& s, const IdmParams& p,
                                 const LeaderProfile& leader) {
  PlatoonState out = s;
  out.time = s.time + p.tau;
  const double v_lead = leader.speed_at(out.time);
  out.a[0] = (v_lead - s.v[0]) / p.tau;
  out.v[0] = v_lead;
  out.x[0] = s.x[0] + 0.5 * (s.v[0] + v_lead) * p.tau;
  for (std::size_t n = 1; n < s.size(); ++n) {
    const double dv = s.v[n] - s.v[n - 1];
    double a = idm_acceleration(s.v[n], dv, s.gap(n), p);
    a = std::max(a, -p.emergency_decel);
    const auto k = detail::integrate(s.x[n], s.v[n], a, p.tau);
    out.x[n] = k.x;
    out.v[n] = k.v;
    out.a[n] = k.a;
  }
  for (std::size_t n = 1; n < out.size(); ++n)
    if (!(out.gap(n) > 0.0))
      throw CollisionError("collision behind vehicle " + std::to_string(n - 1) + " at t=" +
                           std::to_string(out.time));
  return out;
}

// Positions linearly interpolated between two round boundaries.
inline std::vector<double> interpolate_distances(const PlatoonState& from, const PlatoonState& to,
                                                 double frac) {
  std::vector<double> d(from.followers());
  for (std::size_t n = 1; n < from.size(); ++n) {
    const double lead = from.x[0] + frac * (to.x[0] - from.x[0]);
    const double me = from.x[n] + frac * (to.x[n] - from.x[n]);
    d[n - 1] = lead - me;
  }
  return d;
}

}  // namespace race

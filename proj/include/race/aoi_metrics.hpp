#pragma once

#include <cstddef>
#include <vector>

namespace race {

inline double update_aoi(double prev, bool selected, double round_delay) {
  return selected ? 0.0 : prev + round_delay;
}

inline std::vector<double> update_aoi(const std::vector<double>& prev,
                                      const std::vector<char>& selected, double round_delay) {
  std::vector<double> out(prev.size());
  for (std::size_t n = 0; n < prev.size(); ++n)
    out[n] = update_aoi(prev[n], selected[n] != 0, round_delay);
  return out;
}

inline double reward(const std::vector<double>& aoi, const std::vector<double>& theta,
                     double alpha, double beta, int m, int k) {
  double sa = 0.0, st = 0.0;
  for (double d : aoi) sa += d;
  for (double t : theta) st += t * t;
  return -(alpha * sa + beta * st) / (static_cast<double>(m) * static_cast<double>(k));
}

// One round's term of the cumulative objective; FLMD enters linearly here.
inline double objective_term(const std::vector<double>& aoi, const std::vector<double>& theta,
                             double alpha, double beta) {
  double sa = 0.0, st = 0.0;
  for (double d : aoi) sa += d;
  for (double t : theta) st += t;
  return alpha * sa + beta * st;
}

struct RoundLedger {
  int episode = 0;
  int round = 0;
  std::vector<double> aoi;
  std::vector<double> theta;
  std::vector<double> gain;
  std::vector<int> assignment;
  std::vector<char> aggregated;
  std::vector<double> delay;
  std::vector<double> energy;
  double round_delay = 0.0;
  std::vector<double> reward;
  double objective = 0.0;
  double objective_cum = 0.0;
  double accuracy = 0.0;
};

inline double objective_value(const std::vector<RoundLedger>& traj, double alpha, double beta) {
  double s = 0.0;
  for (const auto& l : traj) s += objective_term(l.aoi, l.theta, alpha, beta);
  return s;
}

inline double sum_aoi(const std::vector<RoundLedger>& traj) { return objective_value(traj, 1.0, 0.0); }

}  // namespace race

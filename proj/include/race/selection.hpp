#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "race/errors.hpp"
#include "race/nn/tsfen.hpp"
#include "race/rng.hpp"

namespace race {

// One sub-period observation for every device.
struct Snapshot {
  std::vector<double> theta;
  std::vector<double> gain;
  std::vector<double> aoi;
};

// Row-major (sub-period, device, feature) with features (theta, gain, aoi).
struct MdpState {
  int history = 0;
  int devices = 0;
  std::vector<double> data;

  double at(int m, int n, int f) const {
    return data[(static_cast<std::size_t>(m) * devices + n) * 3 + f];
  }
};

inline MdpState build_state(const std::vector<Snapshot>& hist, int history) {
  if (hist.empty()) throw Error("state needs at least one snapshot");
  if (history < 1) throw Error("history length must be at least 1");
  MdpState s;
  s.history = history;
  s.devices = static_cast<int>(hist.front().theta.size());
  s.data.resize(static_cast<std::size_t>(history) * s.devices * 3);
  const int have = static_cast<int>(hist.size());
  for (int m = 0; m < history; ++m) {
    // Oldest slot first; pad with the earliest available snapshot.
    const int idx = std::max(0, have - history + m);
    const Snapshot& snap = hist[idx];
    for (int n = 0; n < s.devices; ++n) {
      auto* row = &s.data[(static_cast<std::size_t>(m) * s.devices + n) * 3];
      row[0] = snap.theta[n];
      row[1] = snap.gain[n];
      row[2] = snap.aoi[n];
    }
  }
  return s;
}

inline std::vector<double> binary_mask(const std::vector<double>& theta, double threshold) {
  std::vector<double> m(theta.size());
  for (std::size_t n = 0; n < theta.size(); ++n) m[n] = theta[n] <= threshold ? 1.0 : 0.0;
  return m;
}

inline std::vector<double> adaptive_mask(const std::vector<double>& theta, double threshold,
                                         double beta_temp, double pl_ratio, int t) {
  if (!(pl_ratio > 0.0 && pl_ratio < 1.0)) throw Error("PL ratio must lie in (0, 1)");
  if (!(beta_temp > 0.0)) throw Error("mask temperature must be positive");
  std::vector<double> m(theta.size());
  // log of (1 - ratio)^(-t), kept in log space to avoid overflow.
  const double growth = -static_cast<double>(t) * std::log1p(-pl_ratio);
  for (std::size_t n = 0; n < theta.size(); ++n) {
    if (theta[n] <= threshold) {
      m[n] = 1.0;
      continue;
    }
    const double log_rate = std::log(beta_temp * theta[n]) + growth;
    m[n] = log_rate > std::log(745.0) ? 0.0 : std::exp(-std::exp(log_rate));
  }
  return m;
}

struct SelectionAction {
  // Device per subchannel, -1 when the subchannel is idle.
  std::vector<int> device;
  // Mask each agent actually sampled from, with earlier claims removed.
  std::vector<std::vector<double>> effective_mask;
  std::vector<double> log_prob;

  std::vector<char> selected(std::size_t devices) const {
    std::vector<char> s(devices, 0);
    for (int d : device)
      if (d >= 0) s[d] = 1;
    return s;
  }
};

// Agents act in index order; each draws from its own distribution restricted to
// devices not yet claimed. probs_for(k, mask) returns agent k's distribution.
template <class ProbFn>
SelectionAction select_actions(int agents, const std::vector<double>& mask, ProbFn&& probs_for,
                               Rng& rng, bool greedy = false) {
  SelectionAction a;
  std::vector<double> avail = mask;
  for (int k = 0; k < agents; ++k) {
    a.effective_mask.push_back(avail);
    const bool any = std::any_of(avail.begin(), avail.end(), [](double v) { return v > 0.0; });
    if (!any) {
      a.device.push_back(-1);
      a.log_prob.push_back(0.0);
      continue;
    }
    const std::vector<double> p = probs_for(k, avail);
    std::size_t pick;
    if (greedy) {
      pick = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    } else {
      pick = rng.discrete(p);
    }
    if (!(avail[pick] > 0.0)) throw Error("policy selected a masked device");
    a.device.push_back(static_cast<int>(pick));
    a.log_prob.push_back(std::log(p[pick]));
    avail[pick] = 0.0;
  }
  return a;
}

inline double td_residual(double r, double v_next, double v_now, double gamma) {
  return r + gamma * v_next - v_now;
}

inline std::vector<double> gae(const std::vector<double>& residuals, double gamma, double lambda) {
  std::vector<double> adv(residuals.size());
  double acc = 0.0;
  for (std::size_t t = residuals.size(); t-- > 0;) {
    acc = residuals[t] + gamma * lambda * acc;
    adv[t] = acc;
  }
  return adv;
}

enum class BaselineKind { Random, RoundRobin, GreedyAoi, ConvexGreedy };

inline BaselineKind parse_baseline(const std::string& s) {
  if (s == "random") return BaselineKind::Random;
  if (s == "round_robin") return BaselineKind::RoundRobin;
  if (s == "greedy_aoi") return BaselineKind::GreedyAoi;
  if (s == "convex_greedy") return BaselineKind::ConvexGreedy;
  throw ConfigError("unknown baseline policy: " + s);
}

inline std::string to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::Random: return "random";
    case BaselineKind::RoundRobin: return "round_robin";
    case BaselineKind::GreedyAoi: return "greedy_aoi";
    case BaselineKind::ConvexGreedy: return "convex_greedy";
  }
  return "";
}

// K eligible devices with the largest age, ties to the lowest index.
inline std::vector<int> greedy_aoi(const std::vector<double>& aoi, const std::vector<double>& mask,
                                   int agents) {
  std::vector<int> idx;
  for (std::size_t n = 0; n < aoi.size(); ++n)
    if (mask[n] > 0.0) idx.push_back(static_cast<int>(n));
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return aoi[a] > aoi[b]; });
  std::vector<int> out(agents, -1);
  for (int k = 0; k < agents && k < static_cast<int>(idx.size()); ++k) out[k] = idx[k];
  return out;
}

class BaselinePolicy {
 public:
  explicit BaselinePolicy(BaselineKind kind) : kind_(kind) {}

  void reset() { cursor_ = 0; }

  SelectionAction select(const std::vector<double>& aoi, const std::vector<double>& mask,
                         int agents, Rng& rng) {
    SelectionAction a;
    const int n = static_cast<int>(mask.size());
    switch (kind_) {
      case BaselineKind::Random: {
        auto uniform = [&](int, const std::vector<double>& m) {
          std::vector<double> p(m.size());
          double s = 0;
          for (std::size_t i = 0; i < m.size(); ++i) s += p[i] = m[i] > 0 ? 1.0 : 0.0;
          for (auto& v : p) v /= s;
          return p;
        };
        return select_actions(agents, mask, uniform, rng);
      }
      case BaselineKind::RoundRobin: {
        std::vector<double> avail = mask;
        for (int k = 0; k < agents; ++k) {
          int pick = -1;
          for (int step = 0; step < n; ++step) {
            const int d = (cursor_ + step) % n;
            if (avail[d] > 0.0) {
              pick = d;
              cursor_ = (d + 1) % n;
              break;
            }
          }
          a.device.push_back(pick);
          if (pick >= 0) avail[pick] = 0.0;
        }
        return a;
      }
      case BaselineKind::GreedyAoi:
      case BaselineKind::ConvexGreedy:
        a.device = greedy_aoi(aoi, mask, agents);
        return a;
    }
    return a;
  }

  BaselineKind kind() const { return kind_; }

 private:
  BaselineKind kind_;
  int cursor_ = 0;
};

}  // namespace race

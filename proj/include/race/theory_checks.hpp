#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "race/errors.hpp"
#include "race/fl_engine.hpp"
#include "race/rng.hpp"

namespace race::theory {

// f_n(w) = 0.5 (w - c_n)^T A_n (w - c_n); F(w) = (1/N) sum zeta_n f_n(w).
struct QuadraticTestProblem {
  std::vector<Mat> A;
  std::vector<Vec> c;
  std::vector<double> zeta;
  double L = 0.0;
  double mu_pl = 0.0;
  Vec w_star;

  std::size_t devices() const { return A.size(); }
  int dim() const { return static_cast<int>(w_star.size()); }

  void finalize() {
    const std::size_t n = A.size();
    if (n == 0 || c.size() != n) throw Error("quadratic problem needs matching A and c");
    if (zeta.empty()) zeta.assign(n, 1.0);
    const int d = static_cast<int>(A.front().rows());
    Mat H = Mat::Zero(d, d);
    Vec b = Vec::Zero(d);
    for (std::size_t i = 0; i < n; ++i) {
      H += zeta[i] * A[i];
      b += zeta[i] * (A[i] * c[i]);
    }
    H /= static_cast<double>(n);
    b /= static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Mat> es(H, Eigen::EigenvaluesOnly);
    mu_pl = es.eigenvalues().minCoeff();
    L = es.eigenvalues().maxCoeff();
    if (!(mu_pl > 0)) throw Error("average Hessian must be positive definite");
    w_star = H.ldlt().solve(b);
  }

  double f(std::size_t n, const Vec& w) const {
    const Vec d = w - c[n];
    return 0.5 * d.dot(A[n] * d);
  }
  Vec grad(std::size_t n, const Vec& w) const { return A[n] * (w - c[n]); }

  double F(const Vec& w) const {
    double s = 0.0;
    for (std::size_t n = 0; n < devices(); ++n) s += zeta[n] * f(n, w);
    return s / static_cast<double>(devices());
  }
  Vec gradF(const Vec& w) const {
    Vec g = Vec::Zero(w.size());
    for (std::size_t n = 0; n < devices(); ++n) g += zeta[n] * grad(n, w);
    return g / static_cast<double>(devices());
  }
  double gap(const Vec& w) const { return F(w) - F(w_star); }

  // Random SPD curvatures and centres; spread scales the centre heterogeneity.
  static QuadraticTestProblem random(std::size_t n, int d, Rng& rng, double spread = 1.0) {
    QuadraticTestProblem p;
    for (std::size_t i = 0; i < n; ++i) {
      Mat B(d, d);
      for (int r = 0; r < d; ++r)
        for (int s = 0; s < d; ++s) B(r, s) = rng.normal();
      Mat a = B * B.transpose() / d + 0.2 * Mat::Identity(d, d);
      Vec ci(d);
      for (int r = 0; r < d; ++r) ci(r) = spread * rng.normal();
      p.A.push_back(a);
      p.c.push_back(ci);
    }
    p.zeta.assign(n, 1.0);
    p.finalize();
    return p;
  }
};

// All K-subsets of {0..n-1} in lexicographic order.
inline std::vector<std::vector<int>> subsets(int n, int k) {
  std::vector<std::vector<int>> out;
  if (k < 0 || k > n) return out;
  std::vector<int> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    out.push_back(idx);
    int i = k - 1;
    while (i >= 0 && idx[i] == n - k + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return out;
}

// Subset gradient (1/K) sum_S zeta_n grad f_n.
inline Vec subset_gradient(const QuadraticTestProblem& p, const std::vector<int>& s, const Vec& w) {
  Vec g = Vec::Zero(w.size());
  for (int n : s) g += p.zeta[n] * p.grad(n, w);
  return g / static_cast<double>(s.size());
}

// Exact E||e||^2 over uniform K-subsets drawn from `pool` (all devices when empty).
inline double deviation_second_moment(const QuadraticTestProblem& p, int k, const Vec& w,
                                      const std::vector<int>& pool = {}) {
  std::vector<int> ids = pool;
  if (ids.empty())
    for (std::size_t n = 0; n < p.devices(); ++n) ids.push_back(static_cast<int>(n));
  const Vec full = p.gradF(w);
  double acc = 0.0;
  const auto ss = subsets(static_cast<int>(ids.size()), k);
  if (ss.empty()) throw Error("subset size exceeds the pool");
  for (const auto& s : ss) {
    std::vector<int> pick;
    for (int i : s) pick.push_back(ids[i]);
    acc += (subset_gradient(p, pick, w) - full).squaredNorm();
  }
  return acc / static_cast<double>(ss.size());
}

inline double subset_deviation_bound(const QuadraticTestProblem& p, int k, const Vec& w) {
  const double n = static_cast<double>(p.devices());
  if (p.devices() < 2) return 0.0;
  const Vec full = p.gradF(w);
  double s = 0.0, zbar = 0.0;
  for (std::size_t i = 0; i < p.devices(); ++i) {
    s += p.zeta[i] * p.zeta[i] * (p.grad(i, w) - full).squaredNorm();
    zbar += p.zeta[i] / n;
  }
  return (1.0 - k / n) * s / (k * (n - 1.0) * zbar * zbar);
}

inline double gamma_sq(const QuadraticTestProblem& p, const Vec& w) {
  const Vec full = p.gradF(w);
  double g = 0.0;
  for (std::size_t i = 0; i < p.devices(); ++i)
    g = std::max(g, p.zeta[i] * p.zeta[i] * (p.grad(i, w) - full).squaredNorm());
  return g;
}

struct SubsetDeviationResult {
  double empirical = 0.0;
  double bound = 0.0;
  bool holds = false;
};

inline SubsetDeviationResult verify_subset_deviation(const QuadraticTestProblem& p, int k, const Vec& w,
                                  double rel_tol = 1e-10) {
  if (p.devices() > 8) throw Error("enumeration is limited to N <= 8");
  SubsetDeviationResult r;
  r.empirical = deviation_second_moment(p, k, w);
  r.bound = subset_deviation_bound(p, k, w);
  // Absolute floor for the rounding left when both sides vanish.
  double scale = 0.0;
  for (std::size_t n = 0; n < p.devices(); ++n)
    scale += p.zeta[n] * p.zeta[n] * p.grad(n, w).squaredNorm();
  r.holds = r.empirical <= r.bound * (1.0 + rel_tol) + 1e-24 * scale;
  return r;
}

inline std::vector<int> sample_subset(int n, int k, Rng& rng) {
  std::vector<int> ids(n);
  for (int i = 0; i < n; ++i) ids[i] = i;
  for (int i = 0; i < k; ++i) std::swap(ids[i], ids[i + static_cast<int>(rng.below(n - i))]);
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

struct ConvergenceTrace {
  // Index t covers rounds 0..T: lhs[t] = E[F(w[t+1]) - F*].
  std::vector<double> lhs, deviation_bound, hetero_bound, deviation, gamma2;
  int deviation_violations = 0;
  int hetero_violations = 0;
  int order_violations = 0;
};

// Partial-participation GD with step 1/L from w1, Monte Carlo over subset draws.
inline ConvergenceTrace verify_pl_convergence(const QuadraticTestProblem& p, int k, const Vec& w1,
                                        int rounds, int trajectories, Rng& rng) {
  const int n = static_cast<int>(p.devices());
  const double xi = 1.0 / p.L;
  const double q = 1.0 - p.mu_pl / p.L;
  std::vector<Vec> w(trajectories, w1);
  ConvergenceTrace tr;
  tr.lhs.assign(rounds + 1, 0.0);
  tr.deviation.assign(rounds + 1, 0.0);
  tr.gamma2.assign(rounds + 1, 0.0);
  const double gap1 = p.gap(w1);
  tr.lhs[0] = gap1;
  for (int i = 1; i <= rounds; ++i) {
    double dev = 0.0, g2 = 0.0, gap = 0.0;
    for (auto& wj : w) {
      dev += deviation_second_moment(p, k, wj);
      g2 += gamma_sq(p, wj);
      wj -= xi * subset_gradient(p, sample_subset(n, k, rng), wj);
      gap += p.gap(wj);
    }
    tr.deviation[i] = dev / trajectories;
    tr.gamma2[i] = g2 / trajectories;
    tr.lhs[i] = gap / trajectories;
  }
  const double zbar = std::accumulate(p.zeta.begin(), p.zeta.end(), 0.0) / n;
  const double hetero_factor = (1.0 - static_cast<double>(k) / n) / (2.0 * p.L * k * zbar * zbar);
  for (int t = 0; t <= rounds; ++t) {
    double s_dev = 0.0, s_het = 0.0;
    for (int i = 1; i <= t; ++i) {
      const double w_i = std::pow(q, t - i);
      s_dev += w_i * tr.deviation[i];
      s_het += w_i * tr.gamma2[i];
    }
    const double base = std::pow(q, t) * gap1;
    tr.deviation_bound.push_back(base + s_dev / (2.0 * p.L));
    tr.hetero_bound.push_back(base + hetero_factor * s_het);
    if (tr.lhs[t] > tr.deviation_bound[t] * (1.0 + 1e-12) + 1e-300) ++tr.deviation_violations;
    if (tr.lhs[t] > tr.hetero_bound[t] * (1.0 + 1e-12) + 1e-300) ++tr.hetero_violations;
    if (tr.hetero_bound[t] < tr.deviation_bound[t] * (1.0 - 1e-12)) ++tr.order_violations;
  }
  return tr;
}

struct AdaptiveThresholdResult {
  std::vector<double> ratio;
  std::vector<double> dev_adaptive, dev_fixed;
  int rounds_checked = 0;
  int rounds_skipped = 0;
  int subset_violations = 0;
  int ratio_violations = 0;
  int inequality_violations = 0;
};

inline std::vector<double> drift(const QuadraticTestProblem& p, const Vec& w, double xi) {
  std::vector<double> th(p.devices());
  const double wn = w.norm();
  for (std::size_t n = 0; n < p.devices(); ++n) th[n] = xi * p.grad(n, w).norm() / wn;
  return th;
}

// Adaptive threshold run against the fixed threshold lam_min at the same iterates.
inline AdaptiveThresholdResult verify_adaptive_threshold(const QuadraticTestProblem& p, int k, const Vec& w0,
                                      double lam_min, double lam_max, double beta_adapt,
                                      int rounds, Rng& rng) {
  if (p.devices() > 8) throw Error("enumeration is limited to N <= 8");
  const double xi = 1.0 / p.L;
  const double g0 = p.gradF(w0).norm();
  Vec w = w0;
  AdaptiveThresholdResult r;
  for (int t = 0; t < rounds; ++t) {
    const auto th = drift(p, w, xi);
    const double lam_a = adaptive_threshold(p.gradF(w).norm(), g0, lam_min, lam_max, beta_adapt);
    std::vector<int> mf, ma;
    for (std::size_t n = 0; n < th.size(); ++n) {
      if (th[n] <= lam_min) mf.push_back(static_cast<int>(n));
      if (th[n] <= lam_a) ma.push_back(static_cast<int>(n));
    }
    for (int n : mf)
      if (std::find(ma.begin(), ma.end(), n) == ma.end()) ++r.subset_violations;
    if (static_cast<int>(mf.size()) < k) {
      ++r.rounds_skipped;
      r.ratio.push_back(std::nan(""));
    } else {
      const double rho = static_cast<double>(ma.size()) / static_cast<double>(mf.size());
      r.ratio.push_back(rho);
      if (rho < 1.0) ++r.ratio_violations;
      const double ea = deviation_second_moment(p, k, w, ma);
      const double ef = deviation_second_moment(p, k, w, mf);
      r.dev_adaptive.push_back(ea);
      r.dev_fixed.push_back(ef);
      if (ea > rho * ef * (1.0 + 1e-12) + 1e-300) ++r.inequality_violations;
      ++r.rounds_checked;
    }
    if (ma.size() >= static_cast<std::size_t>(k) && k > 0) {
      std::vector<int> pick;
      for (int i : sample_subset(static_cast<int>(ma.size()), k, rng)) pick.push_back(ma[i]);
      w -= xi * subset_gradient(p, pick, w);
    }
  }
  return r;
}

struct BallResult {
  int exits = 0;
  double max_distance = 0.0;
  double step = 0.0;
};

// Step size from the relaxed-smoothness statement; counts trajectories leaving the ball.
inline BallResult verify_ball_containment(const QuadraticTestProblem& p, int k, double radius, double eps,
                                  double delta, int steps, int seeds, std::uint64_t root) {
  BallResult r;
  r.step = eps / (2.0 * p.L * steps * std::sqrt(std::log(1.0 / delta)));
  const int n = static_cast<int>(p.devices());
  for (int s = 0; s < seeds; ++s) {
    Rng rng = Rng::stream(root + static_cast<std::uint64_t>(s), "ball");
    Vec dir(p.dim());
    for (int i = 0; i < p.dim(); ++i) dir(i) = rng.normal();
    Vec w = p.w_star + dir.normalized() * (radius - eps) * rng.uniform();
    bool out = false;
    for (int t = 0; t < steps; ++t) {
      w -= r.step * subset_gradient(p, sample_subset(n, k, rng), w);
      const double d = (w - p.w_star).norm();
      r.max_distance = std::max(r.max_distance, d);
      if (d > radius) out = true;
    }
    if (out) ++r.exits;
  }
  return r;
}

// Non-convex 2-D devices: f_n(w) = 0.5||w - c_n||^2 + a_n cos(u_n . w).
struct NonconvexProblem {
  std::vector<Eigen::Vector2d> c, u;
  std::vector<double> a;

  std::size_t devices() const { return c.size(); }
  double f(std::size_t n, const Eigen::Vector2d& w) const {
    return 0.5 * (w - c[n]).squaredNorm() + a[n] * std::cos(u[n].dot(w));
  }
  Eigen::Vector2d grad(std::size_t n, const Eigen::Vector2d& w) const {
    return (w - c[n]) - a[n] * std::sin(u[n].dot(w)) * u[n];
  }
  double F(const Eigen::Vector2d& w) const {
    double s = 0.0;
    for (std::size_t n = 0; n < devices(); ++n) s += f(n, w);
    return s / static_cast<double>(devices());
  }
  Eigen::Vector2d gradF(const Eigen::Vector2d& w) const {
    Eigen::Vector2d g = Eigen::Vector2d::Zero();
    for (std::size_t n = 0; n < devices(); ++n) g += grad(n, w);
    return g / static_cast<double>(devices());
  }
  // Hessian of F is I - mean(a_n cos(.) u_n u_n^T); this bounds its spectral norm.
  double smoothness() const {
    double s = 0.0;
    for (std::size_t n = 0; n < devices(); ++n) s += std::abs(a[n]) * u[n].squaredNorm();
    return 1.0 + s / static_cast<double>(devices());
  }

  static NonconvexProblem random(std::size_t n, Rng& rng) {
    NonconvexProblem p;
    for (std::size_t i = 0; i < n; ++i) {
      p.c.emplace_back(rng.uniform(-2, 2), rng.uniform(-2, 2));
      const double ang = rng.uniform(0, 2 * M_PI);
      const double mag = rng.uniform(1.0, 2.5);
      p.u.emplace_back(mag * std::cos(ang), mag * std::sin(ang));
      p.a.push_back(rng.uniform(0.3, 1.0));
    }
    return p;
  }

  // Dense grid over a box holding every minimiser, then gradient polishing.
  double global_min(int grid = 801) const {
    double lo = -1e300, hi = 1e300;
    double box = 0.0;
    for (std::size_t n = 0; n < devices(); ++n)
      box = std::max(box, c[n].lpNorm<Eigen::Infinity>() + std::abs(a[n]) * u[n].norm());
    lo = -box - 1.0;
    hi = box + 1.0;
    double best = 1e300;
    Eigen::Vector2d arg;
    for (int i = 0; i < grid; ++i)
      for (int j = 0; j < grid; ++j) {
        const Eigen::Vector2d w(lo + (hi - lo) * i / (grid - 1), lo + (hi - lo) * j / (grid - 1));
        const double v = F(w);
        if (v < best) {
          best = v;
          arg = w;
        }
      }
    const double step = 1.0 / smoothness();
    for (int it = 0; it < 20000; ++it) {
      arg -= step * gradF(arg);
      best = std::min(best, F(arg));
    }
    return best;
  }
};

struct NonconvexResult {
  double min_grad_sq = 0.0;
  double bound = 0.0;
  double f_star = 0.0;
  bool holds = false;
};

inline NonconvexResult verify_nonconvex_rate(const NonconvexProblem& p, int k, const Eigen::Vector2d& w0,
                                      int rounds, int trajectories, Rng& rng) {
  const int n = static_cast<int>(p.devices());
  const double L = p.smoothness();
  const double xi = 1.0 / L;
  std::vector<Eigen::Vector2d> w(trajectories, w0);
  std::vector<double> g2(rounds, 0.0);
  double dev_sum = 0.0;
  const auto ss = subsets(n, k);
  for (int t = 0; t < rounds; ++t) {
    double dev = 0.0;
    for (auto& wj : w) {
      const Eigen::Vector2d full = p.gradF(wj);
      g2[t] += full.squaredNorm() / trajectories;
      double e = 0.0;
      for (const auto& s : ss) {
        Eigen::Vector2d gs = Eigen::Vector2d::Zero();
        for (int i : s) gs += p.grad(i, wj);
        e += (gs / k - full).squaredNorm();
      }
      dev += e / static_cast<double>(ss.size()) / trajectories;
      Eigen::Vector2d gs = Eigen::Vector2d::Zero();
      for (int i : sample_subset(n, k, rng)) gs += p.grad(i, wj);
      wj -= xi * gs / k;
    }
    dev_sum += dev;
  }
  NonconvexResult r;
  r.f_star = p.global_min();
  r.min_grad_sq = *std::min_element(g2.begin(), g2.end());
  r.bound = (2.0 * L * (p.F(w0) - r.f_star) + dev_sum) / rounds;
  r.holds = r.min_grad_sq <= r.bound;
  return r;
}

}  // namespace race::theory

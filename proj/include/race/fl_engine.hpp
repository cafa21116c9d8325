#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "race/errors.hpp"
#include "race/rng.hpp"

namespace race {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct TaskConfig {
  std::size_t devices = 20;
  int classes = 4;
  // Raw features; a bias column is appended, so the model has classes * (features + 1) entries.
  int features = 49;
  std::size_t train_samples = 2000;
  std::size_t test_samples = 1000;
  double dirichlet = 0.5;
  std::vector<double> class_weights{0.36, 0.46, 0.16, 0.02};
  double cluster_scale = 0.2;
  int max_resample = 100;

  int dim() const { return classes * (features + 1); }

  void validate() const {
    if (classes < 2) throw ConfigError("task needs at least two classes");
    if (features < 1) throw ConfigError("task needs at least one feature");
    if (!(dirichlet > 0)) throw ConfigError("Dirichlet concentration must be positive");
    if (devices < 1) throw ConfigError("task needs at least one device");
    if (class_weights.size() != static_cast<std::size_t>(classes))
      throw ConfigError("class weights must have one entry per class");
    for (double w : class_weights)
      if (!(w > 0)) throw ConfigError("class weights must be positive");
    if (train_samples < devices) throw ConfigError("fewer training samples than devices");
  }
};

struct Shard {
  Mat x;  // rows are samples, last column is the constant 1
  std::vector<int> y;

  std::size_t size() const { return y.size(); }
};

struct SyntheticTask {
  int classes = 0;
  int features = 0;
  std::vector<Shard> shards;
  Shard test;
  // shard_class_counts[n][c]
  std::vector<std::vector<std::size_t>> class_counts;

  int dim() const { return classes * (features + 1); }
  std::vector<double> sample_counts() const {
    std::vector<double> z;
    for (const auto& s : shards) z.push_back(static_cast<double>(s.size()));
    return z;
  }
};

namespace detail {

// Integer split of total proportional to p, largest remainder, ties to lower index.
inline std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& p) {
  std::vector<std::size_t> out(p.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = p[i] * static_cast<double>(total);
    out[i] = static_cast<std::size_t>(std::floor(q));
    used += out[i];
    rem.emplace_back(q - std::floor(q), i);
  }
  std::stable_sort(rem.begin(), rem.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; used < total; ++k, ++used) ++out[rem[k % rem.size()].second];
  return out;
}

inline void fill_rows(Mat& x, std::vector<int>& y, std::size_t row, int label, const Vec& mean,
                      Rng& rng) {
  const auto f = mean.size();
  for (Eigen::Index j = 0; j < f; ++j) x(row, j) = mean(j) + rng.normal();
  x(row, f) = 1.0;
  y[row] = label;
}

}  // namespace detail

inline SyntheticTask generate_task(std::uint64_t seed, const TaskConfig& cfg) {
  cfg.validate();
  Rng rng(seed);
  SyntheticTask task;
  task.classes = cfg.classes;
  task.features = cfg.features;
  std::vector<Vec> means(cfg.classes);
  for (auto& m : means) {
    m.resize(cfg.features);
    for (int j = 0; j < cfg.features; ++j) m(j) = cfg.cluster_scale * rng.normal();
  }
  double wsum = 0.0;
  for (double w : cfg.class_weights) wsum += w;
  std::vector<double> share;
  for (double w : cfg.class_weights) share.push_back(w / wsum);
  const auto per_class = detail::apportion(cfg.train_samples, share);

  std::vector<std::vector<std::size_t>> counts;
  for (int attempt = 0;; ++attempt) {
    if (attempt >= cfg.max_resample)
      throw Error("could not draw a partition without empty devices");
    counts.assign(cfg.devices, std::vector<std::size_t>(cfg.classes, 0));
    for (int c = 0; c < cfg.classes; ++c) {
      const auto p = rng.dirichlet(cfg.devices, cfg.dirichlet);
      const auto split = detail::apportion(per_class[c], p);
      for (std::size_t n = 0; n < cfg.devices; ++n) counts[n][c] = split[n];
    }
    bool ok = true;
    for (const auto& row : counts)
      if (std::accumulate(row.begin(), row.end(), std::size_t{0}) == 0) ok = false;
    if (ok) break;
  }
  task.class_counts = counts;
  task.shards.resize(cfg.devices);
  for (std::size_t n = 0; n < cfg.devices; ++n) {
    const auto total = std::accumulate(counts[n].begin(), counts[n].end(), std::size_t{0});
    auto& s = task.shards[n];
    s.x.resize(static_cast<Eigen::Index>(total), cfg.features + 1);
    s.y.resize(total);
    std::size_t row = 0;
    for (int c = 0; c < cfg.classes; ++c)
      for (std::size_t i = 0; i < counts[n][c]; ++i) detail::fill_rows(s.x, s.y, row++, c, means[c], rng);
  }
  const auto test_split = detail::apportion(cfg.test_samples, share);
  task.test.x.resize(static_cast<Eigen::Index>(cfg.test_samples), cfg.features + 1);
  task.test.y.resize(cfg.test_samples);
  std::size_t row = 0;
  for (int c = 0; c < cfg.classes; ++c)
    for (std::size_t i = 0; i < test_split[c]; ++i)
      detail::fill_rows(task.test.x, task.test.y, row++, c, means[c], rng);
  return task;
}

// Parameters are the (features+1) x classes weight matrix flattened column-major.
inline Mat softmax_rows(const Mat& logits) {
  Mat p = logits;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double m = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

inline double local_loss(const Vec& w, const Shard& s) {
  const auto f = s.x.cols();
  const Eigen::Map<const Mat> W(w.data(), f, w.size() / f);
  const Mat logits = s.x * W;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    loss += lse - logits(i, s.y[i]);
  }
  return loss / static_cast<double>(s.size());
}

inline Vec local_gradient(const Vec& w, const Shard& s) {
  if (s.size() == 0) throw Error("empty shard");
  const auto f = s.x.cols();
  const Eigen::Map<const Mat> W(w.data(), f, w.size() / f);
  Mat p = softmax_rows(s.x * W);
  for (std::size_t i = 0; i < s.size(); ++i) p(static_cast<Eigen::Index>(i), s.y[i]) -= 1.0;
  Mat g = s.x.transpose() * p / static_cast<double>(s.size());
  return Eigen::Map<Vec>(g.data(), g.size());
}

inline Vec local_update(const Vec& w, const Shard& s, double xi) {
  return w - xi * local_gradient(w, s);
}

inline double accuracy(const Vec& w, const Shard& s) {
  const auto f = s.x.cols();
  const Eigen::Map<const Mat> W(w.data(), f, w.size() / f);
  const Mat logits = s.x * W;
  std::size_t hit = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index arg;
    logits.row(i).maxCoeff(&arg);
    if (arg == s.y[i]) ++hit;
  }
  return s.size() ? static_cast<double>(hit) / static_cast<double>(s.size()) : 0.0;
}

inline Vec fedavg(const std::vector<Vec>& models, const std::vector<double>& weights) {
  if (models.empty()) throw Error("cannot aggregate an empty selection");
  if (models.size() != weights.size()) throw Error("one weight per model is required");
  Vec out = Vec::Zero(models.front().size());
  double total = 0.0;
  for (std::size_t i = 0; i < models.size(); ++i) {
    out += weights[i] * models[i];
    total += weights[i];
  }
  if (!(total > 0)) throw Error("aggregation weights must have positive sum");
  return out / total;
}

inline double flmd(const Vec& local, const Vec& global) {
  const double n = global.norm();
  if (!(n > 0.0)) throw Error("FLMD is undefined for a zero global model");
  return (local - global).norm() / n;
}

inline std::vector<std::size_t> eligible_set(const std::vector<double>& theta, double threshold) {
  std::vector<std::size_t> out;
  for (std::size_t n = 0; n < theta.size(); ++n)
    if (theta[n] <= threshold) out.push_back(n);
  return out;
}

inline double adaptive_threshold(double grad_norm_now, double grad_norm_init, double lam_min,
                                 double lam_max, double beta) {
  if (!(grad_norm_init > 0)) throw Error("initial gradient norm must be positive");
  const double r = grad_norm_now / grad_norm_init;
  return lam_min + (lam_max - lam_min) * std::exp(-beta * r * r);
}

// Upper bound on the gradient Lipschitz constant of a shard's softmax loss.
inline double smoothness_bound(const Shard& s) {
  const Mat gram = s.x.transpose() * s.x / static_cast<double>(s.size());
  Eigen::SelfAdjointEigenSolver<Mat> es(gram, Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().maxCoeff();
}

inline Vec initial_model(int dim, double scale, Rng& rng) {
  Vec w(dim);
  for (int i = 0; i < dim; ++i) w(i) = scale * rng.normal();
  return w;
}

}  // namespace race

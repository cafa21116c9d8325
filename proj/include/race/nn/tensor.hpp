#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "race/errors.hpp"
#include "race/rng.hpp"

namespace race::nn {

template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
using RowVector = Eigen::Matrix<S, 1, Eigen::Dynamic>;

template <class S>
struct Param {
  std::string name;
  Matrix<S> value;
  Matrix<S> grad;

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Matrix<S>::Zero(rows, cols)), grad(Matrix<S>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
};

template <class S>
void init_uniform(Param<S>& p, double fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(fan_in);
  for (Eigen::Index i = 0; i < p.value.size(); ++i)
    p.value.data()[i] = static_cast<S>(rng.uniform(-bound, bound));
}

template <class S>
using ParamList = std::vector<Param<S>*>;

template <class S>
std::size_t parameter_count(const ParamList<S>& ps) {
  std::size_t n = 0;
  for (auto* p : ps) n += static_cast<std::size_t>(p->value.size());
  return n;
}

template <class S>
void zero_grads(const ParamList<S>& ps) {
  for (auto* p : ps) p->zero_grad();
}

template <class S>
S sigmoid(S x) {
  return x >= S(0) ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x));
}

}  // namespace race::nn

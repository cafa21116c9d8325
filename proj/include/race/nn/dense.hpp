#pragma once

#include "race/nn/tensor.hpp"

namespace race::nn {

template <class S>
class Dense {
 public:
  Dense() = default;
  Dense(const std::string& name, int in, int out)
      : w_(name + ".w", in, out), b_(name + ".b", 1, out) {}

  void init(Rng& rng) {
    init_uniform(w_, w_.value.rows(), rng);
    init_uniform(b_, w_.value.rows(), rng);
  }

  Matrix<S> forward(const Matrix<S>& x) const {
    Matrix<S> y = x * w_.value;
    y.rowwise() += b_.value.row(0);
    return y;
  }

  // Accumulates parameter gradients and returns the input gradient.
  Matrix<S> backward(const Matrix<S>& x, const Matrix<S>& dy) {
    w_.grad.noalias() += x.transpose() * dy;
    b_.grad.row(0) += dy.colwise().sum();
    return dy * w_.value.transpose();
  }

  void accumulate(const Matrix<S>& x, const Matrix<S>& dy) {
    w_.grad.noalias() += x.transpose() * dy;
    b_.grad.row(0) += dy.colwise().sum();
  }

  int in() const { return static_cast<int>(w_.value.rows()); }
  int out() const { return static_cast<int>(w_.value.cols()); }
  Param<S>& weight() { return w_; }
  Param<S>& bias() { return b_; }
  const Param<S>& weight() const { return w_; }
  void collect(ParamList<S>& ps) {
    ps.push_back(&w_);
    ps.push_back(&b_);
  }

 private:
  Param<S> w_, b_;
};

template <class S>
Matrix<S> relu(const Matrix<S>& x) {
  return x.cwiseMax(S(0));
}

template <class S>
Matrix<S> relu_backward(const Matrix<S>& pre, const Matrix<S>& dy) {
  return (pre.array() > S(0)).select(dy, S(0));
}

}  // namespace race::nn

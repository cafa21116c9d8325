#pragma once

#include <vector>

#include "race/nn/tensor.hpp"

namespace race::nn {

// Gate order in the packed weights: input, forget, cell, output.
template <class S>
class Lstm {
 public:
  struct Step {
    Matrix<S> x, h_prev, c_prev, i, f, g, o, c, tanh_c;
  };
  struct Cache {
    std::vector<Step> steps;
  };

  Lstm() = default;
  Lstm(const std::string& name, int in, int hidden)
      : hidden_(hidden),
        wx_(name + ".wx", in, 4 * hidden),
        wh_(name + ".wh", hidden, 4 * hidden),
        b_(name + ".b", 1, 4 * hidden) {}

  void init(Rng& rng) {
    init_uniform(wx_, hidden_, rng);
    init_uniform(wh_, hidden_, rng);
    init_uniform(b_, hidden_, rng);
  }

  // Runs the sequence in the given order and returns the last hidden state.
  Matrix<S> forward(const std::vector<Matrix<S>>& xs, Cache& cache) const {
    if (xs.empty()) throw ShapeError("LSTM needs at least one step");
    const Eigen::Index rows = xs.front().rows();
    const int hd = hidden_;
    Matrix<S> h = Matrix<S>::Zero(rows, hd), c = Matrix<S>::Zero(rows, hd);
    cache.steps.resize(xs.size());
    Matrix<S> z;
    for (std::size_t t = 0; t < xs.size(); ++t) {
      Step& s = cache.steps[t];
      s.x = xs[t];
      s.h_prev = h;
      s.c_prev = c;
      z.noalias() = xs[t] * wx_.value;
      z.noalias() += h * wh_.value;
      z.rowwise() += b_.value.row(0);
      s.i = z.middleCols(0, hd).unaryExpr([](S v) { return sigmoid(v); });
      s.f = z.middleCols(hd, hd).unaryExpr([](S v) { return sigmoid(v); });
      s.g = z.middleCols(2 * hd, hd).array().tanh();
      s.o = z.middleCols(3 * hd, hd).unaryExpr([](S v) { return sigmoid(v); });
      s.c = s.f.cwiseProduct(c) + s.i.cwiseProduct(s.g);
      s.tanh_c = s.c.array().tanh();
      h = s.o.cwiseProduct(s.tanh_c);
      c = s.c;
    }
    return h;
  }

  // Gradient of the final hidden state; returns input gradients per step.
  std::vector<Matrix<S>> backward(const Cache& cache, const Matrix<S>& dh_last) {
    const int hd = hidden_;
    std::vector<Matrix<S>> dxs(cache.steps.size());
    Matrix<S> dh = dh_last;
    Matrix<S> dc = Matrix<S>::Zero(dh.rows(), hd);
    Matrix<S> dz(dh.rows(), 4 * hd);
    for (std::size_t t = cache.steps.size(); t-- > 0;) {
      const Step& s = cache.steps[t];
      const auto one = S(1);
      dc.array() += dh.array() * s.o.array() * (one - s.tanh_c.array().square());
      dz.middleCols(0, hd) = (dc.array() * s.g.array() * s.i.array() * (one - s.i.array())).matrix();
      dz.middleCols(hd, hd) = (dc.array() * s.c_prev.array() * s.f.array() * (one - s.f.array())).matrix();
      dz.middleCols(2 * hd, hd) = (dc.array() * s.i.array() * (one - s.g.array().square())).matrix();
      dz.middleCols(3 * hd, hd) = (dh.array() * s.tanh_c.array() * s.o.array() * (one - s.o.array())).matrix();
      wx_.grad.noalias() += s.x.transpose() * dz;
      wh_.grad.noalias() += s.h_prev.transpose() * dz;
      b_.grad.row(0) += dz.colwise().sum();
      dxs[t].noalias() = dz * wx_.value.transpose();
      dh.noalias() = dz * wh_.value.transpose();
      dc = dc.cwiseProduct(s.f);
    }
    return dxs;
  }

  int hidden() const { return hidden_; }
  void collect(ParamList<S>& ps) {
    ps.push_back(&wx_);
    ps.push_back(&wh_);
    ps.push_back(&b_);
  }
  Param<S>& input_weight() { return wx_; }
  Param<S>& recurrent_weight() { return wh_; }
  Param<S>& bias() { return b_; }

 private:
  int hidden_ = 0;
  Param<S> wx_, wh_, b_;
};

}  // namespace race::nn

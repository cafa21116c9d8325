#pragma once

#include <cmath>
#include <vector>

#include "race/nn/dense.hpp"

namespace race::nn {

// Multi-head self-attention applied independently within consecutive row groups.
template <class S>
class MultiHeadAttention {
 public:
  struct Cache {
    Matrix<S> x, q, k, v, o;
    std::vector<Matrix<S>> attn;  // one (group_size x group_size) block per (group, head)
    int groups = 0, group_size = 0;
  };

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, int d_model, int heads)
      : heads_(heads),
        q_(name + ".q", d_model, d_model),
        k_(name + ".k", d_model, d_model),
        v_(name + ".v", d_model, d_model),
        o_(name + ".o", d_model, d_model) {
    if (heads <= 0 || d_model % heads != 0)
      throw ShapeError("d_model must be divisible by the number of heads");
  }

  void init(Rng& rng) {
    q_.init(rng);
    k_.init(rng);
    v_.init(rng);
    o_.init(rng);
  }

  Matrix<S> forward(const Matrix<S>& x, int group_size, Cache& c) const {
    if (group_size <= 0 || x.rows() % group_size != 0) throw ShapeError("bad attention grouping");
    const int d = q_.in();
    if (x.cols() != d) throw ShapeError("attention input width mismatch");
    const int dh = d / heads_;
    const S scale = S(1) / std::sqrt(static_cast<S>(dh));
    c.x = x;
    c.q = q_.forward(x);
    c.k = k_.forward(x);
    c.v = v_.forward(x);
    c.groups = static_cast<int>(x.rows() / group_size);
    c.group_size = group_size;
    c.o.resize(x.rows(), d);
    c.attn.resize(static_cast<std::size_t>(c.groups) * heads_);
    for (int g = 0; g < c.groups; ++g) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(g) * group_size;
      for (int h = 0; h < heads_; ++h) {
        auto qb = c.q.block(r0, h * dh, group_size, dh);
        auto kb = c.k.block(r0, h * dh, group_size, dh);
        auto vb = c.v.block(r0, h * dh, group_size, dh);
        Matrix<S>& a = c.attn[static_cast<std::size_t>(g) * heads_ + h];
        a.noalias() = (qb * kb.transpose()) * scale;
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
          const S m = a.row(i).maxCoeff();
          a.row(i) = (a.row(i).array() - m).exp();
          a.row(i) /= a.row(i).sum();
        }
        c.o.block(r0, h * dh, group_size, dh).noalias() = a * vb;
      }
    }
    return o_.forward(c.o);
  }

  Matrix<S> backward(const Cache& c, const Matrix<S>& dy) {
    const int d = q_.in();
    const int dh = d / heads_;
    const S scale = S(1) / std::sqrt(static_cast<S>(dh));
    const Matrix<S> d_o = o_.backward(c.o, dy);
    Matrix<S> dq(c.x.rows(), d), dk(c.x.rows(), d), dv(c.x.rows(), d);
    Matrix<S> da, ds;
    for (int g = 0; g < c.groups; ++g) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(g) * c.group_size;
      const int n = c.group_size;
      for (int h = 0; h < heads_; ++h) {
        const Matrix<S>& a = c.attn[static_cast<std::size_t>(g) * heads_ + h];
        auto dob = d_o.block(r0, h * dh, n, dh);
        da.noalias() = dob * c.v.block(r0, h * dh, n, dh).transpose();
        dv.block(r0, h * dh, n, dh).noalias() = a.transpose() * dob;
        ds = a.array() * (da.colwise() - (da.array() * a.array()).rowwise().sum().matrix()).array();
        dq.block(r0, h * dh, n, dh).noalias() = (ds * c.k.block(r0, h * dh, n, dh)) * scale;
        dk.block(r0, h * dh, n, dh).noalias() = (ds.transpose() * c.q.block(r0, h * dh, n, dh)) * scale;
      }
    }
    Matrix<S> dx = q_.backward(c.x, dq);
    dx += k_.backward(c.x, dk);
    dx += v_.backward(c.x, dv);
    return dx;
  }

  int heads() const { return heads_; }
  void collect(ParamList<S>& ps) {
    q_.collect(ps);
    k_.collect(ps);
    v_.collect(ps);
    o_.collect(ps);
  }

 private:
  int heads_ = 1;
  Dense<S> q_, k_, v_, o_;
};

}  // namespace race::nn

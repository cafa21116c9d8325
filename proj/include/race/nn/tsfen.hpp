#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "race/nn/dense.hpp"
#include "race/nn/lstm.hpp"
#include "race/nn/mhsa.hpp"

namespace race::nn {

struct TsfenConfig {
  int features = 3;
  int d_model = 64;
  int heads = 8;
  // Per direction; the bidirectional output is twice this.
  int lstm_hidden = 64;
  int head_hidden = 128;
  int history = 5;
  int devices = 20;

  void validate() const {
    if (d_model <= 0 || heads <= 0 || d_model % heads != 0)
      throw ConfigError("d_model must be a positive multiple of heads");
    if (lstm_hidden <= 0 || head_hidden <= 0 || history <= 0 || devices <= 0 || features <= 0)
      throw ConfigError("network dimensions must be positive");
  }
};

enum class HeadKind { Policy, Value };

// Embedding -> attention across devices per sub-period -> bidirectional LSTM
// across sub-periods per device -> fully connected head.
//
// Input rows are ordered (batch, sub-period, device); a batch of B states is a
// (B * history * devices) x features matrix.
template <class S>
class Tsfen {
 public:
  struct Cache {
    int batch = 0;
    Matrix<S> x, e, y;
    typename MultiHeadAttention<S>::Cache attn;
    typename Lstm<S>::Cache fwd, bwd;
    Matrix<S> h;       // (batch * devices) x 2H
    Matrix<S> pooled;  // value head input, batch x 2H
    Matrix<S> z1, a1;
  };

  Tsfen() = default;
  Tsfen(const TsfenConfig& cfg, HeadKind kind) : cfg_(cfg), kind_(kind) {
    cfg.validate();
    embed_ = Dense<S>("embed", cfg.features, cfg.d_model);
    attn_ = MultiHeadAttention<S>("mhsa", cfg.d_model, cfg.heads);
    fwd_ = Lstm<S>("lstm_fwd", cfg.d_model, cfg.lstm_hidden);
    bwd_ = Lstm<S>("lstm_bwd", cfg.d_model, cfg.lstm_hidden);
    fc1_ = Dense<S>("fc1", 2 * cfg.lstm_hidden, cfg.head_hidden);
    fc2_ = Dense<S>("fc2", cfg.head_hidden, 1);
  }

  void init(Rng& rng) {
    embed_.init(rng);
    attn_.init(rng);
    fwd_.init(rng);
    bwd_.init(rng);
    fc1_.init(rng);
    fc2_.init(rng);
  }

  ParamList<S> parameters() {
    ParamList<S> ps;
    embed_.collect(ps);
    attn_.collect(ps);
    fwd_.collect(ps);
    bwd_.collect(ps);
    fc1_.collect(ps);
    fc2_.collect(ps);
    return ps;
  }

  const TsfenConfig& config() const { return cfg_; }
  HeadKind kind() const { return kind_; }

  // Policy: returns batch x devices logits. Value: returns batch x 1.
  Matrix<S> forward(const Matrix<S>& x, Cache& c) const {
    const int m = cfg_.history, n = cfg_.devices;
    if (x.cols() != cfg_.features || x.rows() % (m * n) != 0)
      throw ShapeError("state tensor shape does not match the network");
    c.batch = static_cast<int>(x.rows() / (m * n));
    const int b = c.batch;
    c.x = x;
    c.e = embed_.forward(x);
    c.y = attn_.forward(c.e, n, c.attn);
    std::vector<Matrix<S>> seq(m);
    for (int t = 0; t < m; ++t) {
      seq[t].resize(static_cast<Eigen::Index>(b) * n, cfg_.d_model);
      for (int i = 0; i < b; ++i)
        seq[t].middleRows(static_cast<Eigen::Index>(i) * n, n) =
            c.y.middleRows((static_cast<Eigen::Index>(i) * m + t) * n, n);
    }
    const Matrix<S> hf = fwd_.forward(seq, c.fwd);
    std::reverse(seq.begin(), seq.end());
    const Matrix<S> hb = bwd_.forward(seq, c.bwd);
    const int hd = cfg_.lstm_hidden;
    c.h.resize(hf.rows(), 2 * hd);
    c.h.leftCols(hd) = hf;
    c.h.rightCols(hd) = hb;
    if (kind_ == HeadKind::Policy) {
      c.z1 = fc1_.forward(c.h);
      c.a1 = relu(c.z1);
      const Matrix<S> out = fc2_.forward(c.a1);
      return Eigen::Map<const Matrix<S>>(out.data(), b, n);
    }
    c.pooled.resize(b, 2 * hd);
    for (int i = 0; i < b; ++i)
      c.pooled.row(i) = c.h.middleRows(static_cast<Eigen::Index>(i) * n, n).colwise().mean();
    c.z1 = fc1_.forward(c.pooled);
    c.a1 = relu(c.z1);
    return fc2_.forward(c.a1);
  }

  // Accumulates gradients for d(loss)/d(output) given in the forward output shape.
  void backward(const Cache& c, const Matrix<S>& dout) {
    const int m = cfg_.history, n = cfg_.devices, b = c.batch, hd = cfg_.lstm_hidden;
    Matrix<S> dh;
    if (kind_ == HeadKind::Policy) {
      const Matrix<S> d2 = Eigen::Map<const Matrix<S>>(dout.data(), static_cast<Eigen::Index>(b) * n, 1);
      const Matrix<S> da1 = fc2_.backward(c.a1, d2);
      dh = fc1_.backward(c.h, relu_backward(c.z1, da1));
    } else {
      const Matrix<S> da1 = fc2_.backward(c.a1, dout);
      const Matrix<S> dp = fc1_.backward(c.pooled, relu_backward(c.z1, da1));
      dh.resize(static_cast<Eigen::Index>(b) * n, 2 * hd);
      const S inv = S(1) / static_cast<S>(n);
      for (int i = 0; i < b; ++i)
        dh.middleRows(static_cast<Eigen::Index>(i) * n, n).rowwise() = dp.row(i) * inv;
    }
    const auto dxf = fwd_.backward(c.fwd, dh.leftCols(hd));
    const auto dxb = bwd_.backward(c.bwd, dh.rightCols(hd));
    Matrix<S> dy(c.y.rows(), c.y.cols());
    for (int t = 0; t < m; ++t) {
      const Matrix<S> g = dxf[t] + dxb[m - 1 - t];
      for (int i = 0; i < b; ++i)
        dy.middleRows((static_cast<Eigen::Index>(i) * m + t) * n, n) =
            g.middleRows(static_cast<Eigen::Index>(i) * n, n);
    }
    const Matrix<S> de = attn_.backward(c.attn, dy);
    embed_.accumulate(c.x, de);
  }

  MultiHeadAttention<S>& attention() { return attn_; }

 private:
  TsfenConfig cfg_;
  HeadKind kind_ = HeadKind::Policy;
  Dense<S> embed_;
  MultiHeadAttention<S> attn_;
  Lstm<S> fwd_, bwd_;
  Dense<S> fc1_, fc2_;
};

// Masked softmax with probability floor. Entries with zero mask get exactly zero
// probability; positive mask entries scale the unnormalised probability.
struct MaskedSoftmax {
  static constexpr double floor = 1e-7;

  template <class S>
  static std::vector<double> probs(const S* logits, const double* mask, int n,
                                   std::vector<char>* clamped = nullptr) {
    std::vector<double> p(n, 0.0);
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (int i = 0; i < n; ++i) {
      if (mask[i] < 0.0 || mask[i] > 1.0) throw Error("mask entries must lie in [0, 1]");
      if (mask[i] > 0.0) {
        any = true;
        mx = std::max(mx, static_cast<double>(logits[i]) + std::log(mask[i]));
      }
    }
    if (!any) throw Error("mask has no positive entry");
    double sum = 0.0;
    for (int i = 0; i < n; ++i)
      if (mask[i] > 0.0) {
        p[i] = std::exp(static_cast<double>(logits[i]) + std::log(mask[i]) - mx);
        sum += p[i];
      }
    double csum = 0.0;
    if (clamped) clamped->assign(n, 0);
    for (int i = 0; i < n; ++i)
      if (mask[i] > 0.0) {
        p[i] /= sum;
        if (p[i] < floor) {
          p[i] = floor;
          if (clamped) (*clamped)[i] = 1;
        }
        csum += p[i];
      }
    for (int i = 0; i < n; ++i) p[i] /= csum;
    return p;
  }

  // d log p[a] / d logits, exact for the clamped-and-renormalised map.
  template <class S>
  static std::vector<double> grad_log_prob(const S* logits, const double* mask, int n, int a) {
    std::vector<char> clamped;
    const auto p = probs(logits, mask, n, &clamped);
    // Unclamped softmax q and the renormaliser of the clamped vector.
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i)
      if (mask[i] > 0.0) mx = std::max(mx, static_cast<double>(logits[i]) + std::log(mask[i]));
    std::vector<double> q(n, 0.0);
    double qs = 0.0;
    for (int i = 0; i < n; ++i)
      if (mask[i] > 0.0) {
        q[i] = std::exp(static_cast<double>(logits[i]) + std::log(mask[i]) - mx);
        qs += q[i];
      }
    double csum = 0.0;
    for (int i = 0; i < n; ++i)
      if (mask[i] > 0.0) {
        q[i] /= qs;
        csum += clamped[i] ? floor : q[i];
      }
    // dL/dq_i for L = log c_a - log sum(c).
    std::vector<double> dq(n, 0.0);
    for (int i = 0; i < n; ++i) {
      if (mask[i] <= 0.0 || clamped[i]) continue;
      dq[i] = (i == a ? 1.0 / q[i] : 0.0) - 1.0 / csum;
    }
    double dot = 0.0;
    for (int i = 0; i < n; ++i) dot += dq[i] * q[i];
    std::vector<double> dl(n, 0.0);
    for (int i = 0; i < n; ++i)
      if (mask[i] > 0.0) dl[i] = q[i] * (dq[i] - dot);
    (void)p;
    return dl;
  }
};

}  // namespace race::nn

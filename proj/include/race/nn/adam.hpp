#pragma once

#include <cmath>
#include <vector>

#include "race/nn/tensor.hpp"

namespace race::nn {

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class S>
struct AdamState {
  std::vector<Matrix<S>> m, v;
  long step = 0;
};

template <class S>
AdamState<S> make_adam_state(const ParamList<S>& ps) {
  AdamState<S> st;
  for (auto* p : ps) {
    st.m.push_back(Matrix<S>::Zero(p->value.rows(), p->value.cols()));
    st.v.push_back(Matrix<S>::Zero(p->value.rows(), p->value.cols()));
  }
  return st;
}

template <class S>
void adam_step(const ParamList<S>& ps, AdamState<S>& st, const AdamHyper& h) {
  if (st.m.size() != ps.size()) throw ShapeError("optimizer state does not match parameters");
  ++st.step;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(st.step));
  const S b1 = static_cast<S>(h.beta1), b2 = static_cast<S>(h.beta2);
  const S step = static_cast<S>(h.lr / c1);
  const S inv_c2 = static_cast<S>(1.0 / c2);
  const S eps = static_cast<S>(h.eps);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& p = *ps[i];
    st.m[i] = b1 * st.m[i] + (S(1) - b1) * p.grad;
    st.v[i] = b2 * st.v[i] + (S(1) - b2) * p.grad.cwiseAbs2();
    p.value.array() -= step * st.m[i].array() / ((st.v[i].array() * inv_c2).sqrt() + eps);
  }
}

// Scales gradients so their global norm is at most max_norm; returns the norm before scaling.
template <class S>
double clip_grad_norm(const ParamList<S>& ps, double max_norm) {
  double sq = 0.0;
  for (auto* p : ps) sq += static_cast<double>(p->grad.squaredNorm());
  const double n = std::sqrt(sq);
  if (max_norm > 0.0 && n > max_norm) {
    const S f = static_cast<S>(max_norm / n);
    for (auto* p : ps) p->grad *= f;
  }
  return n;
}

}  // namespace race::nn

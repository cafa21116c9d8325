#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "race/nn/adam.hpp"
#include "race/nn/tsfen.hpp"
#include "race/selection.hpp"

namespace race {

struct MappoHyper {
  double gamma = 0.98;
  double gae_lambda = 0.95;
  double clip = 0.2;
  double lr = 1e-4;
  int batch_size = 32;
  int episodes_per_update = 10;
  int epochs = 4;
  double max_grad_norm = 0.0;
  bool scale_rewards = true;
};

// Running mean and variance per input feature, fitted during training.
struct ObsNormalizer {
  std::array<double, 3> mean{0, 0, 0};
  std::array<double, 3> m2{0, 0, 0};
  double count = 0.0;
  bool frozen = false;

  static std::array<double, 3> transform(double theta, double gain, double aoi) {
    return {theta, std::log10(1.0 + gain), aoi};
  }

  void update(const MdpState& s) {
    if (frozen) return;
    for (int m = 0; m < s.history; ++m)
      for (int n = 0; n < s.devices; ++n) {
        const auto f = transform(s.at(m, n, 0), s.at(m, n, 1), s.at(m, n, 2));
        count += 1.0;
        for (int j = 0; j < 3; ++j) {
          const double d = f[j] - mean[j];
          mean[j] += d / count;
          m2[j] += d * (f[j] - mean[j]);
        }
      }
  }

  double stddev(int j) const {
    if (count < 2.0) return 1.0;
    return std::max(std::sqrt(m2[j] / count), 1e-8);
  }

  template <class S>
  nn::Matrix<S> features(const MdpState& s) const {
    nn::Matrix<S> x(s.history * s.devices, 3);
    for (int m = 0; m < s.history; ++m)
      for (int n = 0; n < s.devices; ++n) {
        const auto f = transform(s.at(m, n, 0), s.at(m, n, 1), s.at(m, n, 2));
        for (int j = 0; j < 3; ++j)
          x(m * s.devices + n, j) = static_cast<S>((f[j] - mean[j]) / stddev(j));
      }
    return x;
  }
};

// Running variance of the discounted return, used to scale rewards.
struct ReturnScaler {
  double ret = 0.0, mean = 0.0, m2 = 0.0, count = 0.0;

  double scale() const { return count < 2.0 ? 1.0 : std::max(std::sqrt(m2 / count), 1e-8); }
  void observe(double r, double gamma) {
    ret = gamma * ret + r;
    count += 1.0;
    const double d = ret - mean;
    mean += d / count;
    m2 += d * (ret - mean);
  }
  void reset_episode() { ret = 0.0; }
};

template <class S>
struct MappoAgent {
  nn::Tsfen<S> actor, critic;
  nn::AdamState<S> actor_opt, critic_opt;

  MappoAgent(const nn::TsfenConfig& cfg, Rng& rng)
      : actor(cfg, nn::HeadKind::Policy), critic(cfg, nn::HeadKind::Value) {
    actor.init(rng);
    critic.init(rng);
    actor_opt = nn::make_adam_state(actor.parameters());
    critic_opt = nn::make_adam_state(critic.parameters());
  }
};

struct Transition {
  std::vector<double> mask;
  int action = -1;
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  bool last = false;
};

struct UpdateStats {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  std::size_t samples = 0;
};

// One clipped-surrogate step for a policy network on a minibatch. Returns the
// surrogate loss and accumulates clip statistics.
template <class S>
double ppo_actor_step(nn::Tsfen<S>& actor, nn::AdamState<S>& opt, const nn::Matrix<S>& x,
                      const std::vector<const std::vector<double>*>& masks,
                      const std::vector<int>& actions, const std::vector<double>& old_logp,
                      const std::vector<double>& adv, double clip, const nn::AdamHyper& h,
                      double max_grad_norm, UpdateStats* stats = nullptr) {
  auto ps = actor.parameters();
  nn::zero_grads(ps);
  typename nn::Tsfen<S>::Cache c;
  const nn::Matrix<S> logits = actor.forward(x, c);
  const int b = static_cast<int>(actions.size());
  const int n = static_cast<int>(logits.cols());
  nn::Matrix<S> d = nn::Matrix<S>::Zero(b, n);
  std::vector<double> row(n);
  double loss = 0.0;
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < n; ++j) row[j] = static_cast<double>(logits(i, j));
    const auto p = nn::MaskedSoftmax::probs(row.data(), masks[i]->data(), n);
    const double ratio = std::exp(std::log(p[actions[i]]) - old_logp[i]);
    const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
    loss -= std::min(ratio * adv[i], clipped * adv[i]) / b;
    const bool active = adv[i] >= 0.0 ? ratio <= 1.0 + clip : ratio >= 1.0 - clip;
    if (stats) {
      stats->mean_ratio += ratio;
      stats->clip_fraction += active ? 0.0 : 1.0;
    }
    if (!active || adv[i] == 0.0) continue;
    const auto g = nn::MaskedSoftmax::grad_log_prob(row.data(), masks[i]->data(), n, actions[i]);
    const double w = -ratio * adv[i] / b;
    for (int j = 0; j < n; ++j) d(i, j) = static_cast<S>(w * g[j]);
  }
  if (!std::isfinite(loss)) throw Error("non-finite actor loss");
  actor.backward(c, d);
  if (max_grad_norm > 0.0) nn::clip_grad_norm(ps, max_grad_norm);
  nn::adam_step(ps, opt, h);
  return loss;
}

template <class S>
double critic_step(nn::Tsfen<S>& critic, nn::AdamState<S>& opt, const nn::Matrix<S>& x,
                   const std::vector<double>& target, const nn::AdamHyper& h,
                   double max_grad_norm) {
  auto ps = critic.parameters();
  nn::zero_grads(ps);
  typename nn::Tsfen<S>::Cache c;
  const nn::Matrix<S> v = critic.forward(x, c);
  const int b = static_cast<int>(target.size());
  nn::Matrix<S> d(b, 1);
  double loss = 0.0;
  for (int i = 0; i < b; ++i) {
    const double e = static_cast<double>(v(i, 0)) - target[i];
    loss += 0.5 * e * e / b;
    d(i, 0) = static_cast<S>(e / b);
  }
  if (!std::isfinite(loss)) throw Error("non-finite critic loss");
  critic.backward(c, d);
  if (max_grad_norm > 0.0) nn::clip_grad_norm(ps, max_grad_norm);
  nn::adam_step(ps, opt, h);
  return loss;
}

template <class S = float>
class Mappo {
 public:
  Mappo(int agents, const nn::TsfenConfig& cfg, const MappoHyper& hyper, std::uint64_t seed)
      : cfg_(cfg), hyper_(hyper) {
    Rng rng = Rng::stream(seed, "network-init");
    for (int k = 0; k < agents; ++k) agents_.emplace_back(cfg, rng);
    buffer_.resize(agents);
  }

  int agents() const { return static_cast<int>(agents_.size()); }
  const nn::TsfenConfig& config() const { return cfg_; }
  const MappoHyper& hyper() const { return hyper_; }
  ObsNormalizer& normalizer() { return norm_; }
  const ObsNormalizer& normalizer() const { return norm_; }
  ReturnScaler& return_scaler() { return rscale_; }
  MappoAgent<S>& agent(int k) { return agents_[k]; }

  struct Decision {
    SelectionAction action;
    std::vector<double> values;
  };

  Decision act(const MdpState& state, const std::vector<double>& mask, Rng& rng, bool greedy,
               bool need_values = true) {
    const nn::Matrix<S> x = norm_.features<S>(state);
    std::vector<nn::Matrix<S>> logits(agents_.size());
    typename nn::Tsfen<S>::Cache c;
    for (std::size_t k = 0; k < agents_.size(); ++k) logits[k] = agents_[k].actor.forward(x, c);
    auto probs = [&](int k, const std::vector<double>& m) {
      std::vector<double> row(m.size());
      for (std::size_t j = 0; j < m.size(); ++j) row[j] = static_cast<double>(logits[k](0, j));
      return nn::MaskedSoftmax::probs(row.data(), m.data(), static_cast<int>(m.size()));
    };
    Decision d;
    d.action = select_actions(agents(), mask, probs, rng, greedy);
    if (need_values)
      for (auto& a : agents_) d.values.push_back(static_cast<double>(a.critic.forward(x, c)(0, 0)));
    return d;
  }

  // Records one round for every agent; the same reward is shared by all agents.
  void store(const MdpState& state, const Decision& d, double reward, bool last) {
    states_.push_back(norm_.features<S>(state));
    const double r = hyper_.scale_rewards ? reward / rscale_.scale() : reward;
    for (std::size_t k = 0; k < agents_.size(); ++k) {
      Transition t;
      t.mask = d.action.effective_mask[k];
      t.action = d.action.device[k];
      t.log_prob = d.action.log_prob[k];
      t.value = d.values[k];
      t.reward = r;
      t.last = last;
      buffer_[k].push_back(std::move(t));
    }
  }

  std::size_t buffered_rounds() const { return states_.size(); }

  UpdateStats update(Rng& rng) {
    UpdateStats st;
    const nn::AdamHyper h{hyper_.lr};
    const int n = cfg_.devices, m = cfg_.history;
    for (std::size_t k = 0; k < agents_.size(); ++k) {
      auto& buf = buffer_[k];
      // Advantages per episode segment; the final round of an episode is terminal.
      std::vector<double> adv(buf.size()), ret(buf.size());
      std::size_t start = 0;
      for (std::size_t i = 0; i < buf.size(); ++i) {
        if (!buf[i].last && i + 1 < buf.size()) continue;
        std::vector<double> res;
        for (std::size_t j = start; j <= i; ++j) {
          const double v_next = j == i ? 0.0 : buf[j + 1].value;
          res.push_back(td_residual(buf[j].reward, v_next, buf[j].value, hyper_.gamma));
        }
        const auto a = gae(res, hyper_.gamma, hyper_.gae_lambda);
        for (std::size_t j = start; j <= i; ++j) {
          adv[j] = a[j - start];
          ret[j] = adv[j] + buf[j].value;
        }
        start = i + 1;
      }
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < buf.size(); ++i)
        if (buf[i].action >= 0) idx.push_back(i);
      for (int ep = 0; ep < hyper_.epochs; ++ep) {
        rng.shuffle(idx.begin(), idx.end());
        for (std::size_t s = 0; s < idx.size(); s += hyper_.batch_size) {
          const std::size_t e = std::min(idx.size(), s + hyper_.batch_size);
          const int b = static_cast<int>(e - s);
          nn::Matrix<S> x(static_cast<Eigen::Index>(b) * m * n, 3);
          std::vector<const std::vector<double>*> masks;
          std::vector<int> acts;
          std::vector<double> logp, a, target;
          double mean = 0.0, sq = 0.0;
          for (std::size_t i = s; i < e; ++i) mean += adv[idx[i]] / b;
          for (std::size_t i = s; i < e; ++i) sq += (adv[idx[i]] - mean) * (adv[idx[i]] - mean) / b;
          const double sd = std::sqrt(sq) + 1e-8;
          for (std::size_t i = s; i < e; ++i) {
            const auto j = idx[i];
            x.middleRows(static_cast<Eigen::Index>(i - s) * m * n, m * n) = states_[j];
            masks.push_back(&buf[j].mask);
            acts.push_back(buf[j].action);
            logp.push_back(buf[j].log_prob);
            a.push_back(b > 1 ? (adv[j] - mean) / sd : adv[j]);
            target.push_back(ret[j]);
          }
          st.actor_loss += ppo_actor_step(agents_[k].actor, agents_[k].actor_opt, x, masks, acts,
                                          logp, a, hyper_.clip, h, hyper_.max_grad_norm, &st);
          st.critic_loss += critic_step(agents_[k].critic, agents_[k].critic_opt, x, target, h,
                                        hyper_.max_grad_norm);
          st.samples += static_cast<std::size_t>(b);
        }
      }
    }
    if (st.samples) {
      st.mean_ratio /= static_cast<double>(st.samples);
      st.clip_fraction /= static_cast<double>(st.samples);
    }
    for (auto& b : buffer_) b.clear();
    states_.clear();
    return st;
  }

 private:
  nn::TsfenConfig cfg_;
  MappoHyper hyper_;
  std::vector<MappoAgent<S>> agents_;
  std::vector<std::vector<Transition>> buffer_;
  std::vector<nn::Matrix<S>> states_;
  ObsNormalizer norm_;
  ReturnScaler rscale_;
};

}  // namespace race

#pragma once

#include <cmath>

#include "race/errors.hpp"
#include "race/rng.hpp"

namespace race {

inline double dbm_to_watts(double dbm) { return std::pow(10.0, dbm / 10.0) / 1000.0; }

struct ChannelParams {
  double bandwidth = 1.0e6;
  double path_loss_exponent = 3.76;
  double frequency_factor = 1.0;
  double noise_dbm = -174.0;
  double estimation_error = 0.1;

  double noise_watts() const { return dbm_to_watts(noise_dbm); }

  void validate() const {
    if (!(bandwidth > 0)) throw ConfigError("bandwidth must be positive");
    if (!(path_loss_exponent > 0)) throw ConfigError("path loss exponent must be positive");
    if (!(frequency_factor > 0)) throw ConfigError("frequency factor must be positive");
    if (!(estimation_error >= 0 && estimation_error <= 1))
      throw ConfigError("estimation error variance must lie in [0, 1]");
  }
};

struct ChannelRealization {
  double estimated_gain = 0.0;
  double error_gain = 0.0;
  double composite_gain = 0.0;
  double distance = 0.0;
};

inline double composite_gain(double estimated, double error, double p_err) {
  return std::sqrt(1.0 - p_err) * estimated + std::sqrt(p_err) * error;
}

// |g|^2 for g ~ CN(0, 1).
inline double fading_power(Rng& rng) {
  const double re = rng.normal() * std::sqrt(0.5);
  const double im = rng.normal() * std::sqrt(0.5);
  return re * re + im * im;
}

// Gains are divided by the linear noise power so they read as SNR per watt.
inline ChannelRealization realize_channel(double distance, const ChannelParams& p, Rng& rng) {
  if (!(distance > 0.0)) throw Error("channel distance must be positive");
  const double scale = p.frequency_factor * std::pow(distance, -p.path_loss_exponent) /
                       p.noise_watts();
  ChannelRealization r;
  r.distance = distance;
  r.estimated_gain = fading_power(rng) * scale;
  r.error_gain = fading_power(rng) * scale;
  r.composite_gain = composite_gain(r.estimated_gain, r.error_gain, p.estimation_error);
  return r;
}

inline double data_rate(double bandwidth, double rho, double power, double gain) {
  return bandwidth * std::log2(1.0 + rho * power * gain);
}

}  // namespace race

#pragma once

#include <cmath>

#include "modest/common.hpp"

namespace modest {

struct AdamConfig {
  Real lr = 0.001;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
};

// First/second moment buffers for one tensor. Caller bumps the shared step
// counter t once per optimizer step (1-based) and passes it in.
template <typename T>
struct AdamMoments {
  T m, v;
  bool ready = false;
};

template <typename T>
void adam_step(T& param, const T& grad, AdamMoments<T>& mom, long t,
               const AdamConfig& cfg) {
  if (!mom.ready) {
    mom.m = T::Zero(param.rows(), param.cols());
    mom.v = T::Zero(param.rows(), param.cols());
    mom.ready = true;
  }
  mom.m = cfg.beta1 * mom.m + (1.0 - cfg.beta1) * grad;
  mom.v = cfg.beta2 * mom.v.array().matrix() +
          (1.0 - cfg.beta2) * grad.array().square().matrix();
  const Real bc1 = 1.0 - std::pow(cfg.beta1, static_cast<Real>(t));
  const Real bc2 = 1.0 - std::pow(cfg.beta2, static_cast<Real>(t));
  param.array() -=
      cfg.lr * (mom.m.array() / bc1) / ((mom.v.array() / bc2).sqrt() + cfg.eps);
}

}  // namespace modest

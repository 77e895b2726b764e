#pragma once

#include <cmath>
#include <cstdint>

#include "mixinfer/diffcore/parameters.hpp"

namespace mixinfer {

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment accumulators for one ParameterSet, with bias-corrected updates.
class Adam {
 public:
  Adam() = default;
  Adam(const ParameterSet& ps, AdamConfig cfg = {}) : cfg_(cfg), m_(zeros_like(ps)), v_(zeros_like(ps)) {}

  void step(ParameterSet& ps, const Gradients& grads) {
    if (grads.size() != ps.size() || m_.size() != ps.size())
      throw ConfigError("adam: gradient count does not match parameter count");
    for (std::size_t i = 0; i < ps.size(); ++i)
      if (grads[i].rows() != ps[i].value.rows() || grads[i].cols() != ps[i].value.cols())
        throw ConfigError("adam: gradient shape mismatch for " + ps[i].name);

    ++steps_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
    const double lr = cfg_.learning_rate;
    const double eps = cfg_.epsilon;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i].cwiseProduct(grads[i]);
      ps[i].value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
    }
  }

  std::uint64_t steps() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }
  const Gradients& first_moment() const { return m_; }
  const Gradients& second_moment() const { return v_; }

 private:
  AdamConfig cfg_;
  Gradients m_, v_;
  std::uint64_t steps_ = 0;
};

}  // namespace mixinfer

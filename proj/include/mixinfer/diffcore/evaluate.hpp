#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mixinfer/diffcore/tape.hpp"

namespace mixinfer {

struct Evaluation {
  double value = 0.0;
  Gradients grads;
};

/// Evaluates a scalar-valued computation `f(tape, bound_params) -> Var` and
/// its exact reverse-mode gradient with respect to every parameter in `ps`.
template <typename F>
Evaluation evaluate_with_gradients(const ParameterSet& ps, F&& f) {
  Tape tape;
  const std::vector<Var> bound = tape.bind(ps, true);
  Var out = f(tape, Bound(bound));
  if (out.value().size() != 1) throw ConfigError("evaluate_with_gradients: output is not a scalar");
  tape.backward(out);
  return {out.value()(0, 0), tape.grads(bound)};
}

/// Forward-only evaluation of a scalar computation.
template <typename F>
double evaluate(const ParameterSet& ps, F&& f) {
  Tape tape;
  const std::vector<Var> bound = tape.bind(ps, false);
  return f(tape, Bound(bound)).value()(0, 0);
}

struct GradientCheckOptions {
  double step = 1e-5;
  std::size_t coordinates = 20;  ///< sampled coordinates; all if the set is smaller
  std::uint64_t seed = 1;
};

/// Max over sampled coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8),
/// with numeric derivatives from central differences.
template <typename F>
double gradient_check(const ParameterSet& ps, F&& f, GradientCheckOptions opt = {}) {
  if (!(opt.step > 0.0)) throw DomainError("gradient_check: step must be positive");
  const Evaluation analytic = evaluate_with_gradients(ps, f);

  std::vector<std::pair<std::size_t, Eigen::Index>> coords;
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (Eigen::Index j = 0; j < ps[i].value.size(); ++j) coords.emplace_back(i, j);
  if (coords.size() > opt.coordinates) {
    Rng rng(opt.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(opt.coordinates);
  }

  ParameterSet probe = ps;
  double worst = 0.0;
  for (auto [i, j] : coords) {
    double& w = probe[i].value.data()[j];
    const double w0 = w;
    w = w0 + opt.step;
    const double fp = evaluate(probe, f);
    w = w0 - opt.step;
    const double fm = evaluate(probe, f);
    w = w0;
    const double numeric = (fp - fm) / (2.0 * opt.step);
    const double a = analytic.grads[i].data()[j];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace mixinfer

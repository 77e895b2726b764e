#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "mixinfer/config.hpp"
#include "mixinfer/diffcore.hpp"
#include "mixinfer/memory/replay.hpp"
#include "mixinfer/taskinfer/model.hpp"

namespace mixinfer::control {

struct SacConfig {
  double discount = 0.99;
  double tau = 0.005;
  double entropy_target = std::numeric_limits<double>::quiet_NaN();  ///< NaN -> -dim(A)
  double learning_rate = 3e-4;
  std::vector<int> hidden{300, 300, 300};
  double initial_temperature = 1.0;
  taskinfer::ZMode z_mode = taskinfer::ZMode::Mean;

  double target_entropy(int action_dim) const {
    return std::isnan(entropy_target) ? -static_cast<double>(action_dim) : entropy_target;
  }

  void validate() const {
    if (!(discount > 0.0 && discount < 1.0)) throw ConfigError("sac.discount must lie in (0, 1)");
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("sac.tau must lie in (0, 1]");
    if (!(learning_rate > 0.0)) throw ConfigError("sac.learning_rate must be positive");
    if (hidden.empty()) throw ConfigError("sac.hidden must list at least one layer");
    for (int h : hidden)
      if (h < 1) throw ConfigError("sac.hidden sizes must be positive");
    if (!(initial_temperature > 0.0)) throw ConfigError("sac.initial_temperature must be positive");
  }

  void read(const ConfigTree& tree) {
    read_key(tree, "sac", "discount", discount);
    read_key(tree, "sac", "tau", tau);
    read_key(tree, "sac", "entropy_target", entropy_target);
    read_key(tree, "sac", "learning_rate", learning_rate);
    read_list(tree, "sac", "hidden", hidden);
    read_key(tree, "sac", "initial_temperature", initial_temperature);
    std::string mode = z_mode == taskinfer::ZMode::Mean ? "mean" : "sample";
    read_key(tree, "sac", "z_mode", mode);
    if (mode == "mean")
      z_mode = taskinfer::ZMode::Mean;
    else if (mode == "sample")
      z_mode = taskinfer::ZMode::Sample;
    else
      throw ConfigError("sac.z_mode must be mean or sample");
    validate();
  }

  void write(ConfigTree& tree) const {
    write_key(tree, "sac", "discount", discount);
    write_key(tree, "sac", "tau", tau);
    if (!std::isnan(entropy_target)) write_key(tree, "sac", "entropy_target", entropy_target);
    write_key(tree, "sac", "learning_rate", learning_rate);
    write_list(tree, "sac", "hidden", hidden);
    write_key(tree, "sac", "initial_temperature", initial_temperature);
    write_key(tree, "sac", "z_mode", z_mode == taskinfer::ZMode::Mean ? "mean" : "sample");
  }
};

enum class ActMode { Stochastic, Deterministic };

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kTanhEpsilon = 1e-6;

struct PolicyOutput {
  Var action;    ///< tanh-squashed, B x A
  Var log_prob;  ///< B x 1
  Var mean;      ///< pre-squash mean, B x A
};

struct SacDiagnostics {
  double critic_loss = 0, actor_loss = 0, entropy = 0, temperature = 0, temperature_loss = 0;
};

/// Task-conditioned soft actor-critic with twin critics, target critics and
/// a learned temperature.
class SoftActorCritic {
 public:
  SoftActorCritic(int obs_dim, int action_dim, int latent_dim, SacConfig cfg, Rng& rng)
      : cfg_(std::move(cfg)), obs_dim_(obs_dim), action_dim_(action_dim), latent_dim_(latent_dim) {
    cfg_.validate();
    std::vector<Eigen::Index> actor_sizes{obs_dim + latent_dim};
    std::vector<Eigen::Index> critic_sizes{obs_dim + action_dim + latent_dim};
    for (int h : cfg_.hidden) {
      actor_sizes.push_back(h);
      critic_sizes.push_back(h);
    }
    actor_sizes.push_back(2 * action_dim);
    critic_sizes.push_back(1);
    actor_net_ = Mlp(actor_, "policy", Owner::Policy, actor_sizes, rng);
    q1_ = Mlp(critics_, "q1", Owner::Critic, critic_sizes, rng);
    q2_ = Mlp(critics_, "q2", Owner::Critic, critic_sizes, rng);
    targets_ = critics_;
    temperature_.add("log_temperature", Owner::Temperature,
                     Matrix::Constant(1, 1, std::log(cfg_.initial_temperature)));
    actor_opt_ = Adam(actor_, AdamConfig{cfg_.learning_rate});
    critic_opt_ = Adam(critics_, AdamConfig{cfg_.learning_rate});
    temperature_opt_ = Adam(temperature_, AdamConfig{cfg_.learning_rate});
  }

  const SacConfig& config() const { return cfg_; }
  int action_dim() const { return action_dim_; }
  ParameterSet& actor() { return actor_; }
  const ParameterSet& actor() const { return actor_; }
  ParameterSet& critics() { return critics_; }
  const ParameterSet& critics() const { return critics_; }
  ParameterSet& target_critics() { return targets_; }
  const ParameterSet& target_critics() const { return targets_; }
  ParameterSet& temperature_params() { return temperature_; }
  const ParameterSet& temperature_params() const { return temperature_; }
  double temperature() const { return std::exp(temperature_[0].value(0, 0)); }

  /// Squashed Gaussian policy. `eps` (B x A standard normal) selects a
  /// reparameterized sample; without it the action is tanh(mean).
  PolicyOutput policy(Tape& t, Bound actor, Var s, Var z, const Matrix* eps) const {
    using namespace ops;
    Var out = actor_net_(actor, concat_cols({s, z}));
    Tape::Scope scope(t, "policy");
    Var mean = slice_cols(out, 0, action_dim_);
    Var log_std = clamp(slice_cols(out, action_dim_, action_dim_), kLogStdMin, kLogStdMax);
    if (!eps) return {ops::tanh(mean), Var{}, mean};
    Var e = t.constant(*eps);
    Var u = add(mean, mul(ops::exp(log_std), e));
    Var action = ops::tanh(u);
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    Var gauss = neg(add(sum_cols(log_std), t.constant(Matrix(0.5 * eps->cwiseProduct(*eps).rowwise().sum()))));
    gauss = shift(gauss, -half_log_2pi * action_dim_);
    Var squash = sum_cols(ops::log(shift(neg(square(action)), 1.0 + kTanhEpsilon)));
    return {action, sub(gauss, squash), mean};
  }

  Var q_value(Bound critics, const Mlp& q, Var s, Var a, Var z) const { return q(critics, ops::concat_cols({s, a, z})); }

  /// Actions for a batch of observations (B x obs) and embeddings (B x d).
  Matrix act(const Matrix& s, const Matrix& z, ActMode mode, Rng* rng) const {
    if (!z.allFinite()) throw NumericFault("task embedding passed to the policy");
    if (s.cols() != obs_dim_ || z.cols() != latent_dim_ || s.rows() != z.rows())
      throw ConfigError("act: observation or embedding shape mismatch");
    Tape t;
    const auto p = t.bind(actor_, false);
    if (mode == ActMode::Deterministic) return policy(t, p, t.constant(s), t.constant(z), nullptr).action.value();
    if (!rng) throw ConfigError("stochastic act needs a random stream");
    const Matrix eps = normal_matrix(s.rows(), action_dim_, *rng);
    return policy(t, p, t.constant(s), t.constant(z), &eps).action.value();
  }

  /// One SAC update on a batch whose embeddings `z` are treated as constants.
  SacDiagnostics update(const memory::RlBatch& batch, const Matrix& z, Rng& rng) {
    using namespace ops;
    const Eigen::Index B = static_cast<Eigen::Index>(batch.size());
    if (B == 0) throw EmptyError("sac update on an empty batch");
    if (z.rows() != B || z.cols() != latent_dim_) throw ConfigError("sac update: embedding shape mismatch");
    const double alpha = temperature();
    SacDiagnostics diag;
    const Matrix target = critic_target(batch, z, normal_matrix(B, action_dim_, rng));

    {
      Tape t;
      const auto pc = t.bind(critics_);
      Var s = t.constant(batch.s), a = t.constant(batch.a), zc = t.constant(z), y = t.constant(target);
      Var l1 = mean(square(sub(q_value(pc, q1_, s, a, zc), y)));
      Var l2 = mean(square(sub(q_value(pc, q2_, s, a, zc), y)));
      Var loss = add(l1, l2);
      t.backward(loss);
      critic_opt_.step(critics_, t.grads(pc));
      diag.critic_loss = loss.value()(0, 0);
    }

    Matrix log_prob;
    {
      Tape t;
      const auto pa = t.bind(actor_);
      const auto pc = t.bind(critics_, false);
      const Matrix eps = normal_matrix(B, action_dim_, rng);
      Var s = t.constant(batch.s), zc = t.constant(z);
      PolicyOutput cur = policy(t, pa, s, zc, &eps);
      Var qmin = min(q_value(pc, q1_, s, cur.action, zc), q_value(pc, q2_, s, cur.action, zc));
      Var loss = mean(sub(scale(cur.log_prob, alpha), qmin));
      t.backward(loss);
      actor_opt_.step(actor_, t.grads(pa));
      diag.actor_loss = loss.value()(0, 0);
      log_prob = cur.log_prob.value();
    }

    {
      // d/d(log alpha) of -mean(log_alpha * (log_prob + H)) with log_prob held fixed
      const double gap = (log_prob.array() + cfg_.target_entropy(action_dim_)).mean();
      Gradients g{Matrix::Constant(1, 1, -gap)};
      diag.temperature_loss = -temperature_[0].value(0, 0) * gap;
      temperature_opt_.step(temperature_, g);
    }

    soft_update();
    diag.entropy = -log_prob.mean();
    diag.temperature = temperature();
    return diag;
  }

  /// r + discount * (min target Q(s', a', z) - alpha log pi(a'|s', z)) with
  /// a' drawn from `eps`. Only the target critics enter.
  Matrix critic_target(const memory::RlBatch& batch, const Matrix& z, const Matrix& eps) const {
    using namespace ops;
    Tape t;
    const auto pa = t.bind(actor_, false);
    const auto pt = t.bind(targets_, false);
    Var s2 = t.constant(batch.s_next), zc = t.constant(z);
    PolicyOutput next = policy(t, pa, s2, zc, &eps);
    Var qmin = min(q_value(pt, q1_, s2, next.action, zc), q_value(pt, q2_, s2, next.action, zc));
    Var soft = sub(qmin, scale(next.log_prob, temperature()));
    return batch.r + cfg_.discount * soft.value();
  }

  /// target <- (1 - tau) target + tau online, per weight.
  void soft_update() {
    for (std::size_t i = 0; i < targets_.size(); ++i)
      targets_[i].value = (1.0 - cfg_.tau) * targets_[i].value + cfg_.tau * critics_[i].value;
  }

  const Mlp& q1() const { return q1_; }
  const Mlp& q2() const { return q2_; }

 private:
  static Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = standard_normal(rng);
    return m;
  }

  SacConfig cfg_;
  int obs_dim_, action_dim_, latent_dim_;
  ParameterSet actor_, critics_, targets_, temperature_;
  Mlp actor_net_, q1_, q2_;
  Adam actor_opt_, critic_opt_, temperature_opt_;
};

/// z for every context of an RL batch, from the current encoder snapshot.
/// The result is a plain matrix, so no gradient can reach the encoder.
/// The MLP extractor has no output for an empty context, so such rows get
/// the prior mean z = 0.
inline Matrix embed_for_batch(const taskinfer::Encoder& encoder, const memory::ContextBatch& contexts,
                              taskinfer::ZMode mode, Rng* rng = nullptr) {
  const Eigen::Index B = static_cast<Eigen::Index>(contexts.size());
  Matrix count = Matrix::Zero(B, 1);
  for (const auto& m : contexts.masks) count += m;
  if (encoder.config().extractor == taskinfer::ExtractorKind::Gru || (count.array() > 0.5).all())
    return encoder.embed(contexts, mode, rng);
  Matrix z = Matrix::Zero(B, encoder.config().latent_dim);
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < B; ++i)
    if (count(i, 0) > 0.5) rows.push_back(i);
  if (rows.empty()) return z;
  memory::ContextBatch sub;
  for (std::size_t t = 0; t < contexts.steps.size(); ++t) {
    sub.steps.push_back(contexts.steps[t](rows, Eigen::all));
    sub.masks.push_back(contexts.masks[t](rows, Eigen::all));
  }
  for (auto i : rows) sub.labels.push_back(contexts.labels[static_cast<std::size_t>(i)]);
  const Matrix zs = encoder.embed(sub, mode, rng);
  for (std::size_t k = 0; k < rows.size(); ++k) z.row(rows[k]) = zs.row(static_cast<Eigen::Index>(k));
  return z;
}

}  // namespace mixinfer::control

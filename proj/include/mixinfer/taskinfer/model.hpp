#pragma once

#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include "mixinfer/config.hpp"
#include "mixinfer/diffcore.hpp"
#include "mixinfer/memory/replay.hpp"
#include "mixinfer/taskinfer/gaussian.hpp"

namespace mixinfer::taskinfer {

enum class ExtractorKind { Gru, Mlp };
enum class ZMode { Sample, Mean };

struct LossWeights {
  double kl = 0.001;
  double euclid = 5e-4;
  double classification = 0.1;
};

struct InferenceConfig {
  ExtractorKind extractor = ExtractorKind::Gru;
  int context = 64;  ///< T
  int latent_dim = 8;
  int components = 8;  ///< K
  int net_complexity = 5;  ///< c_n: hidden widths are c_n times the input width
  LossWeights weights;
  bool literal_classification = false;  ///< cross-entropy over softmaxed activations instead of logits
  int prediction_rows = 0;  ///< most recent context rows reconstructed per window, 0 = all
  double learning_rate = 3e-4;
  int obs_dim = 7;
  int action_dim = 3;

  int row_dim() const { return 2 * obs_dim + action_dim + 1; }
  int hidden() const { return net_complexity * row_dim(); }
  int head_width() const { return components * (2 * latent_dim + 1); }
  int decoder_input() const { return obs_dim + action_dim + latent_dim; }

  void validate() const {
    if (context < 1) throw ConfigError("encoder.context must be >= 1");
    if (latent_dim < 1) throw ConfigError("encoder.latent_dim must be >= 1");
    if (components < 1) throw ConfigError("encoder.components must be >= 1");
    if (net_complexity < 1) throw ConfigError("encoder.net_complexity must be >= 1");
    if (weights.kl < 0 || weights.euclid < 0 || weights.classification < 0)
      throw ConfigError("encoder loss weights must be non-negative");
    if (prediction_rows < 0) throw ConfigError("encoder.prediction_rows must be >= 0");
    if (!(learning_rate > 0)) throw ConfigError("encoder.learning_rate must be positive");
  }

  /// Reads the [encoder] section; dimensions come from the benchmark.
  void read(const ConfigTree& tree) {
    std::string kind = extractor == ExtractorKind::Gru ? "gru" : "mlp";
    read_key(tree, "encoder", "extractor", kind);
    if (kind == "gru")
      extractor = ExtractorKind::Gru;
    else if (kind == "mlp")
      extractor = ExtractorKind::Mlp;
    else
      throw ConfigError("encoder.extractor must be gru or mlp, got '" + kind + "'");
    read_key(tree, "encoder", "context", context);
    read_key(tree, "encoder", "latent_dim", latent_dim);
    read_key(tree, "encoder", "components", components);
    read_key(tree, "encoder", "net_complexity", net_complexity);
    read_key(tree, "encoder", "alpha_kl", weights.kl);
    read_key(tree, "encoder", "beta_euclid", weights.euclid);
    read_key(tree, "encoder", "gamma_classification", weights.classification);
    read_key(tree, "encoder", "literal_classification", literal_classification);
    read_key(tree, "encoder", "prediction_rows", prediction_rows);
    read_key(tree, "encoder", "learning_rate", learning_rate);
  }

  void write(ConfigTree& tree) const {
    write_key(tree, "encoder", "extractor", extractor == ExtractorKind::Gru ? "gru" : "mlp");
    write_key(tree, "encoder", "context", context);
    write_key(tree, "encoder", "latent_dim", latent_dim);
    write_key(tree, "encoder", "components", components);
    write_key(tree, "encoder", "net_complexity", net_complexity);
    write_key(tree, "encoder", "alpha_kl", weights.kl);
    write_key(tree, "encoder", "beta_euclid", weights.euclid);
    write_key(tree, "encoder", "gamma_classification", weights.classification);
    write_key(tree, "encoder", "literal_classification", literal_classification ? "true" : "false");
    write_key(tree, "encoder", "prediction_rows", prediction_rows);
    write_key(tree, "encoder", "learning_rate", learning_rate);
  }
};

/// Mixture statistics on a tape, batched over B contexts.
struct StatsVars {
  std::vector<Var> mu;   ///< K entries of (B x d)
  std::vector<Var> var;  ///< K entries of (B x d)
  Var logits;            ///< B x K
  Var rho;               ///< B x K

  std::size_t components() const { return mu.size(); }
};

inline StatsVars constant_stats(Tape& t, const GaussianStats& s) {
  StatsVars v;
  for (Eigen::Index k = 0; k < s.components(); ++k) {
    v.mu.push_back(t.constant(s.mu.row(k)));
    v.var.push_back(t.constant(s.var.row(k)));
  }
  v.logits = t.constant(s.logits.transpose());
  v.rho = t.constant(s.rho.transpose());
  return v;
}

inline GaussianStats stats_row(const StatsVars& v, Eigen::Index row) {
  const auto K = static_cast<Eigen::Index>(v.components());
  const Eigen::Index d = v.mu.front().cols();
  GaussianStats s;
  s.mu.resize(K, d);
  s.var.resize(K, d);
  for (Eigen::Index k = 0; k < K; ++k) {
    s.mu.row(k) = v.mu[static_cast<std::size_t>(k)].value().row(row);
    s.var.row(k) = v.var[static_cast<std::size_t>(k)].value().row(row);
  }
  s.rho = v.rho.value().row(row).transpose();
  s.logits = v.logits.value().row(row).transpose();
  return s;
}

inline constexpr double kVarianceFloor = 1e-8;
inline constexpr double kEuclidFloor = 1e-6;

/// Feature extractor plus mixture head (parameters theta).
class Encoder {
 public:
  Encoder(const InferenceConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const Eigen::Index H = cfg_.hidden();
    if (cfg_.extractor == ExtractorKind::Gru)
      gru_ = GruCell(params_, "encoder.gru", Owner::Encoder, cfg_.row_dim(), H, rng);
    else
      rows_ = Mlp(params_, "encoder.rows", Owner::Encoder, {cfg_.row_dim(), H, H}, rng);
    head_ = Mlp(params_, "encoder.head", Owner::Encoder, {H, H, cfg_.head_width()}, rng);
  }

  const InferenceConfig& config() const { return cfg_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  /// Last GRU hidden state over the unmasked rows; zero for an empty context.
  Var extract_gru(Tape& t, Bound p, const memory::ContextBatch& c) const {
    if (cfg_.extractor != ExtractorKind::Gru) throw ConfigError("encoder is not configured with a GRU extractor");
    check_rows(c);
    return gru_.run(t, p, c.steps, c.masks);
  }

  /// Two-layer head: features -> K blocks of (mu, raw variance, raw activation).
  StatsVars vae_head(Tape& t, Bound p, Var features) const {
    using namespace ops;
    Var out = head_(p, features);
    const Eigen::Index d = cfg_.latent_dim;
    const Eigen::Index block = 2 * d + 1;
    StatsVars s;
    std::vector<Var> logits;
    Tape::Scope scope(t, "encoder.head");
    for (int k = 0; k < cfg_.components; ++k) {
      s.mu.push_back(slice_cols(out, k * block, d));
      s.var.push_back(shift(softplus(slice_cols(out, k * block + d, d)), kVarianceFloor));
      logits.push_back(slice_cols(out, k * block + 2 * d, 1));
    }
    s.logits = concat_cols(logits);
    s.rho = softmax_rows(s.logits);
    return s;
  }

  /// Per-row Gaussians from the shared row network, fused by Gaussian
  /// products over the unmasked rows. Activations are averaged over rows and
  /// renormalized.
  StatsVars extract_mlp(Tape& t, Bound p, const memory::ContextBatch& c) const {
    using namespace ops;
    if (cfg_.extractor != ExtractorKind::Mlp) throw ConfigError("encoder is not configured with an MLP extractor");
    check_rows(c);
    const Eigen::Index B = static_cast<Eigen::Index>(c.size());
    Matrix count = Matrix::Zero(B, 1);
    for (const auto& m : c.masks) count += m;
    if ((count.array() < 0.5).any()) throw DomainError("mlp extractor needs at least one unmasked context row");

    const auto K = static_cast<std::size_t>(cfg_.components);
    std::vector<Var> precision(K), weighted(K);
    Var rho_sum;
    bool first = true;
    for (std::size_t step = 0; step < c.steps.size(); ++step) {
      if (c.masks[step].sum() == 0.0) continue;
      Var m = t.constant(c.masks[step]);
      StatsVars row = vae_head(t, p, relu(rows_(p, t.constant(c.steps[step]))));
      for (std::size_t k = 0; k < K; ++k) {
        Var inv = div(t.constant(Matrix::Ones(B, cfg_.latent_dim)), row.var[k]);
        Var prec = mul_col(inv, m);
        Var wmu = mul_col(mul(row.mu[k], inv), m);
        precision[k] = first ? prec : add(precision[k], prec);
        weighted[k] = first ? wmu : add(weighted[k], wmu);
      }
      Var r = mul_col(row.rho, m);
      rho_sum = first ? r : add(rho_sum, r);
      first = false;
    }
    StatsVars s;
    for (std::size_t k = 0; k < K; ++k) {
      Var var = div(t.constant(Matrix::Ones(B, cfg_.latent_dim)), precision[k]);
      s.var.push_back(var);
      s.mu.push_back(mul(weighted[k], var));
    }
    Var mean_rho = mul_col(rho_sum, t.constant(count.cwiseInverse()));
    s.rho = mul_col(mean_rho, div(t.constant(Matrix::Ones(B, 1)), sum_cols(mean_rho)));
    s.logits = log(s.rho);
    return s;
  }

  StatsVars encode(Tape& t, Bound p, const memory::ContextBatch& c) const {
    if (cfg_.extractor == ExtractorKind::Gru) return vae_head(t, p, extract_gru(t, p, c));
    return extract_mlp(t, p, c);
  }

  /// z = sum_k rho_k (mu_k + eps_k * sqrt(var_k)); mean mode drops the noise.
  static Var sample(Tape& t, const StatsVars& s, const std::vector<Matrix>* noise) {
    using namespace ops;
    Var z;
    for (std::size_t k = 0; k < s.components(); ++k) {
      Var comp = s.mu[k];
      if (noise) comp = add(comp, mul(t.constant((*noise)[k]), ops::sqrt(s.var[k])));
      Var rk = slice_cols(s.rho, static_cast<Eigen::Index>(k), 1);
      Var term = mul_col(comp, rk);
      z = k == 0 ? term : add(z, term);
    }
    return z;
  }

  /// Standard normal draws, one (B x d) matrix per component.
  std::vector<Matrix> draw_noise(Eigen::Index batch, Rng& rng) const {
    std::vector<Matrix> eps(static_cast<std::size_t>(cfg_.components), Matrix(batch, cfg_.latent_dim));
    for (auto& e : eps)
      for (Eigen::Index j = 0; j < e.cols(); ++j)
        for (Eigen::Index i = 0; i < e.rows(); ++i) e(i, j) = standard_normal(rng);
    return eps;
  }

  /// Forward-only statistics for every context of the batch.
  std::vector<GaussianStats> stats(const memory::ContextBatch& c) const {
    Tape t;
    const auto p = t.bind(params_, false);
    StatsVars s = encode(t, p, c);
    std::vector<GaussianStats> out;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(c.size()); ++i) out.push_back(stats_row(s, i));
    return out;
  }

  /// Forward-only embeddings (B x d). `rng` is required in sample mode.
  Matrix embed(const memory::ContextBatch& c, ZMode mode, Rng* rng = nullptr) const {
    Tape t;
    const auto p = t.bind(params_, false);
    StatsVars s = encode(t, p, c);
    if (mode == ZMode::Mean) return sample(t, s, nullptr).value();
    if (!rng) throw ConfigError("sample-mode embedding needs a random stream");
    const auto eps = draw_noise(static_cast<Eigen::Index>(c.size()), *rng);
    return sample(t, s, &eps).value();
  }

 private:
  void check_rows(const memory::ContextBatch& c) const {
    if (c.steps.empty()) throw ConfigError("empty context batch");
    if (c.steps.front().cols() != cfg_.row_dim())
      throw ConfigError("context row width " + std::to_string(c.steps.front().cols()) + " does not match " +
                        std::to_string(cfg_.row_dim()) + " (2*obs + action + 1)");
  }

  InferenceConfig cfg_;
  ParameterSet params_;
  GruCell gru_;
  Mlp rows_;
  Mlp head_;
};

/// Dynamics and reward regressors conditioned on z (parameters phi).
class Decoder {
 public:
  Decoder(const InferenceConfig& cfg, Rng& rng) : cfg_(cfg) {
    const Eigen::Index in = cfg_.decoder_input();
    const Eigen::Index W = static_cast<Eigen::Index>(cfg_.net_complexity) * in;
    dynamics_ = Mlp(params_, "decoder.dynamics", Owner::Decoder, {in, W, W, cfg_.obs_dim}, rng);
    reward_ = Mlp(params_, "decoder.reward", Owner::Decoder, {in, W, W, W, 1}, rng);
  }

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  Var predict_dynamics(Bound p, Var s, Var a, Var z) const { return dynamics_(p, ops::concat_cols({s, a, z})); }
  Var predict_reward(Bound p, Var s, Var a, Var z) const { return reward_(p, ops::concat_cols({s, a, z})); }

 private:
  InferenceConfig cfg_;
  ParameterSet params_;
  Mlp dynamics_;
  Mlp reward_;
};

// ---- losses --------------------------------------------------------------

/// Weighted mean over rows of (1/dim(s)) |s' - s'_hat|^2 + (r - r_hat)^2.
/// `weights` is (N x 1) summing to one; nullptr means the plain batch mean.
inline Var prediction_loss(Var s_next_pred, Var s_next, Var r_pred, Var r, const Matrix* weights = nullptr) {
  using namespace ops;
  Tape& t = *s_next.tape;
  const double ds = static_cast<double>(s_next.cols());
  Var per_row = add(scale(sum_cols(square(sub(s_next, s_next_pred))), 1.0 / ds), square(sub(r, r_pred)));
  if (!weights) return mean(per_row);
  return sum(mul_col(per_row, t.constant(*weights)));
}

/// Batch mean of sum_k rho_k KL(N(mu_k, var_k) || N(0, I)).
inline Var kl_loss(const StatsVars& s) {
  using namespace ops;
  Var total;
  for (std::size_t k = 0; k < s.components(); ++k) {
    // 0.5 * sum_d (mu^2 + var - ln var - 1)
    Var kl = scale(shift(sum_cols(sub(add(square(s.mu[k]), s.var[k]), ops::log(s.var[k]))),
                         -static_cast<double>(s.mu[k].cols())),
                   0.5);
    Var term = mul(kl, slice_cols(s.rho, static_cast<Eigen::Index>(k), 1));
    total = k == 0 ? term : add(total, term);
  }
  return mean(total);
}

/// Batch mean cross-entropy of the activation logits against the base labels.
/// With `literal`, the already-normalized activations are used as logits.
inline Var classification_loss(const StatsVars& s, const std::vector<int>& labels, bool literal = false) {
  using namespace ops;
  Tape& t = *s.rho.tape;
  Var logits = literal ? s.rho : s.logits;
  const Eigen::Index B = logits.rows(), K = logits.cols();
  if (static_cast<Eigen::Index>(labels.size()) != B) throw ConfigError("classification: label count mismatch");
  Matrix onehot = Matrix::Zero(B, K);
  for (Eigen::Index i = 0; i < B; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= K)
      throw DomainError("classification: label " + std::to_string(y) + " outside [0, " + std::to_string(K) + ")");
    onehot(i, y) = 1.0;
  }
  return scale(sum(mul(log_softmax_rows(logits), t.constant(onehot))), -1.0 / static_cast<double>(B));
}

/// Batch mean of sum_{k1<k2} (sum var_k1 + sum var_k2) / max(|mu_k1 - mu_k2|^2, 1e-6).
inline Var euclid_loss(const StatsVars& s) {
  using namespace ops;
  Tape& t = *s.rho.tape;
  const std::size_t K = s.components();
  if (K < 2) {
    static bool warned = false;
    if (!warned) std::cerr << "warning: euclid loss needs at least two components; returning 0\n";
    warned = true;
    return t.scalar(0.0);
  }
  std::vector<Var> var_sum;
  for (std::size_t k = 0; k < K; ++k) var_sum.push_back(sum_cols(s.var[k]));
  Var total;
  bool first = true;
  for (std::size_t a = 0; a < K; ++a)
    for (std::size_t b = a + 1; b < K; ++b) {
      Var dist = floor_at(sum_cols(square(sub(s.mu[a], s.mu[b]))), kEuclidFloor);
      Var term = div(add(var_sum[a], var_sum[b]), dist);
      total = first ? term : add(total, term);
      first = false;
    }
  return mean(total);
}

inline double kl_loss(const GaussianStats& s) {
  Tape t;
  return kl_loss(constant_stats(t, s)).value()(0, 0);
}
inline double classification_loss(const GaussianStats& s, int label, bool literal = false) {
  Tape t;
  return classification_loss(constant_stats(t, s), {label}, literal).value()(0, 0);
}
inline double euclid_loss(const GaussianStats& s) {
  Tape t;
  return euclid_loss(constant_stats(t, s)).value()(0, 0);
}

struct LossBreakdown {
  double total = 0, prediction = 0, kl = 0, euclid = 0, classification = 0;
};

struct InferenceLoss {
  Var total;
  LossBreakdown terms;
  StatsVars stats;
};

/// Reconstruction targets: the most recent `rows` unmasked transitions of
/// every window (all when rows == 0), stacked with per-row weights.
struct ReconstructionSet {
  Matrix s, a, r, s_next;
  Matrix weights;  ///< N x 1, sums to one
  std::vector<std::pair<std::size_t, Eigen::Index>> blocks;  ///< (time step, rows) in stacking order
};

inline ReconstructionSet reconstruction_set(const memory::ContextBatch& c, int obs_dim, int action_dim, int rows) {
  ReconstructionSet out;
  const std::size_t T = c.steps.size();
  const std::size_t first = (rows <= 0 || static_cast<std::size_t>(rows) >= T) ? 0 : T - static_cast<std::size_t>(rows);
  const Eigen::Index B = static_cast<Eigen::Index>(c.size());
  Eigen::Index n = 0;
  double valid = 0.0;
  for (std::size_t t = first; t < T; ++t) {
    const double m = c.masks[t].sum();
    if (m == 0.0) continue;
    out.blocks.emplace_back(t, B);
    n += B;
    valid += m;
  }
  if (valid == 0.0) throw DomainError("reconstruction needs at least one unmasked transition");
  Matrix all(n, c.steps.front().cols());
  out.weights.resize(n, 1);
  Eigen::Index at = 0;
  for (auto [t, rowsn] : out.blocks) {
    all.middleRows(at, rowsn) = c.steps[t];
    out.weights.middleRows(at, rowsn) = c.masks[t] / valid;
    at += rowsn;
  }
  out.s = all.leftCols(obs_dim);
  out.a = all.middleCols(obs_dim, action_dim);
  out.r = all.middleCols(obs_dim + action_dim, 1);
  out.s_next = all.middleCols(obs_dim + action_dim + 1, obs_dim);
  return out;
}

/// L_prediction + alpha L_KL + beta L_Euclid + gamma L_classification with a
/// reparameterized z per context drawn from `noise`.
inline InferenceLoss total_inference_loss(Tape& t, const Encoder& enc, Bound theta, const Decoder& dec, Bound phi,
                                          const memory::ContextBatch& c, const std::vector<Matrix>& noise,
                                          const LossWeights& w) {
  using namespace ops;
  const auto& cfg = enc.config();
  InferenceLoss out;
  out.stats = enc.encode(t, theta, c);
  Var z = Encoder::sample(t, out.stats, &noise);

  const ReconstructionSet rec = reconstruction_set(c, cfg.obs_dim, cfg.action_dim, cfg.prediction_rows);
  std::vector<Var> zs(rec.blocks.size(), z);
  Var zrep = zs.size() == 1 ? z : concat_rows(zs);
  Var s = t.constant(rec.s), a = t.constant(rec.a);
  Var pred;
  {
    Tape::Scope scope(t, "decoder");
    Var s_hat = dec.predict_dynamics(phi, s, a, zrep);
    Var r_hat = dec.predict_reward(phi, s, a, zrep);
    pred = prediction_loss(s_hat, t.constant(rec.s_next), r_hat, t.constant(rec.r), &rec.weights);
  }
  Var kl = kl_loss(out.stats);
  Var eu = euclid_loss(out.stats);
  Var cl = classification_loss(out.stats, c.labels, cfg.literal_classification);
  out.total = add(add(add(pred, scale(kl, w.kl)), scale(eu, w.euclid)), scale(cl, w.classification));
  out.terms = {out.total.value()(0, 0), pred.value()(0, 0), kl.value()(0, 0), eu.value()(0, 0), cl.value()(0, 0)};
  return out;
}

/// Encoder and decoder with their optimizers.
class TaskInference {
 public:
  TaskInference(const InferenceConfig& cfg, Rng& init_rng)
      : encoder_(cfg, init_rng),
        decoder_(cfg, init_rng),
        enc_opt_(encoder_.params(), AdamConfig{cfg.learning_rate}),
        dec_opt_(decoder_.params(), AdamConfig{cfg.learning_rate}) {}

  Encoder& encoder() { return encoder_; }
  const Encoder& encoder() const { return encoder_; }
  Decoder& decoder() { return decoder_; }
  const Decoder& decoder() const { return decoder_; }
  const InferenceConfig& config() const { return encoder_.config(); }

  /// One optimization step of the inference objective on theta and phi.
  LossBreakdown step(const memory::ContextBatch& c, Rng& noise_rng) {
    const auto eps = encoder_.draw_noise(static_cast<Eigen::Index>(c.size()), noise_rng);
    Tape t;
    const auto theta = t.bind(encoder_.params());
    const auto phi = t.bind(decoder_.params());
    InferenceLoss loss = total_inference_loss(t, encoder_, theta, decoder_, phi, c, eps, config().weights);
    t.backward(loss.total);
    enc_opt_.step(encoder_.params(), t.grads(theta));
    dec_opt_.step(decoder_.params(), t.grads(phi));
    return loss.terms;
  }

  struct Evaluation {
    LossBreakdown terms;
    double accuracy = 0.0;  ///< argmax activation matches the base label
  };

  Evaluation evaluate(const memory::ContextBatch& c, Rng& noise_rng) const {
    const auto eps = encoder_.draw_noise(static_cast<Eigen::Index>(c.size()), noise_rng);
    Tape t;
    const auto theta = t.bind(encoder_.params(), false);
    const auto phi = t.bind(decoder_.params(), false);
    InferenceLoss loss = total_inference_loss(t, encoder_, theta, decoder_, phi, c, eps, config().weights);
    const Matrix& rho = loss.stats.rho.value();
    std::size_t hits = 0;
    for (Eigen::Index i = 0; i < rho.rows(); ++i) {
      Eigen::Index arg = 0;
      rho.row(i).maxCoeff(&arg);
      if (arg == c.labels[static_cast<std::size_t>(i)]) ++hits;
    }
    return {loss.terms, c.size() ? static_cast<double>(hits) / static_cast<double>(c.size()) : 0.0};
  }

 private:
  Encoder encoder_;
  Decoder decoder_;
  Adam enc_opt_, dec_opt_;
};

}  // namespace mixinfer::taskinfer

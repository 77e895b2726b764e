#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "mixinfer/orchestrator/rollout.hpp"

namespace mixinfer::orchestrator {

namespace fs = std::filesystem;

// ---- meta-testing ----------------------------------------------------------

struct MetaTestResult {
  double mean_return = 0.0;
  std::vector<double> returns;  ///< one per task, in task order
};

/// One zero-shot episode per task with deterministic actions. No parameter
/// is touched.
inline MetaTestResult meta_test(const Agent& agent, const std::vector<bench::TaskSpec>& tasks, Rng& env_rng,
                                const ActFn* act = nullptr) {
  if (tasks.empty()) throw ConfigError("meta_test: empty task list");
  std::vector<RolloutRequest> req;
  const int len = agent.config().benchmark.episode_cap;
  for (std::size_t i = 0; i < tasks.size(); ++i) req.push_back({stationary(tasks[i], len), static_cast<int>(i)});
  const auto rollouts = act ? collect_rollouts(agent, req, *act, env_rng)
                            : collect_rollouts(agent, req, control::ActMode::Deterministic, env_rng, nullptr);
  MetaTestResult out;
  for (const auto& r : rollouts) out.returns.push_back(r.total_reward);
  double sum = 0.0;
  for (double r : out.returns) sum += r;
  out.mean_return = sum / static_cast<double>(out.returns.size());
  return out;
}

// ---- metrics ---------------------------------------------------------------

/// One row per evaluation epoch. Wall-clock time is kept out of this row so
/// the metrics file is reproducible byte for byte.
struct MetricsRow {
  int epoch = 0;
  long long env_steps = 0;
  double meta_test_return = 0.0;
  std::vector<double> base_returns;  ///< mean over test tasks of each enabled base
  double train_loss = 0.0;           ///< mean total inference loss over the epoch's steps
  taskinfer::LossBreakdown validation;
  double validation_accuracy = 0.0;
};

inline std::string metrics_header(const bench::BenchmarkConfig& b) {
  std::string h = "epoch,env_steps,meta_test_return";
  for (auto base : b.tasks) h += ",return_" + std::string(bench::name_of(base));
  h += ",train_loss,val_prediction,val_kl,val_euclid,val_classification,val_total,val_accuracy";
  return h;
}

inline std::string format_metric(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string metrics_line(const MetricsRow& r) {
  std::string s = std::to_string(r.epoch) + ',' + std::to_string(r.env_steps) + ',' + format_metric(r.meta_test_return);
  for (double v : r.base_returns) s += ',' + format_metric(v);
  for (double v : {r.train_loss, r.validation.prediction, r.validation.kl, r.validation.euclid,
                   r.validation.classification, r.validation.total, r.validation_accuracy})
    s += ',' + format_metric(v);
  return s;
}

/// Held-out inference losses and argmax-activation accuracy on `n` contexts of
/// the validation stratum; NaN when that stratum is still empty.
struct ValidationResult {
  taskinfer::LossBreakdown terms;
  double accuracy = std::numeric_limits<double>::quiet_NaN();
  std::size_t contexts = 0;
};

inline ValidationResult validate(const Agent& agent, const memory::ReplayBuffer& buffer, std::size_t n, Rng& rng) {
  ValidationResult out;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out.terms = {nan, nan, nan, nan, nan};
  if (buffer.transitions(memory::Stratum::Validation) == 0) return out;
  const auto batch = buffer.sample_context_batch(n, agent.config().encoder.context, memory::Stratum::Validation, rng);
  const auto ev = agent.inference().evaluate(batch, rng);
  out.terms = ev.terms;
  out.accuracy = ev.accuracy;
  out.contexts = batch.size();
  return out;
}

// ---- training --------------------------------------------------------------

enum class Phase { Collection, Inference, Policy, Evaluation };

/// Meta-training loop: per epoch, collection, then encoder/decoder
/// optimization, then SAC optimization, then (periodically) meta-testing.
class Trainer {
 public:
  Trainer(const ExperimentConfig& cfg, fs::path out_dir)
      : cfg_(cfg),
        out_(std::move(out_dir)),
        tasks_(TaskSets::from_config(cfg)),
        agent_(cfg),
        buffer_(buffer_config(cfg)),
        schedule_rng_(named_stream(cfg.run.seed, "tasks.schedule")),
        env_rng_(named_stream(cfg.run.seed, "env")),
        encoder_rng_(named_stream(cfg.run.seed, "encoder.noise")),
        policy_rng_(named_stream(cfg.run.seed, "policy.noise")),
        buffer_rng_(named_stream(cfg.run.seed, "buffer.sample")),
        validation_rng_(named_stream(cfg.run.seed, "validation")) {
    if (!out_.empty()) open_outputs();
  }

  const Agent& agent() const { return agent_; }
  Agent& agent() { return agent_; }
  const memory::ReplayBuffer& buffer() const { return buffer_; }
  const TaskSets& tasks() const { return tasks_; }
  const std::vector<MetricsRow>& metrics() const { return rows_; }
  long long env_steps() const { return env_steps_; }
  int epochs_done() const { return epoch_; }

  /// Called at the start of every phase, for progress display and audits.
  std::function<void(int epoch, Phase)> on_phase;
  /// Called after every metrics row.
  std::function<void(const MetricsRow&, double wall_seconds)> on_metrics;

  void run() {
    while (epoch_ < cfg_.run.epochs) run_epoch();
    if (!out_.empty()) buffer_.save(out_ / "buffer.bin");
  }

  void run_epoch() {
    const auto& run = cfg_.run;
    if (epoch_ >= run.epochs) throw ConfigError("training already finished");
    const double progress = static_cast<double>(epoch_) / static_cast<double>(run.epochs);
    const auto access = bench::continual_access(run.continual, progress, static_cast<int>(cfg_.benchmark.tasks.size()));

    notify(Phase::Collection);
    std::vector<std::size_t> accessible;
    for (std::size_t i = 0; i < tasks_.train.size(); ++i)
      if (std::find(access.begin(), access.end(), cfg_.benchmark.label_of(tasks_.train[i].base)) != access.end())
        accessible.push_back(i);
    if (accessible.empty()) throw ConfigError("no training task is accessible at this stage");
    if (epoch_ == 0 && run.initial_samples > 0) collect(accessible, accessible, run.initial_samples);
    collect(choose_tasks(accessible), accessible, run.samples_per_task);

    notify(Phase::Inference);
    double loss_sum = 0.0;
    for (int i = 0; i < run.inference_steps; ++i) {
      const auto batch = buffer_.sample_context_batch(static_cast<std::size_t>(run.inference_batch),
                                                      cfg_.encoder.context, memory::Stratum::Train, buffer_rng_);
      loss_sum += agent_.inference().step(batch, encoder_rng_).total;
    }

    notify(Phase::Policy);
    for (int i = 0; i < run.policy_steps; ++i) {
      const auto rl = buffer_.sample_rl_batch(static_cast<std::size_t>(run.policy_batch), cfg_.encoder.context,
                                              buffer_rng_);
      const Matrix z = control::embed_for_batch(agent_.encoder(), rl.context, cfg_.sac.z_mode, &policy_rng_);
      agent_.sac().update(rl, z, policy_rng_);
    }

    ++epoch_;
    const int every = run.evaluation_interval();
    if (epoch_ % every == 0 || epoch_ == run.epochs) {
      notify(Phase::Evaluation);
      MetricsRow row;
      row.epoch = epoch_;
      row.env_steps = env_steps_;
      row.train_loss = run.inference_steps > 0 ? loss_sum / run.inference_steps
                                               : std::numeric_limits<double>::quiet_NaN();
      Rng test_rng = named_stream(cfg_.run.seed, "meta_test");
      const auto mt = meta_test(agent_, tasks_.test, test_rng);
      row.meta_test_return = mt.mean_return;
      for (auto base : cfg_.benchmark.tasks) {
        double sum = 0.0;
        int n = 0;
        for (std::size_t i = 0; i < tasks_.test.size(); ++i)
          if (tasks_.test[i].base == base) {
            sum += mt.returns[i];
            ++n;
          }
        row.base_returns.push_back(n ? sum / n : std::numeric_limits<double>::quiet_NaN());
      }
      const auto val = validate(agent_, buffer_, static_cast<std::size_t>(run.validation_batch), validation_rng_);
      row.validation = val.terms;
      row.validation_accuracy = val.accuracy;
      rows_.push_back(row);
      write_row(row);
    }
  }

  Checkpoint checkpoint() const { return make_checkpoint(agent_, tasks_, epoch_); }

 private:
  static memory::BufferConfig buffer_config(const ExperimentConfig& cfg) {
    memory::BufferConfig b;
    b.obs_dim = cfg.benchmark.observation_dim();
    b.action_dim = cfg.benchmark.action_dim();
    b.episode_cap = cfg.benchmark.episode_cap;
    b.train_fraction = cfg.run.train_fraction;
    b.capacity = cfg.run.buffer_capacity;
    b.seed = cfg.run.seed;
    return b;
  }

  void notify(Phase p) {
    if (on_phase) on_phase(epoch_, p);
  }

  void open_outputs() {
    std::error_code ec;
    fs::create_directories(out_, ec);
    if (ec) throw ConfigError("cannot create output directory " + out_.string() + ": " + ec.message());
    metrics_.open(out_ / "metrics.csv", std::ios::trunc);
    timing_.open(out_ / "timing.csv", std::ios::trunc);
    if (!metrics_ || !timing_) throw ConfigError("output directory " + out_.string() + " is not writable");
    metrics_ << metrics_header(cfg_.benchmark) << '\n';
    timing_ << "epoch,wall_seconds\n";
    std::ofstream(out_ / "config.cfg") << cfg_.to_text();
    started_ = std::chrono::steady_clock::now();
  }

  void write_row(const MetricsRow& row) {
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    if (!out_.empty()) {
      metrics_ << metrics_line(row) << '\n' << std::flush;
      timing_ << row.epoch << ',' << format_metric(wall) << '\n' << std::flush;
      save_checkpoint(out_ / "checkpoint.bin", checkpoint());
    }
    if (on_metrics) on_metrics(row, wall);
  }

  std::vector<std::size_t> choose_tasks(const std::vector<std::size_t>& accessible) {
    const int k = cfg_.run.tasks_per_epoch;
    if (k <= 0 || static_cast<std::size_t>(k) >= accessible.size()) return accessible;
    std::vector<std::size_t> pick = accessible;
    std::shuffle(pick.begin(), pick.end(), schedule_rng_);
    pick.resize(static_cast<std::size_t>(k));
    std::sort(pick.begin(), pick.end());
    return pick;
  }

  /// `samples` steps from each chosen task, split into episodes of at most
  /// the cap. With probability `nonstationary_fraction` an episode switches to
  /// other accessible tasks every `nonstationary_segment` steps.
  void collect(const std::vector<std::size_t>& chosen, const std::vector<std::size_t>& accessible, int samples) {
    const int cap = cfg_.benchmark.episode_cap;
    std::vector<RolloutRequest> req;
    for (std::size_t idx : chosen) {
      for (int left = samples; left > 0;) {
        const int len = std::min(left, cap);
        left -= len;
        RolloutRequest r;
        r.task_id = static_cast<int>(idx);
        r.schedule = stationary(tasks_.train[idx], len);
        if (cfg_.run.nonstationary_fraction > 0.0 &&
            std::bernoulli_distribution(cfg_.run.nonstationary_fraction)(schedule_rng_)) {
          const int seg = cfg_.run.nonstationary_segment;
          r.schedule.clear();
          std::uniform_int_distribution<std::size_t> any(0, accessible.size() - 1);
          for (int at = 0; at < len; at += seg) {
            const auto& task = at == 0 ? tasks_.train[idx] : tasks_.train[accessible[any(schedule_rng_)]];
            r.schedule.push_back({task, std::min(seg, len - at)});
          }
        }
        req.push_back(std::move(r));
      }
    }
    auto rollouts = collect_rollouts(agent_, req, control::ActMode::Stochastic, env_rng_, &policy_rng_);
    for (auto& r : rollouts) {
      env_steps_ += static_cast<long long>(r.episode.transitions.size());
      buffer_.append(r.episode);
    }
  }

  ExperimentConfig cfg_;
  fs::path out_;
  TaskSets tasks_;
  Agent agent_;
  memory::ReplayBuffer buffer_;
  Rng schedule_rng_, env_rng_, encoder_rng_, policy_rng_, buffer_rng_, validation_rng_;
  int epoch_ = 0;
  long long env_steps_ = 0;
  std::vector<MetricsRow> rows_;
  std::ofstream metrics_, timing_;
  std::chrono::steady_clock::time_point started_ = std::chrono::steady_clock::now();
};

}  // namespace mixinfer::orchestrator

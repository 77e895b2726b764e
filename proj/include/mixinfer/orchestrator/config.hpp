#pragma once

#include <algorithm>
#include <filesystem>
#include <string>

#include "mixinfer/bench.hpp"
#include "mixinfer/config.hpp"
#include "mixinfer/control/sac.hpp"
#include "mixinfer/taskinfer/model.hpp"

namespace mixinfer::orchestrator {

/// [run] section: collection, optimization and evaluation schedule.
struct RunConfig {
  int epochs = 2000;
  int tasks_per_epoch = 0;  ///< training tasks collected from per epoch, 0 = all accessible
  int samples_per_task = 200;
  int initial_samples = 200;
  int inference_steps = 128;
  int inference_batch = 4096;
  int policy_steps = 2048;
  int policy_batch = 256;
  int train_tasks = 80;
  int test_tasks = 40;
  int eval_every = 0;  ///< 0 = max(1, epochs / 50)
  int validation_batch = 1024;
  double train_fraction = 0.8;
  std::size_t buffer_capacity = 0;
  double nonstationary_fraction = 0.0;  ///< share of collection episodes with mid-episode task switches
  int nonstationary_segment = 80;
  bench::ContinualSetting continual = bench::ContinualSetting::None;
  std::uint64_t seed = 0;

  int evaluation_interval() const { return eval_every > 0 ? eval_every : std::max(1, epochs / 50); }

  void validate() const {
    auto positive = [](int v, const char* name) {
      if (v < 1) throw ConfigError(std::string("run.") + name + " must be >= 1");
    };
    positive(epochs, "epochs");
    positive(samples_per_task, "samples_per_task");
    positive(inference_batch, "inference_batch");
    positive(policy_batch, "policy_batch");
    positive(train_tasks, "train_tasks");
    positive(test_tasks, "test_tasks");
    positive(validation_batch, "validation_batch");
    positive(nonstationary_segment, "nonstationary_segment");
    if (tasks_per_epoch < 0 || initial_samples < 0 || inference_steps < 0 || policy_steps < 0 || eval_every < 0)
      throw ConfigError("run: counts must be non-negative");
    if (!(nonstationary_fraction >= 0.0 && nonstationary_fraction <= 1.0))
      throw ConfigError("run.nonstationary_fraction must lie in [0, 1]");
  }

  void read(const ConfigTree& tree) {
    read_key(tree, "run", "epochs", epochs);
    read_key(tree, "run", "tasks_per_epoch", tasks_per_epoch);
    read_key(tree, "run", "samples_per_task", samples_per_task);
    read_key(tree, "run", "initial_samples", initial_samples);
    read_key(tree, "run", "inference_steps", inference_steps);
    read_key(tree, "run", "inference_batch", inference_batch);
    read_key(tree, "run", "policy_steps", policy_steps);
    read_key(tree, "run", "policy_batch", policy_batch);
    read_key(tree, "run", "train_tasks", train_tasks);
    read_key(tree, "run", "test_tasks", test_tasks);
    read_key(tree, "run", "eval_every", eval_every);
    read_key(tree, "run", "validation_batch", validation_batch);
    read_key(tree, "run", "train_fraction", train_fraction);
    read_key(tree, "run", "buffer_capacity", buffer_capacity);
    read_key(tree, "run", "nonstationary_fraction", nonstationary_fraction);
    read_key(tree, "run", "nonstationary_segment", nonstationary_segment);
    std::string c = "none";
    read_key(tree, "run", "continual", c);
    continual = bench::parse_continual(c);
    read_key(tree, "run", "seed", seed);
  }

  void write(ConfigTree& tree) const {
    write_key(tree, "run", "epochs", epochs);
    write_key(tree, "run", "tasks_per_epoch", tasks_per_epoch);
    write_key(tree, "run", "samples_per_task", samples_per_task);
    write_key(tree, "run", "initial_samples", initial_samples);
    write_key(tree, "run", "inference_steps", inference_steps);
    write_key(tree, "run", "inference_batch", inference_batch);
    write_key(tree, "run", "policy_steps", policy_steps);
    write_key(tree, "run", "policy_batch", policy_batch);
    write_key(tree, "run", "train_tasks", train_tasks);
    write_key(tree, "run", "test_tasks", test_tasks);
    write_key(tree, "run", "eval_every", eval_every);
    write_key(tree, "run", "validation_batch", validation_batch);
    write_key(tree, "run", "train_fraction", train_fraction);
    write_key(tree, "run", "buffer_capacity", buffer_capacity);
    write_key(tree, "run", "nonstationary_fraction", nonstationary_fraction);
    write_key(tree, "run", "nonstationary_segment", nonstationary_segment);
    const char* c = continual == bench::ContinualSetting::None     ? "none"
                    : continual == bench::ContinualSetting::Linear ? "linear"
                                                                   : "cut";
    write_key(tree, "run", "continual", c);
    write_key(tree, "run", "seed", seed);
  }
};

/// Everything a run needs, read from one key-value file.
struct ExperimentConfig {
  RunConfig run;
  bench::BenchmarkConfig benchmark = bench::BenchmarkConfig::half_cheetah_eight();
  taskinfer::InferenceConfig encoder;
  control::SacConfig sac;

  /// Fills encoder dimensions from the benchmark; K defaults to the number
  /// of enabled base tasks.
  void finalize() {
    encoder.obs_dim = benchmark.observation_dim();
    encoder.action_dim = benchmark.action_dim();
    if (encoder.components <= 0) encoder.components = static_cast<int>(benchmark.tasks.size());
    run.validate();
    benchmark.validate();
    encoder.validate();
    sac.validate();
    if (encoder.components < static_cast<int>(benchmark.tasks.size()))
      throw ConfigError("encoder.components must be at least the number of enabled base tasks");
  }

  static ExperimentConfig from_tree(const ConfigTree& tree) {
    ExperimentConfig c;
    c.run.read(tree);
    c.benchmark = bench::BenchmarkConfig::from_config(tree);
    c.encoder.components = 0;
    c.encoder.read(tree);
    c.sac.read(tree);
    c.finalize();
    return c;
  }

  static ExperimentConfig from_file(const std::filesystem::path& p) { return from_tree(read_config_file(p)); }
  static ExperimentConfig from_text(const std::string& text) { return from_tree(parse_config_text(text)); }

  std::string to_text() const {
    ConfigTree tree;
    run.write(tree);
    benchmark.to_config(tree);
    encoder.write(tree);
    sac.write(tree);
    return config_to_text(tree);
  }
};

}  // namespace mixinfer::orchestrator

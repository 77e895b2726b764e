#pragma once

#include <cstdio>
#include <filesystem>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "mixinfer/bench.hpp"
#include "mixinfer/control/sac.hpp"
#include "mixinfer/diffcore/checkpoint.hpp"
#include "mixinfer/memory/replay.hpp"
#include "mixinfer/orchestrator/config.hpp"
#include "mixinfer/taskinfer/model.hpp"

namespace mixinfer::orchestrator {

/// Encoder, decoder and policy built from one experiment configuration.
class Agent {
 public:
  explicit Agent(const ExperimentConfig& cfg)
      : cfg_(cfg),
        sim_(cfg.benchmark),
        init_inference_(named_stream(cfg.run.seed, "init.inference")),
        init_policy_(named_stream(cfg.run.seed, "init.policy")),
        inference_(cfg.encoder, init_inference_),
        sac_(cfg.benchmark.observation_dim(), cfg.benchmark.action_dim(), cfg.encoder.latent_dim, cfg.sac,
             init_policy_) {}

  const ExperimentConfig& config() const { return cfg_; }
  const bench::Simulator& simulator() const { return sim_; }
  taskinfer::TaskInference& inference() { return inference_; }
  const taskinfer::TaskInference& inference() const { return inference_; }
  const taskinfer::Encoder& encoder() const { return inference_.encoder(); }
  control::SoftActorCritic& sac() { return sac_; }
  const control::SoftActorCritic& sac() const { return sac_; }

  /// Mean-mode embeddings for acting; an empty context under the MLP
  /// extractor gives z = 0.
  Matrix embed_for_acting(const memory::ContextBatch& c) const {
    return control::embed_for_batch(encoder(), c, taskinfer::ZMode::Mean);
  }

 private:
  ExperimentConfig cfg_;
  bench::Simulator sim_;
  Rng init_inference_, init_policy_;
  taskinfer::TaskInference inference_;
  control::SoftActorCritic sac_;
};

// ---- task lists ------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// "Base:target,Base:target,..."
inline std::string format_tasks(const std::vector<bench::TaskSpec>& tasks) {
  std::string out;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (i) out += ',';
    out += std::string(bench::name_of(tasks[i].base)) + ':' + format_double(tasks[i].target);
  }
  return out;
}

inline std::vector<bench::TaskSpec> parse_tasks(const std::string& text) {
  std::vector<bench::TaskSpec> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("task '" + item + "' must look like Base:target");
    const auto base = bench::parse_base_task(item.substr(0, colon));
    std::size_t used = 0;
    double target = 0;
    try {
      target = std::stod(item.substr(colon + 1), &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() - colon - 1) throw ConfigError("bad target in task '" + item + "'");
    out.push_back({base, target});
  }
  if (out.empty()) throw ConfigError("empty task list");
  return out;
}

/// `count` tasks cycling through the enabled base tasks, targets uniform in range.
inline std::vector<bench::TaskSpec> make_tasks(const bench::BenchmarkConfig& b, int count, Rng& rng) {
  std::vector<bench::TaskSpec> out;
  for (int i = 0; i < count; ++i) {
    const auto base = b.tasks[static_cast<std::size_t>(i) % b.tasks.size()];
    out.push_back(bench::sample_task(base, b.range(base), rng));
  }
  return out;
}

/// Train and test task lists of a run, fixed by the root seed.
struct TaskSets {
  std::vector<bench::TaskSpec> train, test;

  static TaskSets from_config(const ExperimentConfig& cfg) {
    Rng rng = named_stream(cfg.run.seed, "tasks");
    TaskSets t;
    t.train = make_tasks(cfg.benchmark, cfg.run.train_tasks, rng);
    t.test = make_tasks(cfg.benchmark, cfg.run.test_tasks, rng);
    return t;
  }
};

// ---- checkpoints -----------------------------------------------------------

inline constexpr const char* kAgentFormat = "mixinfer-agent";

inline Checkpoint make_checkpoint(const Agent& agent, const TaskSets& tasks, int epoch) {
  Checkpoint ck;
  ck.meta["format"] = kAgentFormat;
  ck.meta["config"] = agent.config().to_text();
  ck.meta["epoch"] = std::to_string(epoch);
  ck.meta["train_tasks"] = format_tasks(tasks.train);
  ck.meta["test_tasks"] = format_tasks(tasks.test);
  ck.sets.emplace_back("encoder", agent.inference().encoder().params());
  ck.sets.emplace_back("decoder", agent.inference().decoder().params());
  ck.sets.emplace_back("policy", agent.sac().actor());
  ck.sets.emplace_back("critics", agent.sac().critics());
  ck.sets.emplace_back("target_critics", agent.sac().target_critics());
  ck.sets.emplace_back("temperature", agent.sac().temperature_params());
  return ck;
}

struct LoadedAgent {
  std::unique_ptr<Agent> agent;
  TaskSets tasks;
  int epoch = 0;
};

inline LoadedAgent agent_from_checkpoint(const Checkpoint& ck) {
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = ck.meta.find(key);
    if (it == ck.meta.end()) throw ConfigError("checkpoint lacks '" + key + "'; not an agent checkpoint");
    return it->second;
  };
  if (get("format") != kAgentFormat) throw ConfigError("checkpoint is not an agent checkpoint");
  LoadedAgent out;
  out.agent = std::make_unique<Agent>(ExperimentConfig::from_text(get("config")));
  out.tasks.train = parse_tasks(get("train_tasks"));
  out.tasks.test = parse_tasks(get("test_tasks"));
  out.epoch = std::stoi(get("epoch"));
  Agent& a = *out.agent;
  assign_values(a.inference().encoder().params(), ck.set("encoder"));
  assign_values(a.inference().decoder().params(), ck.set("decoder"));
  assign_values(a.sac().actor(), ck.set("policy"));
  assign_values(a.sac().critics(), ck.set("critics"));
  assign_values(a.sac().target_critics(), ck.set("target_critics"));
  assign_values(a.sac().temperature_params(), ck.set("temperature"));
  return out;
}

inline LoadedAgent load_agent(const std::filesystem::path& path) { return agent_from_checkpoint(load_checkpoint(path)); }

}  // namespace mixinfer::orchestrator

#pragma once

#include <functional>
#include <vector>

#include "mixinfer/orchestrator/agent.hpp"

namespace mixinfer::orchestrator {

/// One step of a roll-out as seen by an observer: the value the active task
/// tracks after the step, and that task.
struct TraceRow {
  int step = 0;
  bench::TaskSpec task;
  double value = 0.0;
  double reward = 0.0;
};

struct Rollout {
  memory::EpisodeRecord episode;
  std::vector<TraceRow> trace;
  double total_reward = 0.0;
};

struct RolloutRequest {
  bench::Schedule schedule;
  int task_id = 0;
};

/// Chooses actions (B x A) for observations (B x obs) with embeddings (B x d).
/// `envs` are the environments being acted in, for scripted controllers.
using ActFn =
    std::function<Matrix(const Matrix& s, const Matrix& z, const std::vector<const bench::Environment*>& envs)>;

/// Plays one episode per request in lockstep. At every step each episode's
/// own last T transitions (zero-padded at the start) are encoded to z, and
/// `act` chooses the actions. Episodes never share context.
/// `env_rng` draws reset jitter in request order.
inline std::vector<Rollout> collect_rollouts(const Agent& agent, const std::vector<RolloutRequest>& requests,
                                             const ActFn& act, Rng& env_rng) {
  const auto& sim = agent.simulator();
  const auto& cfg = agent.config();
  const int T = cfg.encoder.context;
  const int obs = cfg.benchmark.observation_dim();
  const int row_dim = cfg.encoder.row_dim();

  std::vector<bench::Environment> envs;
  std::vector<Vector> current;
  std::vector<Matrix> history;
  std::vector<Rollout> out(requests.size());
  envs.reserve(requests.size());
  for (const auto& r : requests) {
    bench::validate_schedule(r.schedule, bench::schedule_length(r.schedule));
    envs.push_back(bench::wrap_nonstationary(sim, r.schedule));
    current.push_back(envs.back().reset(env_rng));
    history.emplace_back(envs.back().length(), row_dim);
  }

  for (int step = 0;; ++step) {
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < envs.size(); ++i)
      if (!envs[i].done()) active.push_back(i);
    if (active.empty()) break;
    const auto B = static_cast<Eigen::Index>(active.size());

    memory::ContextBatch c;
    c.steps.assign(static_cast<std::size_t>(T), Matrix::Zero(B, row_dim));
    c.masks.assign(static_cast<std::size_t>(T), Matrix::Zero(B, 1));
    c.labels.assign(active.size(), 0);
    Matrix s(B, obs);
    for (Eigen::Index b = 0; b < B; ++b) {
      const std::size_t i = active[static_cast<std::size_t>(b)];
      s.row(b) = current[i].transpose();
      const int first = std::max(0, step - T);
      for (int k = first; k < step; ++k) {
        const auto slot = static_cast<std::size_t>(T - (step - k));
        c.steps[slot].row(b) = history[i].row(k);
        c.masks[slot](b, 0) = 1.0;
      }
    }
    const Matrix z = agent.embed_for_acting(c);
    std::vector<const bench::Environment*> acting;
    for (auto i : active) acting.push_back(&envs[i]);
    const Matrix a = act(s, z, acting);

    for (Eigen::Index b = 0; b < B; ++b) {
      const std::size_t i = active[static_cast<std::size_t>(b)];
      auto& env = envs[i];
      const bench::TaskSpec task = env.task();
      const Vector action = a.row(b).transpose();
      const auto res = env.step(action);
      memory::Transition tr;
      tr.s = current[i];
      tr.a = action;
      tr.r = res.reward;
      tr.s_next = res.observation;
      tr.label = cfg.benchmark.label_of(task.base);
      tr.task_id = requests[i].task_id;
      tr.step_index = step;
      history[i].row(step) << tr.s.transpose(), tr.a.transpose(), tr.r, tr.s_next.transpose();
      out[i].episode.transitions.push_back(std::move(tr));
      out[i].episode.tasks.push_back(task);
      out[i].trace.push_back({step, task, bench::tracked_value(env.state(), task.base), res.reward});
      out[i].total_reward += res.reward;
      current[i] = res.observation;
    }
  }
  return out;
}

/// Roll-outs with the agent's own policy. `policy_rng` is required for
/// stochastic actions.
inline std::vector<Rollout> collect_rollouts(const Agent& agent, const std::vector<RolloutRequest>& requests,
                                             control::ActMode mode, Rng& env_rng, Rng* policy_rng) {
  ActFn act = [&](const Matrix& s, const Matrix& z, const std::vector<const bench::Environment*>&) {
    return agent.sac().act(s, z, mode, policy_rng);
  };
  return collect_rollouts(agent, requests, act, env_rng);
}

inline Rollout collect_rollout(const Agent& agent, const bench::Schedule& schedule, control::ActMode mode,
                               Rng& env_rng, Rng* policy_rng, int task_id = 0) {
  return std::move(collect_rollouts(agent, {{schedule, task_id}}, mode, env_rng, policy_rng).front());
}

inline bench::Schedule stationary(const bench::TaskSpec& task, int length) { return {{task, length}}; }

}  // namespace mixinfer::orchestrator

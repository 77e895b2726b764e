#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mixinfer/bench/benchmark.hpp"

namespace mixinfer::bench {

struct ScheduleEntry {
  TaskSpec task;
  int duration = 1;  ///< steps
};

/// Ordered task segments played back-to-back within one episode.
using Schedule = std::vector<ScheduleEntry>;

inline int schedule_length(const Schedule& s) {
  int n = 0;
  for (const auto& e : s) n += e.duration;
  return n;
}

inline void validate_schedule(const Schedule& s, int cap) {
  if (s.empty()) throw ConfigError("schedule is empty");
  for (const auto& e : s)
    if (e.duration < 1) throw ConfigError("schedule entry duration must be >= 1");
  if (schedule_length(s) > cap)
    throw ConfigError("schedule length " + std::to_string(schedule_length(s)) + " exceeds episode cap " +
                      std::to_string(cap));
}

struct StepResult {
  Vector observation;
  double reward = 0.0;
  bool done = false;
};

/// One episode of the benchmark, optionally switching tasks mid-episode.
///
/// Body state persists across switches; the reward normalizer is recomputed
/// from the state at every switch so each segment starts at reward -1.
class Environment {
 public:
  /// Stationary episode of `cap` steps (config cap when cap <= 0).
  Environment(const Simulator& sim, TaskSpec task, int cap = 0)
      : Environment(sim, Schedule{{task, cap > 0 ? cap : sim.config().episode_cap}},
                    cap > 0 ? cap : sim.config().episode_cap) {}

  Environment(const Simulator& sim, Schedule schedule, int cap) : sim_(&sim), schedule_(std::move(schedule)), cap_(cap) {
    validate_schedule(schedule_, cap_);
  }

  Vector reset(Rng& rng) {
    state_ = sim_->reset_state(rng);
    steps_ = 0;
    segment_ = 0;
    segment_start_ = 0;
    clipped_ = 0;
    d0_ = sim_->normalizer(state_, task());
    return sim_->observe(state_);
  }

  StepResult step(const Vector& action) {
    if (done()) throw ConfigError("step() called on a finished episode");
    if (action.size() != sim_->config().action_dim()) throw ConfigError("action dimension mismatch");
    Vector a = action;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      if (!std::isfinite(a[i])) throw NumericFault("environment action");
      if (a[i] < -1.0 || a[i] > 1.0) {
        ++clipped_;
        a[i] = std::clamp(a[i], -1.0, 1.0);
      }
    }
    state_ = sim_->integrate(state_, a);
    const double r = sim_->reward(state_, task(), d0_);
    ++steps_;
    if (!done() && steps_ - segment_start_ >= schedule_[segment_].duration && segment_ + 1 < schedule_.size()) {
      ++segment_;
      segment_start_ = steps_;
      d0_ = sim_->normalizer(state_, task());
    }
    return {sim_->observe(state_), r, done()};
  }

  /// Task governing the next step's reward.
  const TaskSpec& task() const { return schedule_[segment_].task; }
  const BodyState& state() const { return state_; }
  double normalizer() const { return d0_; }
  int steps() const { return steps_; }
  int length() const { return std::min(cap_, schedule_length(schedule_)); }
  bool done() const { return steps_ >= length(); }
  std::uint64_t clipped_actions() const { return clipped_; }
  const Simulator& simulator() const { return *sim_; }

 private:
  const Simulator* sim_;
  Schedule schedule_;
  int cap_;
  BodyState state_;
  double d0_ = 1.0;
  int steps_ = 0;
  std::size_t segment_ = 0;
  int segment_start_ = 0;
  std::uint64_t clipped_ = 0;
};

/// Environment whose task switches at the schedule's boundaries. The episode
/// lasts for the whole schedule.
inline Environment wrap_nonstationary(const Simulator& sim, Schedule schedule) {
  if (schedule.empty()) throw ConfigError("non-stationary schedule is empty");
  const int len = schedule_length(schedule);
  return Environment(sim, std::move(schedule), len);
}

enum class ContinualSetting { None, Linear, Cut };

inline ContinualSetting parse_continual(const std::string& s) {
  if (s == "none") return ContinualSetting::None;
  if (s == "linear") return ContinualSetting::Linear;
  if (s == "cut") return ContinualSetting::Cut;
  throw ConfigError("unknown continual setting '" + s + "'");
}

/// Base labels (0-based) that may be collected from at `progress` in [0, 1].
/// The frontier advances by one base task per 1/K of training.
inline std::vector<int> continual_access(ContinualSetting setting, double progress, int total_bases) {
  if (!(progress >= 0.0 && progress <= 1.0)) throw DomainError("continual_access: progress must lie in [0, 1]");
  if (total_bases < 1) throw ConfigError("continual_access: no base tasks");
  std::vector<int> out;
  if (setting == ContinualSetting::None) {
    for (int k = 0; k < total_bases; ++k) out.push_back(k);
    return out;
  }
  const int frontier = std::min(total_bases, static_cast<int>(std::floor(progress * total_bases)) + 1);
  if (setting == ContinualSetting::Linear)
    for (int k = 0; k < frontier; ++k) out.push_back(k);
  else
    out.push_back(frontier - 1);
  return out;
}

}  // namespace mixinfer::bench

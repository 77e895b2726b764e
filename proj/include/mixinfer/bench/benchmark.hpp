#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mixinfer/bench/task.hpp"
#include "mixinfer/config.hpp"

namespace mixinfer::bench {

using Vector = Eigen::VectorXd;

enum class BenchmarkKind { HalfCheetahEight, AntThree };

struct BenchmarkConfig {
  BenchmarkKind kind = BenchmarkKind::HalfCheetahEight;
  std::vector<BaseTask> tasks;  ///< enabled base tasks; index = base label
  int episode_cap = 200;
  double dt = 0.05;
  std::array<double, 3> actuator_scales{10.0, 15.0, 5.0};
  double gravity = 9.81;
  double reset_jitter = 0.01;
  double normalizer_floor = 0.1;
  std::map<BaseTask, Range> ranges;  ///< overrides of the family defaults
  std::uint64_t seed = 0;

  static BenchmarkConfig half_cheetah_eight() {
    BenchmarkConfig c;
    c.tasks = {BaseTask::RunForward, BaseTask::RunBackward, BaseTask::GoalFront, BaseTask::GoalBack,
               BaseTask::FrontStand, BaseTask::BackStand,   BaseTask::Jump,      BaseTask::FrontFlip};
    return c;
  }

  static BenchmarkConfig ant_three() {
    BenchmarkConfig c;
    c.kind = BenchmarkKind::AntThree;
    c.tasks = {BaseTask::AntRunUp,    BaseTask::AntRunDown,  BaseTask::AntRunLeft,   BaseTask::AntRunRight,
               BaseTask::AntGoalUp,   BaseTask::AntGoalDown, BaseTask::AntGoalLeft, BaseTask::AntGoalRight,
               BaseTask::AntJump};
    c.actuator_scales = {10.0, 10.0, 15.0};
    return c;
  }

  Range range(BaseTask b) const {
    if (auto it = ranges.find(b); it != ranges.end()) return it->second;
    const auto& f = family(b);
    return {f.lo, f.hi};
  }

  /// Base label of `b`, i.e. its position in the enabled list.
  int label_of(BaseTask b) const {
    auto it = std::find(tasks.begin(), tasks.end(), b);
    if (it == tasks.end()) throw ConfigError("base task " + std::string(name_of(b)) + " not enabled");
    return static_cast<int>(it - tasks.begin());
  }

  int observation_dim() const { return kind == BenchmarkKind::HalfCheetahEight ? 7 : 6; }
  int action_dim() const { return 3; }

  void validate() const {
    if (tasks.empty()) throw ConfigError("benchmark: no base tasks enabled");
    for (BaseTask b : tasks) {
      const bool ant = static_cast<int>(b) >= static_cast<int>(BaseTask::AntRunUp);
      if (ant != (kind == BenchmarkKind::AntThree))
        throw ConfigError("benchmark: task " + std::string(name_of(b)) + " does not belong to this benchmark");
      if (std::count(tasks.begin(), tasks.end(), b) > 1)
        throw ConfigError("benchmark: task listed twice: " + std::string(name_of(b)));
    }
    if (episode_cap < 1) throw ConfigError("benchmark: episode_cap must be >= 1");
    if (!(dt > 0.0)) throw ConfigError("benchmark: dt must be positive");
    if (!(normalizer_floor > 0.0)) throw ConfigError("benchmark: normalizer floor must be positive");
    for (const auto& [b, r] : ranges)
      if (!(r.lo <= r.hi)) throw ConfigError("benchmark: empty range for " + std::string(name_of(b)));
  }

  /// Reads the [benchmark] section.
  static BenchmarkConfig from_config(const ConfigTree& tree) {
    std::string name = "half_cheetah_eight";
    read_key(tree, "benchmark", "name", name);
    BenchmarkConfig c;
    if (name == "half_cheetah_eight")
      c = half_cheetah_eight();
    else if (name == "ant_three")
      c = ant_three();
    else
      throw ConfigError("benchmark.name: unknown benchmark '" + name + "'");

    std::vector<std::string> names;
    read_list(tree, "benchmark", "tasks", names);
    if (!names.empty()) {
      c.tasks.clear();
      for (const auto& n : names) c.tasks.push_back(parse_base_task(n));
    }
    read_key(tree, "benchmark", "episode_cap", c.episode_cap);
    read_key(tree, "benchmark", "dt", c.dt);
    std::vector<double> scales;
    read_list(tree, "benchmark", "actuator_scales", scales);
    if (!scales.empty()) {
      if (scales.size() != 3) throw ConfigError("benchmark.actuator_scales: expected 3 values");
      std::copy(scales.begin(), scales.end(), c.actuator_scales.begin());
    }
    read_key(tree, "benchmark", "gravity", c.gravity);
    read_key(tree, "benchmark", "seed", c.seed);
    for (const auto& f : kFamilies) {
      std::vector<double> r;
      read_list(tree, "benchmark", "range_" + std::string(f.name), r);
      if (r.empty()) continue;
      if (r.size() != 2) throw ConfigError("benchmark.range_" + std::string(f.name) + ": expected 'lo hi'");
      c.ranges[f.base] = {r[0], r[1]};
    }
    c.validate();
    return c;
  }

  void to_config(ConfigTree& tree) const {
    write_key(tree, "benchmark", "name", kind == BenchmarkKind::HalfCheetahEight ? "half_cheetah_eight" : "ant_three");
    std::vector<std::string> names;
    for (BaseTask b : tasks) names.emplace_back(name_of(b));
    write_list(tree, "benchmark", "tasks", names);
    write_key(tree, "benchmark", "episode_cap", episode_cap);
    write_key(tree, "benchmark", "dt", dt);
    write_list(tree, "benchmark", "actuator_scales",
               std::vector<double>(actuator_scales.begin(), actuator_scales.end()));
    write_key(tree, "benchmark", "gravity", gravity);
    write_key(tree, "benchmark", "seed", seed);
    for (const auto& [b, r] : ranges)
      write_list(tree, "benchmark", "range_" + std::string(name_of(b)), std::vector<double>{r.lo, r.hi});
  }
};

/// Rigid-body state. The planar body uses (px, pz, theta, vx, vz, omega);
/// the point-mass body uses (px, py, pz, vx, vy, vz).
struct BodyState {
  double px = 0, py = 0, pz = 0;
  double theta = 0;  ///< unwrapped pitch
  double vx = 0, vy = 0, vz = 0;
  double omega = 0;

  bool finite() const {
    for (double v : {px, py, pz, theta, vx, vy, vz, omega})
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline double tracked_value(const BodyState& s, Tracked q) {
  switch (q) {
    case Tracked::VelX: return s.vx;
    case Tracked::VelY: return s.vy;
    case Tracked::PosX: return s.px;
    case Tracked::PosY: return s.py;
    case Tracked::Pitch: return s.theta;
    case Tracked::PitchRate: return s.omega;
    case Tracked::AbsVelZ: return std::abs(s.vz);
    case Tracked::VelZ: return s.vz;
  }
  return 0.0;
}

inline double tracked_value(const BodyState& s, BaseTask b) { return tracked_value(s, family(b).tracked); }

/// Analytic dynamics and pseudo-normalized rewards.
class Simulator {
 public:
  explicit Simulator(BenchmarkConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const BenchmarkConfig& config() const { return cfg_; }

  /// Observation with positions and rates divided by fixed scales so every
  /// coordinate stays O(1) over the target ranges; sin/cos are unscaled.
  Vector observe(const BodyState& s) const {
    Vector o(cfg_.observation_dim());
    if (cfg_.kind == BenchmarkKind::HalfCheetahEight)
      o << s.px / kPositionScale, s.pz, std::sin(s.theta), std::cos(s.theta), s.vx / kVelocityScale,
          s.vz / kVelocityScale, s.omega / kRateScale;
    else
      o << s.px / kPositionScale, s.py / kPositionScale, s.pz, s.vx / kVelocityScale, s.vy / kVelocityScale,
          s.vz / kVelocityScale;
    return o;
  }

  static constexpr double kPositionScale = 10.0;
  static constexpr double kVelocityScale = 5.0;
  static constexpr double kRateScale = 10.0;

  /// State at the origin with uniform jitter on every component; height is
  /// kept on or above the ground.
  BodyState reset_state(Rng& rng) const {
    const double j = cfg_.reset_jitter;
    BodyState s;
    s.px = uniform(rng, -j, j);
    s.pz = std::abs(uniform(rng, -j, j));
    s.vx = uniform(rng, -j, j);
    s.vz = uniform(rng, -j, j);
    if (cfg_.kind == BenchmarkKind::HalfCheetahEight) {
      s.theta = uniform(rng, -j, j);
      s.omega = uniform(rng, -j, j);
    } else {
      s.py = uniform(rng, -j, j);
      s.vy = uniform(rng, -j, j);
    }
    return s;
  }

  /// max(|target - tracked value|, floor).
  double normalizer(const BodyState& s, const TaskSpec& task) const {
    return std::max(std::abs(task.target - tracked_value(s, task.base)), cfg_.normalizer_floor);
  }

  double reward(const BodyState& s, const TaskSpec& task, double d0) const {
    return -std::abs(task.target - tracked_value(s, task.base)) / d0;
  }

  /// Semi-implicit Euler step. Actions are assumed already clipped to [-1, 1].
  BodyState integrate(const BodyState& s, const Vector& a) const {
    const double dt = cfg_.dt;
    const auto& k = cfg_.actuator_scales;
    BodyState n = s;
    if (cfg_.kind == BenchmarkKind::HalfCheetahEight) {
      n.vx += k[0] * a[0] * dt;
      n.vz += (k[1] * a[1] - cfg_.gravity) * dt;
      n.omega += k[2] * a[2] * dt;
      n.px += n.vx * dt;
      n.pz += n.vz * dt;
      n.theta += n.omega * dt;
    } else {
      n.vx += k[0] * a[0] * dt;
      n.vy += k[1] * a[1] * dt;
      n.vz += (k[2] * a[2] - cfg_.gravity) * dt;
      n.px += n.vx * dt;
      n.py += n.vy * dt;
      n.pz += n.vz * dt;
    }
    if (n.pz <= 0.0) {
      n.pz = 0.0;
      n.vz = std::max(n.vz, 0.0);
    }
    return n;
  }

 private:
  BenchmarkConfig cfg_;
};

}  // namespace mixinfer::bench

#pragma once

#include <array>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>

#include "mixinfer/error.hpp"
#include "mixinfer/rng.hpp"

namespace mixinfer::bench {

/// Base task families. The first eight form the planar "cheetah" set, the
/// remaining nine the point-mass "ant" set (four run directions, four goal
/// directions, jump).
enum class BaseTask : int {
  RunForward,
  RunBackward,
  GoalFront,
  GoalBack,
  FrontStand,
  BackStand,
  Jump,
  FrontFlip,
  AntRunUp,
  AntRunDown,
  AntRunLeft,
  AntRunRight,
  AntGoalUp,
  AntGoalDown,
  AntGoalLeft,
  AntGoalRight,
  AntJump,
};

inline constexpr int kBaseTaskCount = 17;

/// Body quantity a family's reward tracks.
enum class Tracked { VelX, VelY, PosX, PosY, Pitch, PitchRate, AbsVelZ, VelZ };

struct Family {
  BaseTask base;
  std::string_view name;
  Tracked tracked;
  double lo, hi;  ///< default target range
};

inline constexpr double kPi = std::numbers::pi;

inline constexpr std::array<Family, kBaseTaskCount> kFamilies{{
    {BaseTask::RunForward, "RunForward", Tracked::VelX, 1.0, 5.0},
    {BaseTask::RunBackward, "RunBackward", Tracked::VelX, -5.0, -1.0},
    {BaseTask::GoalFront, "GoalFront", Tracked::PosX, 5.0, 25.0},
    {BaseTask::GoalBack, "GoalBack", Tracked::PosX, -25.0, -5.0},
    {BaseTask::FrontStand, "FrontStand", Tracked::Pitch, kPi / 6.0, kPi / 2.0},
    {BaseTask::BackStand, "BackStand", Tracked::Pitch, -kPi / 2.0, -kPi / 6.0},
    {BaseTask::Jump, "Jump", Tracked::AbsVelZ, 1.5, 3.0},
    {BaseTask::FrontFlip, "FrontFlip", Tracked::PitchRate, 2.0 * kPi, 4.0 * kPi},
    {BaseTask::AntRunUp, "AntRunUp", Tracked::VelY, 1.0, 3.0},
    {BaseTask::AntRunDown, "AntRunDown", Tracked::VelY, -3.0, -1.0},
    {BaseTask::AntRunLeft, "AntRunLeft", Tracked::VelX, -3.0, -1.0},
    {BaseTask::AntRunRight, "AntRunRight", Tracked::VelX, 1.0, 3.0},
    {BaseTask::AntGoalUp, "AntGoalUp", Tracked::PosY, 5.0, 15.0},
    {BaseTask::AntGoalDown, "AntGoalDown", Tracked::PosY, -15.0, -5.0},
    {BaseTask::AntGoalLeft, "AntGoalLeft", Tracked::PosX, -15.0, -5.0},
    {BaseTask::AntGoalRight, "AntGoalRight", Tracked::PosX, 5.0, 15.0},
    {BaseTask::AntJump, "AntJump", Tracked::VelZ, 0.5, 2.0},
}};

inline const Family& family(BaseTask b) { return kFamilies[static_cast<std::size_t>(b)]; }
inline std::string_view name_of(BaseTask b) { return family(b).name; }

inline BaseTask parse_base_task(std::string_view name) {
  for (const auto& f : kFamilies)
    if (f.name == name) return f.base;
  throw ConfigError("unknown base task '" + std::string(name) + "'");
}

/// Active MDP: a base family plus its target parameter (m/s, m, rad or rad/s).
struct TaskSpec {
  BaseTask base = BaseTask::RunForward;
  double target = 0.0;

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

/// Target range, possibly overridden by configuration.
struct Range {
  double lo, hi;
};

inline TaskSpec sample_task(BaseTask base, Range range, Rng& rng) {
  return {base, uniform(rng, range.lo, range.hi)};
}

inline TaskSpec sample_task(BaseTask base, Rng& rng) {
  const auto& f = family(base);
  return sample_task(base, Range{f.lo, f.hi}, rng);
}

}  // namespace mixinfer::bench

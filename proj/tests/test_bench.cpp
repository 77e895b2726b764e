#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mixinfer/bench.hpp"

using namespace mixinfer;
using namespace mixinfer::bench;

namespace {

Simulator cheetah() { return Simulator(BenchmarkConfig::half_cheetah_eight()); }

Vector action(double a1, double a2, double a3) {
  Vector a(3);
  a << a1, a2, a3;
  return a;
}

}  // namespace

TEST(SampleTask, RangesHoldOverManyDraws) {
  const double pi = std::numbers::pi;
  struct Expect {
    BaseTask base;
    double lo, hi;
  };
  // Reference ranges typed in independently of the family table.
  const Expect expected[] = {
      {BaseTask::RunForward, 1, 5},          {BaseTask::RunBackward, -5, -1},      {BaseTask::GoalFront, 5, 25},
      {BaseTask::GoalBack, -25, -5},         {BaseTask::FrontStand, pi / 6, pi / 2}, {BaseTask::BackStand, -pi / 2, -pi / 6},
      {BaseTask::Jump, 1.5, 3.0},            {BaseTask::FrontFlip, 2 * pi, 4 * pi},
  };
  Rng rng(3);
  for (const auto& e : expected) {
    double lo = 1e300, hi = -1e300;
    for (int i = 0; i < 100000; ++i) {
      const double t = sample_task(e.base, rng).target;
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
    EXPECT_GE(lo, e.lo) << name_of(e.base);
    EXPECT_LE(hi, e.hi) << name_of(e.base);
    // uniform over the range: extremes come close to both ends
    EXPECT_LT(lo - e.lo, 1e-3 * (e.hi - e.lo)) << name_of(e.base);
    EXPECT_LT(e.hi - hi, 1e-3 * (e.hi - e.lo)) << name_of(e.base);
  }
}

TEST(Reset, RunForwardStartsAtMinusOne) {
  auto sim = cheetah();
  Rng rng(5);
  Environment env(sim, TaskSpec{BaseTask::RunForward, 3.0});
  env.reset(rng);
  EXPECT_NEAR(env.normalizer(), 3.0, 0.011);
  EXPECT_DOUBLE_EQ(sim.reward(env.state(), env.task(), env.normalizer()), -1.0);
}

TEST(Reset, NormalizerFloorsAtZeroDeviation) {
  auto sim = cheetah();
  BodyState s;
  s.vx = 2.5;
  EXPECT_DOUBLE_EQ(sim.normalizer(s, {BaseTask::RunForward, 2.5}), 0.1);
}

TEST(Reset, FrontStandNormalizer) {
  auto sim = cheetah();
  Rng rng(8);
  Environment env(sim, TaskSpec{BaseTask::FrontStand, std::numbers::pi / 3});
  env.reset(rng);
  EXPECT_NEAR(env.normalizer(), std::numbers::pi / 3, 0.011);
}

TEST(Reset, ObservationIsOnTheUnitCircle) {
  auto sim = cheetah();
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    auto s = sim.reset_state(rng);
    s.theta += 37.0 * i;
    auto o = sim.observe(s);
    ASSERT_EQ(o.size(), 7);
    EXPECT_NEAR(o[2] * o[2] + o[3] * o[3], 1.0, 1e-9);
    EXPECT_GE(s.pz, 0.0);
  }
}

TEST(Step, RewardExamples) {
  auto sim = cheetah();
  BodyState s;
  s.vx = 3.0;
  EXPECT_EQ(sim.reward(s, {BaseTask::RunForward, 3.0}, 3.0), 0.0);
  s.vx = 1.5;
  EXPECT_DOUBLE_EQ(sim.reward(s, {BaseTask::RunForward, 3.0}, 3.0), -0.5);
  BodyState falling;
  falling.vz = -2.0;
  EXPECT_EQ(sim.reward(falling, {BaseTask::Jump, 2.0}, 1.0), 0.0);
}

TEST(Step, SemiImplicitEulerOneStep) {
  auto sim = cheetah();
  BodyState s;
  s.pz = 1.0;
  auto n = sim.integrate(s, action(0.5, 1.0, -1.0));
  const double dt = 0.05;
  EXPECT_DOUBLE_EQ(n.vx, 5.0 * dt);
  EXPECT_DOUBLE_EQ(n.px, 5.0 * dt * dt);
  EXPECT_DOUBLE_EQ(n.vz, (15.0 - 9.81) * dt);
  EXPECT_DOUBLE_EQ(n.pz, 1.0 + (15.0 - 9.81) * dt * dt);
  EXPECT_DOUBLE_EQ(n.omega, -5.0 * dt);
  EXPECT_DOUBLE_EQ(n.theta, -5.0 * dt * dt);
}

TEST(Step, GroundClampsHeightAndDownwardVelocity) {
  auto sim = cheetah();
  BodyState s;
  auto n = sim.integrate(s, action(0, -1, 0));
  EXPECT_EQ(n.pz, 0.0);
  EXPECT_EQ(n.vz, 0.0);
}

TEST(Step, OutOfRangeActionsAreClippedAndCounted) {
  auto sim = cheetah();
  Rng r1(2), r2(2);
  Environment a(sim, TaskSpec{BaseTask::RunForward, 2.0}), b(sim, TaskSpec{BaseTask::RunForward, 2.0});
  a.reset(r1);
  b.reset(r2);
  a.step(action(7.0, -3.0, 0.2));
  b.step(action(1.0, -1.0, 0.2));
  EXPECT_EQ(a.clipped_actions(), 2u);
  EXPECT_EQ(b.clipped_actions(), 0u);
  EXPECT_EQ(a.state().vx, b.state().vx);
}

TEST(Step, EpisodeEndsAtCap) {
  auto cfg = BenchmarkConfig::half_cheetah_eight();
  cfg.episode_cap = 5;
  Simulator sim(cfg);
  Rng rng(0);
  Environment env(sim, TaskSpec{BaseTask::RunForward, 2.0});
  env.reset(rng);
  for (int i = 0; i < 4; ++i) EXPECT_FALSE(env.step(action(0, 0, 0)).done);
  EXPECT_TRUE(env.step(action(0, 0, 0)).done);
  EXPECT_THROW(env.step(action(0, 0, 0)), ConfigError);
}

TEST(Step, RewardsNeverPositive) {
  auto sim = cheetah();
  Rng rng(17);
  for (BaseTask b : sim.config().tasks) {
    Environment env(sim, sample_task(b, rng));
    env.reset(rng);
    while (!env.done()) {
      auto r = env.step(action(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)));
      ASSERT_LE(r.reward, 0.0);
    }
  }
}

TEST(Step, SameSeedSameTrajectory) {
  auto sim = cheetah();
  auto run = [&] {
    Rng env_rng(9), act_rng(10);
    Environment env(sim, TaskSpec{BaseTask::FrontFlip, 8.0});
    Vector o = env.reset(env_rng);
    std::vector<double> trace;
    while (!env.done()) {
      auto r = env.step(action(uniform(act_rng, -1, 1), uniform(act_rng, -1, 1), uniform(act_rng, -1, 1)));
      trace.push_back(r.reward);
      for (Eigen::Index i = 0; i < r.observation.size(); ++i) trace.push_back(r.observation[i]);
    }
    return trace;
  };
  EXPECT_EQ(run(), run());
}

TEST(NonStationary, TargetSwitchesWithoutResettingState) {
  auto sim = cheetah();
  Schedule sched{{{BaseTask::RunForward, 2.0}, 80}, {{BaseTask::RunForward, 4.0}, 80}};
  Environment env = wrap_nonstationary(sim, sched);
  EXPECT_EQ(env.length(), 160);
  Rng rng(4);
  env.reset(rng);
  BodyState before;
  for (int i = 0; i < 80; ++i) {
    EXPECT_DOUBLE_EQ(env.task().target, 2.0);
    env.step(action(0.3, 0.0, 0.0));
    before = env.state();
  }
  EXPECT_DOUBLE_EQ(env.task().target, 4.0);
  // the switch happens between steps; the body is untouched by it
  EXPECT_EQ(env.state().px, before.px);
  EXPECT_EQ(env.state().vx, before.vx);
  EXPECT_NEAR(env.normalizer(), std::abs(4.0 - before.vx), 1e-12);
  const BodyState prev = env.state();
  env.step(action(0.3, 0.0, 0.0));
  EXPECT_NEAR(env.state().vx - prev.vx, 10 * 0.3 * 0.05, 1e-12);
}

TEST(NonStationary, FirstRewardOfSegmentIsNearMinusOne) {
  auto sim = cheetah();
  Schedule sched{{{BaseTask::RunForward, 2.0}, 10}, {{BaseTask::RunBackward, -3.0}, 10}};
  Environment env = wrap_nonstationary(sim, sched);
  Rng rng(4);
  env.reset(rng);
  for (int i = 0; i < 10; ++i) env.step(action(0.5, 0, 0));
  const double d0 = env.normalizer();
  auto r = env.step(action(0, 0, 0));
  EXPECT_DOUBLE_EQ(r.reward, -1.0 * std::abs(-3.0 - env.state().vx) / d0);
  EXPECT_NEAR(r.reward, -1.0, 1e-12);  // zero action keeps vx, so deviation equals d0
}

TEST(NonStationary, SingleEntryMatchesStationary) {
  auto sim = cheetah();
  TaskSpec task{BaseTask::GoalFront, 12.0};
  Environment a(sim, task);
  Environment b = wrap_nonstationary(sim, {{task, sim.config().episode_cap}});
  Rng r1(6), r2(6);
  a.reset(r1);
  b.reset(r2);
  while (!a.done()) {
    auto x = a.step(action(0.7, 0.1, -0.2));
    auto y = b.step(action(0.7, 0.1, -0.2));
    ASSERT_EQ(x.reward, y.reward);
    ASSERT_EQ(x.done, y.done);
  }
  EXPECT_TRUE(b.done());
}

TEST(NonStationary, EightBaseCycle) {
  auto sim = cheetah();
  Schedule sched;
  Rng rng(12);
  for (BaseTask b : sim.config().tasks) sched.push_back({sample_task(b, rng), 80});
  auto env = wrap_nonstationary(sim, sched);
  env.reset(rng);
  for (std::size_t seg = 0; seg < sched.size(); ++seg)
    for (int i = 0; i < 80; ++i) {
      ASSERT_EQ(env.task(), sched[seg].task);
      env.step(action(0, 0, 0));
    }
  EXPECT_TRUE(env.done());
}

TEST(NonStationary, EmptyScheduleRejected) {
  auto sim = cheetah();
  EXPECT_THROW(wrap_nonstationary(sim, {}), ConfigError);
  EXPECT_THROW(validate_schedule({{{BaseTask::Jump, 2.0}, 0}}, 10), ConfigError);
}

TEST(Continual, LinearAndCut) {
  EXPECT_EQ(continual_access(ContinualSetting::Linear, 0.30, 8), (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(continual_access(ContinualSetting::Cut, 0.30, 8), (std::vector<int>{2}));
  EXPECT_EQ(continual_access(ContinualSetting::Linear, 0.0, 8), (std::vector<int>{0}));
  EXPECT_EQ(continual_access(ContinualSetting::Cut, 0.0, 8), (std::vector<int>{0}));
  EXPECT_EQ(continual_access(ContinualSetting::Cut, 1.0, 8), (std::vector<int>{7}));
  EXPECT_EQ(continual_access(ContinualSetting::None, 0.5, 3), (std::vector<int>{0, 1, 2}));
  EXPECT_THROW(continual_access(ContinualSetting::Cut, 1.5, 8), DomainError);
}

TEST(Config, RoundTripsThroughText) {
  auto cfg = BenchmarkConfig::half_cheetah_eight();
  cfg.tasks = {BaseTask::RunForward, BaseTask::FrontStand};
  cfg.episode_cap = 120;
  cfg.ranges[BaseTask::RunForward] = {2.0, 3.0};
  ConfigTree tree;
  cfg.to_config(tree);
  auto back = BenchmarkConfig::from_config(parse_config_text(config_to_text(tree)));
  EXPECT_EQ(back.tasks, cfg.tasks);
  EXPECT_EQ(back.episode_cap, 120);
  EXPECT_EQ(back.range(BaseTask::RunForward).lo, 2.0);
  EXPECT_EQ(back.label_of(BaseTask::FrontStand), 1);
}

TEST(Config, RejectsForeignTasks) {
  auto tree = parse_config_text("[benchmark]\nname = ant_three\ntasks = RunForward\n");
  EXPECT_THROW(BenchmarkConfig::from_config(tree), ConfigError);
  EXPECT_THROW(BenchmarkConfig::from_config(parse_config_text("[benchmark]\ntasks = Moonwalk\n")), ConfigError);
}

TEST(AntThree, PointMassTracksPlanarTargets) {
  Simulator sim(BenchmarkConfig::ant_three());
  EXPECT_EQ(sim.config().tasks.size(), 9u);
  BodyState s;
  s.pz = 1.0;
  auto n = sim.integrate(s, action(0.1, -0.2, 1.0));
  EXPECT_DOUBLE_EQ(n.vy, -0.2 * 10 * 0.05);
  EXPECT_EQ(sim.observe(n).size(), 6);
  EXPECT_DOUBLE_EQ(tracked_value(n, BaseTask::AntRunDown), n.vy);
}

TEST(Observe, LayoutAndScales) {
  auto sim = cheetah();
  BodyState s;
  s.px = 20.0;
  s.pz = 0.5;
  s.theta = std::numbers::pi / 2;
  s.vx = -4.0;
  s.vz = 2.5;
  s.omega = 12.0;
  auto o = sim.observe(s);
  EXPECT_DOUBLE_EQ(o[0], 2.0);
  EXPECT_DOUBLE_EQ(o[1], 0.5);
  EXPECT_NEAR(o[2], 1.0, 1e-15);
  EXPECT_NEAR(o[3], 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(o[4], -0.8);
  EXPECT_DOUBLE_EQ(o[5], 0.5);
  EXPECT_DOUBLE_EQ(o[6], 1.2);
}

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mixinfer/orchestrator.hpp"

using namespace mixinfer;
using namespace mixinfer::orchestrator;

namespace {

// Four base tasks, tiny networks and budgets.
std::string small_config_text(int epochs, int policy_steps = 4, const std::string& continual = "none") {
  std::ostringstream os;
  os << "[run]\nepochs = " << epochs << "\nsamples_per_task = 40\ninitial_samples = 40\ninference_steps = 2\n"
     << "inference_batch = 16\npolicy_steps = " << policy_steps << "\npolicy_batch = 16\ntrain_tasks = 8\n"
     << "test_tasks = 4\neval_every = 1\nvalidation_batch = 16\ncontinual = " << continual << "\nseed = 5\n"
     << "[benchmark]\ntasks = RunForward RunBackward GoalFront FrontStand\nepisode_cap = 40\n"
     << "[encoder]\ncontext = 8\nlatent_dim = 2\nnet_complexity = 1\n"
     << "[sac]\nhidden = 16 16\n";
  return os.str();
}

ExperimentConfig small_config(int epochs, int policy_steps = 4, const std::string& continual = "none") {
  return ExperimentConfig::from_text(small_config_text(epochs, policy_steps, continual));
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mixinfer_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Deadbeat velocity controller: sets vx to the target in one step when the
// actuator allows it, ignores everything else.
ActFn velocity_oracle(const bench::BenchmarkConfig& b) {
  return [b](const Matrix& s, const Matrix&, const std::vector<const bench::Environment*>& envs) {
    Matrix a = Matrix::Zero(s.rows(), 3);
    for (std::size_t i = 0; i < envs.size(); ++i) {
      const auto& task = envs[i]->task();
      const double vx = envs[i]->state().vx;
      const double want = (task.target - vx) / (b.actuator_scales[0] * b.dt);
      a(static_cast<Eigen::Index>(i), 0) = std::clamp(want, -1.0, 1.0);
    }
    return a;
  };
}

}  // namespace

// ---- configuration ---------------------------------------------------------

TEST(RunConfig, RoundTripsThroughText) {
  const auto c = small_config(3);
  const auto again = ExperimentConfig::from_text(c.to_text());
  EXPECT_EQ(again.to_text(), c.to_text());
  EXPECT_EQ(again.run.epochs, 3);
  EXPECT_EQ(again.encoder.components, 4);
  EXPECT_EQ(again.benchmark.tasks.size(), 4u);
}

TEST(RunConfig, RejectsInvalidCounts) {
  EXPECT_THROW(ExperimentConfig::from_text("[run]\nepochs = 0\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_text("[run]\ncontinual = sometimes\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_text("[run]\nnonstationary_fraction = 2\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_text("[encoder]\ncomponents = 2\n[benchmark]\ntasks = RunForward "
                                           "RunBackward GoalFront\n"),
               ConfigError);
}

TEST(RunConfig, EvaluationCadence) {
  RunConfig r;
  r.epochs = 300;
  EXPECT_EQ(r.evaluation_interval(), 6);
  r.epochs = 20;
  EXPECT_EQ(r.evaluation_interval(), 1);
  r.eval_every = 7;
  EXPECT_EQ(r.evaluation_interval(), 7);
}

TEST(RunConfig, ShippedProfilesLoad) {
  for (const char* name : {"desk.cfg", "paper.cfg"}) {
    SCOPED_TRACE(name);
    const auto c = ExperimentConfig::from_file(fs::path(MIXINFER_SOURCE_DIR) / "configs" / name);
    EXPECT_GE(c.run.epochs, 1);
  }
  const auto desk = ExperimentConfig::from_file(fs::path(MIXINFER_SOURCE_DIR) / "configs" / "desk.cfg");
  EXPECT_EQ(desk.benchmark.tasks.size(), 4u);
  EXPECT_EQ(desk.run.train_tasks, 16);
  EXPECT_EQ(desk.run.test_tasks, 8);
  EXPECT_EQ(desk.encoder.context, 32);
  EXPECT_EQ(desk.run.epochs, 300);
  const auto paper = ExperimentConfig::from_file(fs::path(MIXINFER_SOURCE_DIR) / "configs" / "paper.cfg");
  EXPECT_EQ(paper.run.inference_steps, 128);
  EXPECT_EQ(paper.run.inference_batch, 4096);
  EXPECT_EQ(paper.run.policy_steps, 2048);
  EXPECT_EQ(paper.run.policy_batch, 256);
  EXPECT_EQ(paper.run.train_tasks, 80);
  EXPECT_EQ(paper.run.test_tasks, 40);
  EXPECT_EQ(paper.encoder.context, 64);
}

TEST(TaskList, FormatParseRoundTrip) {
  Rng rng(3);
  const auto tasks = make_tasks(small_config(1).benchmark, 9, rng);
  const auto back = parse_tasks(format_tasks(tasks));
  ASSERT_EQ(back.size(), tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    EXPECT_EQ(back[i].base, tasks[i].base);
    EXPECT_EQ(back[i].target, tasks[i].target);
  }
  EXPECT_EQ(tasks[4].base, bench::BaseTask::RunForward);
  EXPECT_THROW(parse_tasks("RunForward"), ConfigError);
  EXPECT_THROW(parse_tasks("RunForward:fast"), ConfigError);
  EXPECT_THROW(parse_tasks("Swim:2"), ConfigError);
  EXPECT_THROW(parse_tasks(""), ConfigError);
}

TEST(TaskList, SetsDependOnSeedOnly) {
  auto a = small_config(1), b = small_config(7);
  EXPECT_EQ(format_tasks(TaskSets::from_config(a).train), format_tasks(TaskSets::from_config(b).train));
  b.run.seed = 6;
  EXPECT_NE(format_tasks(TaskSets::from_config(a).test), format_tasks(TaskSets::from_config(b).test));
}

// ---- roll-outs -------------------------------------------------------------

TEST(Rollout, LengthIsTheEpisodeCap) {
  const auto cfg = small_config(1);
  Agent agent(cfg);
  Rng env(1), pol(2);
  const auto r = collect_rollout(agent, stationary({bench::BaseTask::RunForward, 2.0}, cfg.benchmark.episode_cap),
                                 control::ActMode::Stochastic, env, &pol);
  EXPECT_EQ(r.episode.transitions.size(), 40u);
  EXPECT_EQ(r.trace.size(), 40u);
  for (std::size_t i = 0; i < r.episode.transitions.size(); ++i) {
    EXPECT_EQ(r.episode.transitions[i].step_index, static_cast<int>(i));
    EXPECT_EQ(r.episode.transitions[i].label, 0);
  }
}

TEST(Rollout, FirstStepSeesAnEmptyContext) {
  const auto cfg = small_config(1);
  Agent agent(cfg);
  std::vector<Matrix> seen;
  ActFn record = [&](const Matrix& s, const Matrix& z, const std::vector<const bench::Environment*>&) {
    seen.push_back(z);
    return Matrix::Zero(s.rows(), 3).eval();
  };
  Rng env(1);
  collect_rollouts(agent, {{stationary({bench::BaseTask::RunForward, 2.0}, 3), 0}}, record, env);
  ASSERT_EQ(seen.size(), 3u);

  memory::ContextBatch empty;
  empty.steps.assign(8, Matrix::Zero(1, cfg.encoder.row_dim()));
  empty.masks.assign(8, Matrix::Zero(1, 1));
  empty.labels = {0};
  const Matrix z0 = agent.encoder().embed(empty, taskinfer::ZMode::Mean);
  EXPECT_TRUE(seen[0].isApprox(z0, 0.0) || seen[0] == z0);
  EXPECT_FALSE(seen[1] == seen[0]);
}

TEST(Rollout, ScheduleGivesOneEpisodeAcrossSwitches) {
  const auto cfg = small_config(1);
  Agent agent(cfg);
  bench::Schedule sched{{{bench::BaseTask::RunForward, 2.0}, 80},
                        {{bench::BaseTask::RunForward, 4.0}, 80},
                        {{bench::BaseTask::RunBackward, -3.0}, 80}};
  Rng env(1);
  const auto trace = trace_task_inference(agent, sched, env);
  ASSERT_EQ(trace.size(), 240u);
  EXPECT_EQ(trace[79].task.target, 2.0);
  EXPECT_EQ(trace[80].task.target, 4.0);
  EXPECT_EQ(trace[159].task.target, 4.0);
  EXPECT_EQ(trace[160].task.base, bench::BaseTask::RunBackward);
}

TEST(Rollout, EpisodesInLockstepMatchSeparateRuns) {
  const auto cfg = small_config(1);
  Agent agent(cfg);
  const RolloutRequest a{stationary({bench::BaseTask::RunForward, 2.0}, 20), 0};
  const RolloutRequest b{stationary({bench::BaseTask::GoalFront, 5.0}, 30), 1};
  Rng r1(9), r2(9);
  const auto both = collect_rollouts(agent, {a, b}, control::ActMode::Deterministic, r1, nullptr);
  const auto first = collect_rollouts(agent, {a}, control::ActMode::Deterministic, r2, nullptr);
  const auto second = collect_rollouts(agent, {b}, control::ActMode::Deterministic, r2, nullptr);
  ASSERT_EQ(both[1].episode.transitions.size(), 30u);
  for (int i = 0; i < 20; ++i)
    EXPECT_NEAR(both[0].trace[i].value, first[0].trace[i].value, 1e-9);
  for (int i = 0; i < 30; ++i)
    EXPECT_NEAR(both[1].trace[i].value, second[0].trace[i].value, 1e-9);
}

// ---- meta-testing ----------------------------------------------------------

TEST(MetaTest, OracleScoresNearZeroAndRandomPolicyBelow) {
  auto cfg = small_config(1);
  cfg.benchmark.episode_cap = 200;
  Agent agent(cfg);
  const std::vector<bench::TaskSpec> tasks{{bench::BaseTask::RunForward, 2.0},
                                           {bench::BaseTask::RunForward, 3.5},
                                           {bench::BaseTask::RunBackward, -1.0}};
  const ActFn oracle = velocity_oracle(cfg.benchmark);
  Rng env(4);
  const auto best = meta_test(agent, tasks, env, &oracle);
  ASSERT_EQ(best.returns.size(), 3u);
  // Deadbeat control leaves at most a few steps of transient out of 200.
  for (double r : best.returns) EXPECT_GT(r, -3.0);

  ActFn uniform_random = [rng = Rng(8)](const Matrix& s, const Matrix&,
                                        const std::vector<const bench::Environment*>&) mutable {
    Matrix a(s.rows(), 3);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = uniform(rng, -1.0, 1.0);
    return a;
  };
  Rng env2(4);
  const auto rand = meta_test(agent, tasks, env2, &uniform_random);
  EXPECT_LT(rand.mean_return, 0.0);
  EXPECT_LT(rand.mean_return, best.mean_return);
}

TEST(MetaTest, OneReturnPerTaskAndNoUpdates) {
  const auto cfg = small_config(1);
  Agent agent(cfg);
  const ParameterSet theta = agent.encoder().params(), psi = agent.sac().actor();
  Rng rng(1);
  const auto tasks = TaskSets::from_config(cfg).test;
  const auto res = meta_test(agent, tasks, rng);
  EXPECT_EQ(res.returns.size(), tasks.size());
  double sum = 0.0;
  for (double r : res.returns) {
    EXPECT_LE(r, 0.0);
    sum += r;
  }
  EXPECT_DOUBLE_EQ(res.mean_return, sum / static_cast<double>(tasks.size()));
  EXPECT_TRUE(agent.encoder().params().identical(theta));
  EXPECT_TRUE(agent.sac().actor().identical(psi));
  Rng again(1);
  EXPECT_THROW(meta_test(agent, {}, again), ConfigError);
}

// ---- training --------------------------------------------------------------

TEST(Trainer, TwentyEpochSmokeRunWritesTwentyRows) {
  const auto out = temp_dir("smoke");
  Trainer t(small_config(20), out);
  t.run();
  EXPECT_EQ(t.metrics().size(), 20u);
  const std::string csv = slurp(out / "metrics.csv");
  std::istringstream lines(csv);
  std::string header, line;
  std::getline(lines, header);
  EXPECT_EQ(header,
            "epoch,env_steps,meta_test_return,return_RunForward,return_RunBackward,return_GoalFront,"
            "return_FrontStand,train_loss,val_prediction,val_kl,val_euclid,val_classification,val_total,"
            "val_accuracy");
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  EXPECT_EQ(rows, 20);
  EXPECT_TRUE(fs::exists(out / "checkpoint.bin"));
  EXPECT_TRUE(fs::exists(out / "buffer.bin"));
  EXPECT_TRUE(fs::exists(out / "timing.csv"));
  EXPECT_EQ(ExperimentConfig::from_file(out / "config.cfg").to_text(), small_config(20).to_text());
  // initial 40 + 40 per epoch from each of 8 tasks
  EXPECT_EQ(t.env_steps(), 8LL * 40 * 21);
}

TEST(Trainer, SameSeedGivesIdenticalFiles) {
  const auto a = temp_dir("det_a"), b = temp_dir("det_b");
  Trainer(small_config(3), a).run();
  Trainer(small_config(3), b).run();
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  EXPECT_EQ(slurp(a / "checkpoint.bin"), slurp(b / "checkpoint.bin"));
  EXPECT_EQ(slurp(a / "buffer.bin"), slurp(b / "buffer.bin"));

  const auto c = temp_dir("det_c");
  auto other = small_config(3);
  other.run.seed = 6;
  Trainer(other, c).run();
  EXPECT_NE(slurp(a / "metrics.csv"), slurp(c / "metrics.csv"));
}

TEST(Trainer, PhasesRunInOrder) {
  Trainer t(small_config(2), "");
  std::vector<std::pair<int, Phase>> seen;
  t.on_phase = [&](int e, Phase p) { seen.emplace_back(e, p); };
  t.run();
  const std::vector<std::pair<int, Phase>> want{{0, Phase::Collection}, {0, Phase::Inference}, {0, Phase::Policy},
                                                {1, Phase::Evaluation}, {1, Phase::Collection}, {1, Phase::Inference},
                                                {1, Phase::Policy},     {2, Phase::Evaluation}};
  EXPECT_EQ(seen, want);
  EXPECT_THROW(t.run_epoch(), ConfigError);
}

TEST(Trainer, ZeroPolicyStepsChangeOnlyInferenceParameters) {
  Trainer t(small_config(1, 0), "");
  const ParameterSet theta = t.agent().inference().encoder().params();
  const ParameterSet phi = t.agent().inference().decoder().params();
  const ParameterSet psi = t.agent().sac().actor(), omega = t.agent().sac().critics();
  const ParameterSet targets = t.agent().sac().target_critics(), alpha = t.agent().sac().temperature_params();
  t.run_epoch();
  EXPECT_FALSE(t.agent().inference().encoder().params().identical(theta));
  EXPECT_FALSE(t.agent().inference().decoder().params().identical(phi));
  EXPECT_TRUE(t.agent().sac().actor().identical(psi));
  EXPECT_TRUE(t.agent().sac().critics().identical(omega));
  EXPECT_TRUE(t.agent().sac().target_critics().identical(targets));
  EXPECT_TRUE(t.agent().sac().temperature_params().identical(alpha));
}

TEST(Trainer, CheckpointRestoresTheAgent) {
  const auto out = temp_dir("ckpt");
  Trainer t(small_config(2), out);
  t.run();
  const auto loaded = load_agent(out / "checkpoint.bin");
  EXPECT_EQ(loaded.epoch, 2);
  EXPECT_EQ(format_tasks(loaded.tasks.test), format_tasks(t.tasks().test));
  EXPECT_TRUE(loaded.agent->encoder().params().identical(t.agent().encoder().params()));
  EXPECT_TRUE(loaded.agent->sac().critics().identical(t.agent().sac().critics()));
  Rng a(3), b(3);
  EXPECT_EQ(meta_test(*loaded.agent, t.tasks().test, a).returns, meta_test(t.agent(), t.tasks().test, b).returns);
}

TEST(Trainer, UnwritableOutputIsAStartupError) {
  const auto dir = temp_dir("blocker");
  fs::create_directories(dir);
  std::ofstream(dir / "file") << "x";
  EXPECT_THROW(Trainer(small_config(1), dir / "file" / "out"), ConfigError);
}

TEST(Trainer, CutScheduleCollectsOnlyTheCurrentBase) {
  Trainer t(small_config(4, 4, "cut"), "");
  std::size_t seen_episodes = 0;
  for (int epoch = 0; epoch < 4; ++epoch) {
    t.run_epoch();
    const auto& buf = t.buffer();
    for (std::size_t e = seen_episodes; e < buf.episodes(); ++e)
      EXPECT_EQ(buf.transition(e, 0).label, epoch) << "epoch " << epoch;
    seen_episodes = buf.episodes();
  }
  // Retired bases stay in memory and keep being replayed.
  Rng rng(2);
  const auto batch = t.buffer().sample_rl_batch(512, 8, rng);
  std::set<int> labels(batch.context.labels.begin(), batch.context.labels.end());
  EXPECT_EQ(labels.size(), 4u);
}

TEST(Trainer, NonstationaryCollectionSwitchesTasksMidEpisode) {
  auto cfg = small_config(1);
  cfg.run.nonstationary_fraction = 1.0;
  cfg.run.nonstationary_segment = 10;
  Trainer t(cfg, "");
  t.run_epoch();
  bool switched = false;
  for (std::size_t e = 0; e < t.buffer().episodes(); ++e)
    for (std::size_t k = 1; k < t.buffer().episode_length(e); ++k)
      switched = switched || t.buffer().task_at(e, static_cast<int>(k)).target !=
                                 t.buffer().task_at(e, static_cast<int>(k - 1)).target;
  EXPECT_TRUE(switched);
}

// ---- traces ----------------------------------------------------------------

TEST(Trace, StationaryTargetColumnIsConstant) {
  const auto cfg = small_config(1);
  Agent agent(cfg);
  Rng env(2);
  const auto rows = trace_task_inference(agent, stationary({bench::BaseTask::RunForward, 3.0}, 50), env);
  std::ostringstream os;
  write_trace_csv(os, rows);
  const auto table = parse_csv(os.str());
  ASSERT_EQ(table.rows.size(), 50u);
  const int target = table.column("target");
  for (const auto& r : table.rows) EXPECT_EQ(r[static_cast<std::size_t>(target)], 3.0);
}

TEST(Trace, OracleConvergesOnEverySegment) {
  auto cfg = small_config(1);
  Agent agent(cfg);
  const bench::Schedule sched{{{bench::BaseTask::RunForward, 2.0}, 80},
                              {{bench::BaseTask::RunForward, 4.0}, 80},
                              {{bench::BaseTask::RunBackward, -3.0}, 80}};
  Rng env(1);
  const auto ro = collect_rollouts(agent, {{sched, 0}}, velocity_oracle(cfg.benchmark), env);
  for (const auto& s : score_tracking(ro[0].trace, sched, 40, 0.25)) {
    EXPECT_TRUE(s.pass);
    EXPECT_LT(s.max_relative_error, 1e-9);
  }
}

TEST(Trace, ScoringUsesTheLastWindowOfEachSegment) {
  const bench::Schedule sched{{{bench::BaseTask::RunForward, 2.0}, 4}, {{bench::BaseTask::RunForward, 4.0}, 4}};
  std::vector<TraceRow> rows;
  const double values[] = {0, 0, 2.1, 2.0, 9, 9, 4.0, 5.5};
  for (int i = 0; i < 8; ++i) rows.push_back({i, sched[static_cast<std::size_t>(i / 4)].task, values[i], 0.0});
  const auto s = score_tracking(rows, sched, 2, 0.25);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_TRUE(s[0].pass);
  EXPECT_NEAR(s[0].max_relative_error, 0.05, 1e-12);
  EXPECT_FALSE(s[1].pass);
  EXPECT_NEAR(s[1].max_relative_error, 0.375, 1e-12);
  rows.pop_back();
  EXPECT_THROW(score_tracking(rows, sched, 2, 0.25), ConfigError);
}

TEST(Schedule, ParsesLinesAndComments) {
  const auto s = parse_schedule("# fig 8 style\nRunForward 2 80\n\nRunBackward -0.5 40  # back\n");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[1].task.base, bench::BaseTask::RunBackward);
  EXPECT_EQ(s[1].task.target, -0.5);
  EXPECT_EQ(s[1].duration, 40);
  try {
    parse_schedule("RunForward 2 80\nRunForward two 80\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parse_schedule("Fly 1 2\n"), ParseError);
  EXPECT_THROW(parse_schedule("RunForward 1 0\n"), ParseError);
  EXPECT_THROW(parse_schedule("RunForward 1 5 extra\n"), ParseError);
  EXPECT_THROW(parse_schedule("# nothing\n"), ConfigError);
  EXPECT_NO_THROW(read_schedule(fs::path(MIXINFER_SOURCE_DIR) / "configs" / "schedules" / "tracking.txt"));
}

// ---- latent export ---------------------------------------------------------

TEST(Latent, ZeroRequestWritesOnlyTheHeader) {
  const auto cfg = small_config(1);
  Trainer t(cfg, "");
  t.run_epoch();
  const auto e = export_latent(t.agent(), t.buffer(), 0);
  std::ostringstream os;
  write_latent_jsonl(os, e, cfg.encoder.latent_dim);
  std::istringstream in(os.str());
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 1u);
  const auto head = nlohmann::json::parse(lines[0]);
  EXPECT_EQ(head["count"], 0);
  EXPECT_EQ(head["latent_dim"], 2);
  EXPECT_EQ(head["truncated"], false);
}

TEST(Latent, RowsCarryLabelsAndProjection) {
  const auto cfg = small_config(1);
  Trainer t(cfg, "");
  t.run_epoch();
  const auto e = export_latent(t.agent(), t.buffer(), 25);
  ASSERT_EQ(e.points.size(), 25u);
  EXPECT_FALSE(e.truncated);
  EXPECT_FALSE(e.pca_degenerate);
  double mean0 = 0.0;
  for (const auto& p : e.points) {
    EXPECT_EQ(p.label, cfg.benchmark.label_of(p.task.base));
    EXPECT_EQ(p.z.size(), 2);
    mean0 += p.pca[0];
  }
  EXPECT_NEAR(mean0, 0.0, 1e-9);
  EXPECT_GE(e.explained_variance[0], e.explained_variance[1]);
  EXPECT_NEAR(e.explained_variance[0] + e.explained_variance[1], 1.0, 1e-9);  // d = 2

  const auto all = export_latent(t.agent(), t.buffer(), 1u << 20);
  EXPECT_TRUE(all.truncated);
  EXPECT_EQ(all.points.size(), t.buffer().transitions(memory::Stratum::Validation));
}

TEST(Latent, IdenticalContextsAreFlaggedDegenerate) {
  const auto cfg = small_config(1);
  Agent agent(cfg);
  memory::ReplayBuffer buf({7, 3, 40, 0.5, 0, 1});
  for (int i = 0; i < 40; ++i) {
    memory::EpisodeRecord ep;
    memory::Transition tr;
    tr.s = Vector::Constant(7, 0.1);
    tr.a = Vector::Constant(3, 0.2);
    tr.r = -0.5;
    tr.s_next = Vector::Constant(7, 0.3);
    ep.transitions.push_back(tr);
    ep.tasks.push_back({bench::BaseTask::RunForward, 2.0});
    buf.append(ep);
  }
  ASSERT_GT(buf.transitions(memory::Stratum::Validation), 1u);
  const auto e = export_latent(agent, buf, 10);
  ASSERT_GT(e.points.size(), 1u);
  for (const auto& p : e.points) EXPECT_EQ(p.z, e.points.front().z);
  EXPECT_TRUE(e.pca_degenerate);
  for (const auto& p : e.points) EXPECT_EQ(p.pca[0], 0.0);
}

// ---- plots -----------------------------------------------------------------

namespace {
std::size_t count(const std::string& s, const std::string& what) {
  std::size_t n = 0;
  for (auto at = s.find(what); at != std::string::npos; at = s.find(what, at + 1)) ++n;
  return n;
}
}  // namespace

TEST(Plot, TwoRowMetricsGiveOnePolylinePerSeries) {
  const auto t = parse_csv("epoch,meta_test_return,val_prediction,val_accuracy\n1,-50,0.4,0.2\n2,-20,0.2,0.6\n");
  const auto svg = render_svg(t);
  EXPECT_EQ(count(svg, "<polyline"), 3u);
  EXPECT_EQ(count(svg, "stroke-dasharray"), 0u);
  EXPECT_NE(svg.find("returns"), std::string::npos);
  EXPECT_NE(svg.find("losses"), std::string::npos);
}

TEST(Plot, TraceGetsDashedTarget) {
  const auto t = parse_csv("step,base,value,target,reward\n0,RunForward,0.1,2,-1\n1,RunForward,1.5,2,-0.2\n");
  EXPECT_TRUE(t.text[1]);
  const auto svg = render_svg(t);
  EXPECT_EQ(count(svg, "<polyline"), 2u);
  // one dashed polyline plus its legend swatch
  EXPECT_EQ(count(svg, "stroke-dasharray"), 2u);
}

TEST(Plot, IdenticalInputGivesIdenticalBytes) {
  const std::string csv = "epoch,a_loss,b\n1,0.5,nan\n2,0.25,3\n3,0.125,4\n";
  EXPECT_EQ(render_svg(parse_csv(csv)), render_svg(parse_csv(csv)));
  // the NaN cell is skipped, not drawn
  const auto svg = render_svg(parse_csv(csv));
  EXPECT_EQ(svg.find("nan"), std::string::npos);
}

TEST(Plot, MalformedRowReportsItsLine) {
  try {
    parse_csv("epoch,x\n1,2\n3\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  EXPECT_THROW(parse_csv(""), ParseError);
  EXPECT_THROW(render_svg(parse_csv("epoch\n1\n")), ConfigError);
}

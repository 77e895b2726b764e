#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mixinfer/orchestrator.hpp"

using namespace mixinfer;
using namespace mixinfer::orchestrator;

namespace {

std::vector<bench::TaskSpec> resolve_tasks(const std::string& spec, const TaskSets& sets) {
  if (spec == "test") return sets.test;
  if (spec == "train") return sets.train;
  return parse_tasks(spec);
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw ConfigError("cannot write " + p.string());
  return os;
}

int train(const fs::path& config, std::uint64_t seed, const fs::path& out, bool quiet) {
  auto cfg = ExperimentConfig::from_file(config);
  cfg.run.seed = seed;
  Trainer trainer(cfg, out);
  if (!quiet)
    trainer.on_metrics = [&](const MetricsRow& r, double wall) {
      std::fprintf(stderr, "epoch %d/%d  steps %lld  return %.2f  val_pred %.4f  acc %.3f  (%.0fs)\n", r.epoch,
                   cfg.run.epochs, r.env_steps, r.meta_test_return, r.validation.prediction, r.validation_accuracy,
                   wall);
    };
  trainer.run();
  std::printf("%s\n", (out / "checkpoint.bin").string().c_str());
  return 0;
}

int eval(const fs::path& checkpoint, const std::string& spec, std::uint64_t seed) {
  const auto loaded = load_agent(checkpoint);
  const auto tasks = resolve_tasks(spec, loaded.tasks);
  Rng rng = named_stream(seed, "meta_test");
  const auto res = meta_test(*loaded.agent, tasks, rng);
  std::printf("task,return\n");
  for (std::size_t i = 0; i < tasks.size(); ++i)
    std::printf("%s:%s,%s\n", std::string(bench::name_of(tasks[i].base)).c_str(), format_double(tasks[i].target).c_str(),
                format_metric(res.returns[i]).c_str());
  std::printf("mean,%s\n", format_metric(res.mean_return).c_str());
  return 0;
}

int trace(const fs::path& checkpoint, const fs::path& schedule_file, const std::string& out, std::uint64_t seed) {
  const auto loaded = load_agent(checkpoint);
  const auto schedule = read_schedule(schedule_file);
  Rng rng = named_stream(seed, "trace");
  const auto rows = trace_task_inference(*loaded.agent, schedule, rng);
  if (out.empty()) {
    write_trace_csv(std::cout, rows);
  } else {
    auto os = open_out(out);
    write_trace_csv(os, rows);
  }
  for (const auto& s : score_tracking(rows, schedule, std::min(40, schedule.front().duration), 0.25))
    std::fprintf(stderr, "%s %g  steps %d-%d  max |err|/|target| %.3f\n", std::string(bench::name_of(s.task.base)).c_str(),
                 s.task.target, s.first_step, s.first_step + s.length - 1, s.max_relative_error);
  return 0;
}

int latent(const fs::path& checkpoint, std::size_t n, const fs::path& buffer_file, const std::string& out) {
  const auto loaded = load_agent(checkpoint);
  const fs::path bpath = buffer_file.empty() ? checkpoint.parent_path() / "buffer.bin" : buffer_file;
  if (!fs::exists(bpath)) throw ConfigError("replay buffer " + bpath.string() + " not found; pass --buffer");
  const auto& cfg = loaded.agent->config();
  memory::ReplayBuffer buffer({cfg.benchmark.observation_dim(), cfg.benchmark.action_dim(), cfg.benchmark.episode_cap,
                               cfg.run.train_fraction, 0, cfg.run.seed});
  buffer.load(bpath);
  const auto e = export_latent(*loaded.agent, buffer, n);
  if (e.truncated)
    std::fprintf(stderr, "warning: %zu contexts requested, only %zu stored\n", e.requested, e.points.size());
  if (out.empty()) {
    write_latent_jsonl(std::cout, e, cfg.encoder.latent_dim);
  } else {
    auto os = open_out(out);
    write_latent_jsonl(os, e, cfg.encoder.latent_dim);
  }
  if (!e.points.empty()) std::fprintf(stderr, "argmax-activation accuracy %.3f\n", latent_accuracy(e));
  return 0;
}

int plot(const fs::path& in, const fs::path& out) {
  std::ifstream is(in);
  if (!is) throw ConfigError("cannot read " + in.string());
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string svg = render_svg(parse_csv(ss.str()));
  open_out(out) << svg;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Task-inference meta-RL on an analytic planar benchmark"};
  app.require_subcommand(1);

  std::string config, out, checkpoint, tasks = "test", schedule, in, buffer;
  std::uint64_t seed = 0;
  std::size_t n = 0;
  bool quiet = false;

  auto* tr = app.add_subcommand("train", "Meta-train an agent");
  tr->add_option("--config", config, "Configuration file")->required()->check(CLI::ExistingFile);
  tr->add_option("--seed", seed, "Root seed")->required();
  tr->add_option("--out", out, "Output directory")->required();
  tr->add_flag("--quiet", quiet, "No progress lines");

  auto* ev = app.add_subcommand("eval", "Zero-shot meta-test of a checkpoint");
  ev->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  ev->add_option("--tasks", tasks, "'test', 'train' or Base:target,...")->capture_default_str();
  ev->add_option("--seed", seed, "Seed of the reset jitter")->capture_default_str();

  auto* tc = app.add_subcommand("trace", "Track targets over a task schedule without resets");
  tc->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  tc->add_option("--schedule", schedule, "Lines of 'Base target steps'")->required()->check(CLI::ExistingFile);
  tc->add_option("--out", out, "CSV file (default stdout)");
  tc->add_option("--seed", seed, "Seed of the reset jitter")->capture_default_str();

  auto* la = app.add_subcommand("latent", "Dump embeddings of validation contexts as JSONL");
  la->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  la->add_option("--n", n, "Number of contexts")->required();
  la->add_option("--buffer", buffer, "Replay buffer (default: buffer.bin beside the checkpoint)");
  la->add_option("--out", out, "JSONL file (default stdout)");

  auto* pl = app.add_subcommand("plot", "Render a metrics or trace CSV as SVG");
  pl->add_option("--in", in)->required()->check(CLI::ExistingFile);
  pl->add_option("--out", out)->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*tr) return train(config, seed, out, quiet);
    if (*ev) return eval(checkpoint, tasks, seed);
    if (*tc) return trace(checkpoint, schedule, out, seed);
    if (*la) return latent(checkpoint, n, buffer, out);
    if (*pl) return plot(in, out);
  } catch (const NumericFault& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

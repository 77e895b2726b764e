#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "mixinfer/orchestrator/trainer.hpp"

namespace mixinfer::orchestrator {

// ---- schedules -------------------------------------------------------------

/// One "Base target duration" entry per line; '#' starts a comment.
inline bench::Schedule parse_schedule(const std::string& text) {
  bench::Schedule out;
  std::istringstream in(text);
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string base;
    if (!(ls >> base)) continue;
    double target = 0.0;
    int duration = 0;
    std::string extra;
    if (!(ls >> target >> duration) || (ls >> extra)) throw ParseError(n, "expected 'Base target duration'");
    if (duration < 1) throw ParseError(n, "duration must be >= 1");
    try {
      out.push_back({{bench::parse_base_task(base), target}, duration});
    } catch (const ConfigError& e) {
      throw ParseError(n, e.what());
    }
  }
  if (out.empty()) throw ConfigError("schedule is empty");
  return out;
}

inline bench::Schedule read_schedule(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read schedule " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_schedule(ss.str());
}

// ---- task-inference traces -------------------------------------------------

/// Deterministic zero-shot roll-out over a schedule without resets.
inline std::vector<TraceRow> trace_task_inference(const Agent& agent, const bench::Schedule& schedule, Rng& env_rng) {
  return collect_rollout(agent, schedule, control::ActMode::Deterministic, env_rng, nullptr).trace;
}

inline void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace) {
  os << "step,base,value,target,reward\n";
  for (const auto& r : trace)
    os << r.step << ',' << bench::name_of(r.task.base) << ',' << format_metric(r.value) << ','
       << format_metric(r.task.target) << ',' << format_metric(r.reward) << '\n';
}

struct SegmentTracking {
  bench::TaskSpec task;
  int first_step = 0, length = 0;
  double max_relative_error = 0.0;  ///< over the scored window
  bool pass = false;
};

/// Scores the last `window` steps of every schedule segment: each step must
/// satisfy |value - target| < tolerance * |target|.
inline std::vector<SegmentTracking> score_tracking(const std::vector<TraceRow>& trace, const bench::Schedule& schedule,
                                                   int window, double tolerance) {
  if (static_cast<int>(trace.size()) != bench::schedule_length(schedule))
    throw ConfigError("trace length does not match its schedule");
  std::vector<SegmentTracking> out;
  int at = 0;
  for (const auto& e : schedule) {
    SegmentTracking s;
    s.task = e.task;
    s.first_step = at;
    s.length = e.duration;
    const double scale = std::abs(e.task.target);
    for (int k = std::max(at, at + e.duration - window); k < at + e.duration; ++k) {
      const double err = std::abs(trace[static_cast<std::size_t>(k)].value - e.task.target);
      s.max_relative_error = std::max(s.max_relative_error, scale > 0.0 ? err / scale : err);
    }
    s.pass = s.max_relative_error < tolerance;
    out.push_back(s);
    at += e.duration;
  }
  return out;
}

// ---- latent export ---------------------------------------------------------

struct LatentPoint {
  Vector z;
  int label = 0;
  bench::TaskSpec task;
  int argmax_rho = 0;
  double pca[2] = {0.0, 0.0};
};

struct LatentExport {
  std::vector<LatentPoint> points;
  std::size_t requested = 0;
  bool truncated = false;       ///< fewer validation contexts than requested
  bool pca_degenerate = false;  ///< all embeddings (nearly) identical
  double explained_variance[2] = {0.0, 0.0};
};

/// Projects rows of `z` onto their top two principal axes. Axis signs are
/// fixed so the largest-magnitude loading is positive.
inline Matrix pca_project(const Matrix& z, double explained[2], bool& degenerate) {
  const Eigen::Index n = z.rows(), d = z.cols();
  Matrix out = Matrix::Zero(n, 2);
  explained[0] = explained[1] = 0.0;
  degenerate = true;
  if (n == 0) return out;
  const Matrix centered = z.rowwise() - z.colwise().mean();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(std::max<Eigen::Index>(n - 1, 1));
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  const Vector ev = es.eigenvalues();
  const double total = ev.sum();
  if (!(ev(d - 1) > 1e-12)) return out;
  degenerate = false;
  for (int k = 0; k < 2 && k < d; ++k) {
    Vector axis = es.eigenvectors().col(d - 1 - k);
    Eigen::Index big = 0;
    axis.cwiseAbs().maxCoeff(&big);
    if (axis(big) < 0) axis = -axis;
    out.col(k) = centered * axis;
    explained[k] = std::max(0.0, ev(d - 1 - k)) / total;
  }
  return out;
}

/// Mean-mode embeddings of up to `n` validation contexts, evenly spaced
/// through the validation stratum, with a 2-D PCA projection.
inline LatentExport export_latent(const Agent& agent, const memory::ReplayBuffer& buffer, std::size_t n) {
  LatentExport out;
  out.requested = n;
  const auto all = buffer.anchors(memory::Stratum::Validation);
  const std::size_t count = std::min(n, all.size());
  out.truncated = count < n;
  if (count == 0) {
    out.pca_degenerate = true;
    return out;
  }
  std::vector<std::pair<std::size_t, int>> picked;
  for (std::size_t i = 0; i < count; ++i) picked.push_back(all[i * all.size() / count]);
  const auto batch = buffer.batch_at(picked, agent.config().encoder.context);
  const Matrix z = agent.encoder().embed(batch, taskinfer::ZMode::Mean);
  const auto stats = agent.encoder().stats(batch);
  const Matrix proj = pca_project(z, out.explained_variance, out.pca_degenerate);
  for (std::size_t i = 0; i < count; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    LatentPoint p;
    p.z = z.row(row).transpose();
    p.label = batch.labels[i];
    p.task = buffer.task_at(picked[i].first, picked[i].second);
    Eigen::Index arg = 0;
    stats[i].rho.maxCoeff(&arg);
    p.argmax_rho = static_cast<int>(arg);
    p.pca[0] = proj(row, 0);
    p.pca[1] = proj(row, 1);
    out.points.push_back(std::move(p));
  }
  return out;
}

/// JSONL: a header object, then one object per embedded context.
inline void write_latent_jsonl(std::ostream& os, const LatentExport& e, int latent_dim) {
  nlohmann::json head = {{"count", e.points.size()},
                         {"latent_dim", latent_dim},
                         {"requested", e.requested},
                         {"truncated", e.truncated},
                         {"pca_degenerate", e.pca_degenerate},
                         {"explained_variance", {e.explained_variance[0], e.explained_variance[1]}}};
  os << head.dump() << '\n';
  for (const auto& p : e.points) {
    nlohmann::json row = {{"z", std::vector<double>(p.z.data(), p.z.data() + p.z.size())},
                          {"label", p.label},
                          {"base", bench::name_of(p.task.base)},
                          {"target", p.task.target},
                          {"argmax_rho", p.argmax_rho},
                          {"pca", {p.pca[0], p.pca[1]}}};
    os << row.dump() << '\n';
  }
}

/// Share of points whose argmax activation equals the base label.
inline double latent_accuracy(const LatentExport& e) {
  if (e.points.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t hit = 0;
  for (const auto& p : e.points) hit += p.argmax_rho == p.label;
  return static_cast<double>(hit) / static_cast<double>(e.points.size());
}

}  // namespace mixinfer::orchestrator

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mixinfer/bench/task.hpp"
#include "mixinfer/diffcore/checkpoint.hpp"
#include "mixinfer/diffcore/parameters.hpp"

namespace mixinfer::memory {

/// One environment step with its task annotations.
struct Transition {
  Vector s, a;
  double r = 0.0;
  Vector s_next;
  int label = 0;    ///< base label y in [0, K)
  int task_id = 0;
  int step_index = 0;
};

/// A roll-out in step order. `tasks[i]` is the task active at step i.
struct EpisodeRecord {
  std::vector<Transition> transitions;
  std::vector<bench::TaskSpec> tasks;
};

enum class Stratum : std::uint8_t { Train = 0, Validation = 1 };

/// The T transitions ending at (and including) an anchor, flattened as
/// rows of [s, a, r, s']. Rows before the episode start are zero with mask 0.
struct ContextWindow {
  Matrix rows;                     ///< T x row_dim
  std::vector<std::uint8_t> mask;  ///< 1 = real transition
  int label = 0;

  int valid_rows() const { return static_cast<int>(std::count(mask.begin(), mask.end(), 1)); }
};

/// Time-major batch of context windows as consumed by the encoder.
struct ContextBatch {
  std::vector<Matrix> steps;  ///< T entries of (B x row_dim)
  std::vector<Matrix> masks;  ///< T entries of (B x 1)
  std::vector<int> labels;    ///< anchor base labels
  std::vector<bench::TaskSpec> tasks;  ///< anchor tasks

  std::size_t size() const { return labels.size(); }
  std::size_t window() const { return steps.size(); }

  /// Anchor transitions (the last row of every window) as (s, a, r, s').
  Matrix anchor_rows() const { return steps.empty() ? Matrix() : steps.back(); }

  static ContextBatch from_windows(const std::vector<ContextWindow>& windows) {
    ContextBatch b;
    if (windows.empty()) return b;
    const Eigen::Index T = windows.front().rows.rows();
    const Eigen::Index D = windows.front().rows.cols();
    const Eigen::Index B = static_cast<Eigen::Index>(windows.size());
    b.steps.assign(static_cast<std::size_t>(T), Matrix(B, D));
    b.masks.assign(static_cast<std::size_t>(T), Matrix(B, 1));
    for (Eigen::Index i = 0; i < B; ++i) {
      const auto& w = windows[static_cast<std::size_t>(i)];
      if (w.rows.rows() != T || w.rows.cols() != D) throw ConfigError("context windows differ in shape");
      for (Eigen::Index t = 0; t < T; ++t) {
        b.steps[static_cast<std::size_t>(t)].row(i) = w.rows.row(t);
        b.masks[static_cast<std::size_t>(t)](i, 0) = w.mask[static_cast<std::size_t>(t)];
      }
      b.labels.push_back(w.label);
    }
    return b;
  }
};

/// RL batch: sampled transitions and the context ending at each of them.
struct RlBatch {
  Matrix s, a, r, s_next;  ///< r is (B x 1)
  ContextBatch context;
  std::vector<int> task_ids;

  std::size_t size() const { return static_cast<std::size_t>(s.rows()); }
};

struct BufferConfig {
  int obs_dim = 7;
  int action_dim = 3;
  int episode_cap = 200;
  double train_fraction = 0.8;
  std::size_t capacity = 0;  ///< max stored transitions, 0 = unbounded; oldest episodes evicted
  std::uint64_t seed = 0;
};

/// Multi-task episodic replay memory.
///
/// Episodes are assigned to the train or validation stratum on arrival with
/// probability `train_fraction`. Encoder training draws contexts from a
/// single stratum; RL batches draw from all transitions. Windows never cross
/// episode boundaries.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(BufferConfig cfg) : cfg_(cfg), split_rng_(named_stream(cfg.seed, "buffer.split")) {
    if (cfg_.obs_dim < 1 || cfg_.action_dim < 1) throw ConfigError("buffer: dimensions must be positive");
    if (!(cfg_.train_fraction >= 0.0 && cfg_.train_fraction <= 1.0))
      throw ConfigError("buffer: train fraction must lie in [0, 1]");
  }

  int row_dim() const { return 2 * cfg_.obs_dim + cfg_.action_dim + 1; }
  const BufferConfig& config() const { return cfg_; }

  void append(const EpisodeRecord& ep) {
    const auto n = ep.transitions.size();
    if (n == 0) throw ConfigError("buffer: refusing to store an empty episode");
    if (n > static_cast<std::size_t>(cfg_.episode_cap))
      throw ConfigError("buffer: episode of length " + std::to_string(n) + " exceeds cap " +
                        std::to_string(cfg_.episode_cap));
    if (ep.tasks.size() != n) throw ConfigError("buffer: per-step task annotations missing");
    Stored st;
    st.rows.resize(static_cast<Eigen::Index>(n), row_dim());
    st.labels.resize(n);
    st.task_ids.resize(n);
    st.tasks = ep.tasks;
    for (std::size_t i = 0; i < n; ++i) {
      const Transition& t = ep.transitions[i];
      if (t.step_index != static_cast<int>(i)) throw ConfigError("buffer: step indices must be contiguous from 0");
      if (t.s.size() != cfg_.obs_dim || t.s_next.size() != cfg_.obs_dim || t.a.size() != cfg_.action_dim)
        throw ConfigError("buffer: transition dimension mismatch");
      if (t.label < 0) throw ConfigError("buffer: negative base label");
      if (!t.s.allFinite() || !t.a.allFinite() || !t.s_next.allFinite() || !std::isfinite(t.r))
        throw NumericFault("buffer append");
      st.rows.row(static_cast<Eigen::Index>(i)) << t.s.transpose(), t.a.transpose(), t.r, t.s_next.transpose();
      st.labels[i] = t.label;
      st.task_ids[i] = t.task_id;
    }
    st.stratum = std::bernoulli_distribution(cfg_.train_fraction)(split_rng_) ? Stratum::Train : Stratum::Validation;
    insert(std::move(st));
  }

  std::size_t episodes() const { return episodes_.size(); }
  std::size_t transitions() const { return all_.size(); }
  std::size_t transitions(Stratum s) const { return index(s).size(); }
  std::size_t episodes(Stratum s) const {
    return static_cast<std::size_t>(
        std::count_if(episodes_.begin(), episodes_.end(), [s](const Stored& e) { return e.stratum == s; }));
  }
  Stratum stratum_of(std::size_t episode) const { return episodes_.at(episode).stratum; }
  std::size_t episode_length(std::size_t episode) const {
    return static_cast<std::size_t>(episodes_.at(episode).rows.rows());
  }

  Transition transition(std::size_t episode, int step) const {
    const Stored& e = episodes_.at(episode);
    const Eigen::Index o = cfg_.obs_dim, a = cfg_.action_dim;
    const auto row = e.rows.row(step);
    Transition t;
    t.s = row.segment(0, o).transpose();
    t.a = row.segment(o, a).transpose();
    t.r = row(o + a);
    t.s_next = row.segment(o + a + 1, o).transpose();
    t.label = e.labels[static_cast<std::size_t>(step)];
    t.task_id = e.task_ids[static_cast<std::size_t>(step)];
    t.step_index = step;
    return t;
  }

  const bench::TaskSpec& task_at(std::size_t episode, int step) const {
    return episodes_.at(episode).tasks.at(static_cast<std::size_t>(step));
  }

  /// Window of length T ending at `step` of `episode`.
  ContextWindow context_at(std::size_t episode, int step, int T) const {
    if (T < 1) throw ConfigError("context length must be >= 1");
    const Stored& e = episodes_.at(episode);
    ContextWindow w;
    w.rows = Matrix::Zero(T, row_dim());
    w.mask.assign(static_cast<std::size_t>(T), 0);
    const int first = std::max(0, step - T + 1);
    const int valid = step - first + 1;
    w.rows.bottomRows(valid) = e.rows.middleRows(first, valid);
    std::fill(w.mask.end() - valid, w.mask.end(), 1);
    w.label = e.labels[static_cast<std::size_t>(step)];
    return w;
  }

  ContextBatch sample_context_batch(std::size_t n, int T, Stratum stratum, Rng& rng) const {
    const auto& idx = index(stratum);
    if (idx.empty())
      throw EmptyError(std::string("no transitions in the ") +
                       (stratum == Stratum::Train ? "train" : "validation") + " stratum; collect roll-outs first");
    std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
    std::vector<Ref> anchors(n);
    for (auto& a : anchors) a = idx[pick(rng)];
    return gather(anchors, T);
  }

  /// Transitions drawn uniformly from both strata, each with the T
  /// transitions that preceded it (empty at step 0).
  RlBatch sample_rl_batch(std::size_t n, int T, Rng& rng) const {
    if (all_.empty()) throw EmptyError("replay buffer is empty; collect roll-outs first");
    if (n == 0) throw ConfigError("rl batch size must be >= 1");
    std::uniform_int_distribution<std::size_t> pick(0, all_.size() - 1);
    std::vector<Ref> anchors(n);
    for (auto& a : anchors) a = all_[pick(rng)];
    RlBatch b;
    b.context = gather(anchors, T, false);
    const Eigen::Index o = cfg_.obs_dim, ad = cfg_.action_dim;
    Matrix rows(static_cast<Eigen::Index>(n), row_dim());
    for (std::size_t i = 0; i < n; ++i) {
      const Stored& e = episodes_[anchors[i].episode];
      rows.row(static_cast<Eigen::Index>(i)) = e.rows.row(anchors[i].step);
      b.task_ids.push_back(e.task_ids[static_cast<std::size_t>(anchors[i].step)]);
    }
    b.s = rows.leftCols(o);
    b.a = rows.middleCols(o, ad);
    b.r = rows.middleCols(o + ad, 1);
    b.s_next = rows.middleCols(o + ad + 1, o);
    return b;
  }

  /// Every stored window of a stratum in storage order (used for evaluation).
  std::vector<std::pair<std::size_t, int>> anchors(Stratum s) const {
    std::vector<std::pair<std::size_t, int>> out;
    for (const auto& r : index(s)) out.emplace_back(r.episode, r.step);
    return out;
  }

  ContextBatch batch_at(const std::vector<std::pair<std::size_t, int>>& anchors, int T) const {
    std::vector<Ref> refs;
    for (auto [e, s] : anchors) refs.push_back({e, s});
    return gather(refs, T);
  }

  // Snapshot file: "MIXBUF\0\0", u32 version, i32 obs_dim, i32 action_dim, u64 episode count,
  // then per episode: u8 stratum, u64 length, rows (f64, row-major), and per step
  // i32 base, f64 target, i32 label, i32 task_id.
  void save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("cannot write buffer snapshot " + path.string());
    detail::Writer w(os);
    os.write("MIXBUF\0\0", 8);
    w.pod<std::uint32_t>(1);
    w.pod<std::int32_t>(cfg_.obs_dim);
    w.pod<std::int32_t>(cfg_.action_dim);
    w.pod<std::uint64_t>(episodes_.size());
    for (const Stored& e : episodes_) {
      w.pod<std::uint8_t>(static_cast<std::uint8_t>(e.stratum));
      w.pod<std::uint64_t>(static_cast<std::uint64_t>(e.rows.rows()));
      for (Eigen::Index r = 0; r < e.rows.rows(); ++r)
        for (Eigen::Index c = 0; c < e.rows.cols(); ++c) w.pod<double>(e.rows(r, c));
      for (std::size_t i = 0; i < e.labels.size(); ++i) {
        w.pod<std::int32_t>(static_cast<std::int32_t>(e.tasks[i].base));
        w.pod<double>(e.tasks[i].target);
        w.pod<std::int32_t>(e.labels[i]);
        w.pod<std::int32_t>(e.task_ids[i]);
      }
    }
    if (!os) throw ConfigError("failed writing buffer snapshot");
  }

  void load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open buffer snapshot " + path.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, "MIXBUF\0\0", 8) != 0) throw ConfigError("not a buffer snapshot");
    detail::Reader r(is);
    if (r.pod<std::uint32_t>() != 1) throw ConfigError("unsupported buffer snapshot version");
    if (r.pod<std::int32_t>() != cfg_.obs_dim || r.pod<std::int32_t>() != cfg_.action_dim)
      throw ConfigError("buffer snapshot dimensions differ from configuration");
    episodes_.clear();
    const auto count = r.pod<std::uint64_t>();
    for (std::uint64_t k = 0; k < count; ++k) {
      Stored e;
      e.stratum = static_cast<Stratum>(r.pod<std::uint8_t>());
      const auto len = r.pod<std::uint64_t>();
      if (len == 0 || len > (1u << 20)) throw ConfigError("buffer snapshot: bad episode length");
      e.rows.resize(static_cast<Eigen::Index>(len), row_dim());
      for (Eigen::Index i = 0; i < e.rows.rows(); ++i)
        for (Eigen::Index c = 0; c < e.rows.cols(); ++c) e.rows(i, c) = r.pod<double>();
      for (std::uint64_t i = 0; i < len; ++i) {
        const auto base = r.pod<std::int32_t>();
        if (base < 0 || base >= bench::kBaseTaskCount) throw ConfigError("buffer snapshot: bad base task");
        const double target = r.pod<double>();
        e.tasks.push_back({static_cast<bench::BaseTask>(base), target});
        e.labels.push_back(r.pod<std::int32_t>());
        e.task_ids.push_back(r.pod<std::int32_t>());
      }
      episodes_.push_back(std::move(e));
    }
    rebuild();
  }

 private:
  struct Stored {
    Matrix rows;  ///< len x row_dim
    std::vector<int> labels, task_ids;
    std::vector<bench::TaskSpec> tasks;
    Stratum stratum = Stratum::Train;
  };
  struct Ref {
    std::size_t episode = 0;
    int step = 0;
  };

  const std::vector<Ref>& index(Stratum s) const { return s == Stratum::Train ? train_ : validation_; }

  void insert(Stored st) {
    const std::size_t e = episodes_.size();
    for (int i = 0; i < st.rows.rows(); ++i) {
      all_.push_back({e, i});
      (st.stratum == Stratum::Train ? train_ : validation_).push_back({e, i});
    }
    episodes_.push_back(std::move(st));
    if (cfg_.capacity > 0 && all_.size() > cfg_.capacity) {
      while (episodes_.size() > 1 && transitions_stored() > cfg_.capacity) episodes_.pop_front();
      rebuild();
    }
  }

  std::size_t transitions_stored() const {
    std::size_t n = 0;
    for (const auto& e : episodes_) n += static_cast<std::size_t>(e.rows.rows());
    return n;
  }

  void rebuild() {
    all_.clear();
    train_.clear();
    validation_.clear();
    for (std::size_t e = 0; e < episodes_.size(); ++e)
      for (int i = 0; i < episodes_[e].rows.rows(); ++i) {
        all_.push_back({e, i});
        (episodes_[e].stratum == Stratum::Train ? train_ : validation_).push_back({e, i});
      }
  }

  // Window of the T transitions ending at the anchor, or, with
  // `include_anchor` false, the T transitions before it: the context the
  // policy saw when it chose the anchor's action.
  ContextBatch gather(const std::vector<Ref>& anchors, int T, bool include_anchor = true) const {
    if (T < 1) throw ConfigError("context length must be >= 1");
    const Eigen::Index B = static_cast<Eigen::Index>(anchors.size());
    ContextBatch b;
    b.steps.assign(static_cast<std::size_t>(T), Matrix::Zero(B, row_dim()));
    b.masks.assign(static_cast<std::size_t>(T), Matrix::Zero(B, 1));
    b.labels.reserve(anchors.size());
    for (Eigen::Index i = 0; i < B; ++i) {
      const Ref& a = anchors[static_cast<std::size_t>(i)];
      const Stored& e = episodes_[a.episode];
      const int last = include_anchor ? a.step : a.step - 1;
      const int first = std::max(0, last - T + 1);
      for (int s = first; s <= last; ++s) {
        const auto t = static_cast<std::size_t>(T - 1 - (last - s));
        b.steps[t].row(i) = e.rows.row(s);
        b.masks[t](i, 0) = 1.0;
      }
      b.labels.push_back(e.labels[static_cast<std::size_t>(a.step)]);
      b.tasks.push_back(e.tasks[static_cast<std::size_t>(a.step)]);
    }
    return b;
  }

  BufferConfig cfg_;
  Rng split_rng_;
  std::deque<Stored> episodes_;
  std::vector<Ref> all_, train_, validation_;
};

}  // namespace mixinfer::memory

#pragma once

#include <span>
#include <string>
#include <vector>

#include "mixinfer/diffcore/tape.hpp"

namespace mixinfer {

/// y = x W + b, W is (in x out).
class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& ps, const std::string& name, Owner owner, Eigen::Index in, Eigen::Index out, Rng& rng)
      : in_(in), out_(out) {
    w_ = ps.add(name + ".weight", owner, fan_in_uniform(in, in, out, rng));
    b_ = ps.add(name + ".bias", owner, Matrix::Zero(1, out));
  }

  Var operator()(Bound p, Var x) const {
    if (x.cols() != in_)
      throw ConfigError("linear layer expects " + std::to_string(in_) + " inputs, got " + std::to_string(x.cols()));
    return ops::add_row(ops::matmul(x, p[w_]), p[b_]);
  }

  Eigen::Index in() const { return in_; }
  Eigen::Index out() const { return out_; }

 private:
  Eigen::Index in_ = 0, out_ = 0;
  std::size_t w_ = 0, b_ = 0;
};

/// Fully connected stack with ReLU between layers and a linear output.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterSet& ps, const std::string& name, Owner owner, const std::vector<Eigen::Index>& sizes, Rng& rng)
      : name_(name) {
    if (sizes.size() < 2) throw ConfigError("mlp needs at least input and output sizes");
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i)
      layers_.emplace_back(ps, name + ".l" + std::to_string(i), owner, sizes[i], sizes[i + 1], rng);
  }

  Var operator()(Bound p, Var x) const {
    Tape::Scope scope(*x.tape, name_);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      x = layers_[i](p, x);
      if (i + 1 < layers_.size()) x = ops::relu(x);
    }
    return x;
  }

  Eigen::Index in() const { return layers_.front().in(); }
  Eigen::Index out() const { return layers_.back().out(); }

 private:
  std::string name_;
  std::vector<Linear> layers_;
};

/// Gated recurrent unit with reset, update and candidate gates:
///   r = sigmoid(x Wir + bir + h Whr + bhr)
///   u = sigmoid(x Wiu + biu + h Whu + bhu)
///   n = tanh(x Win + bin + r * (h Whn + bhn))
///   h' = (1 - u) * n + u * h
class GruCell {
 public:
  GruCell() = default;
  GruCell(ParameterSet& ps, const std::string& name, Owner owner, Eigen::Index in, Eigen::Index hidden, Rng& rng)
      : name_(name), in_(in), hidden_(hidden) {
    wi_ = ps.add(name + ".w_input", owner, fan_in_uniform(in, in, 3 * hidden, rng));
    wh_ = ps.add(name + ".w_hidden", owner, fan_in_uniform(hidden, hidden, 3 * hidden, rng));
    bi_ = ps.add(name + ".b_input", owner, Matrix::Zero(1, 3 * hidden));
    bh_ = ps.add(name + ".b_hidden", owner, Matrix::Zero(1, 3 * hidden));
  }

  Var operator()(Bound p, Var x, Var h) const {
    using namespace ops;
    if (x.cols() != in_) throw ConfigError("gru input width mismatch");
    Var gi = add_row(matmul(x, p[wi_]), p[bi_]);
    Var gh = add_row(matmul(h, p[wh_]), p[bh_]);
    return gru_gates(gi, gh, h);
  }

  /// Runs the cell over time-major steps from a zero hidden state.
  /// masks[t] is (B x 1) with entries in {0, 1}; a masked sample keeps its
  /// previous hidden state, which for a padded prefix is the zero state.
  Var run(Tape& tape, Bound p, const std::vector<Matrix>& steps, const std::vector<Matrix>& masks) const {
    if (steps.size() != masks.size()) throw ConfigError("gru: steps and masks differ in length");
    Tape::Scope scope(tape, name_);
    const Eigen::Index batch = steps.empty() ? 1 : steps.front().rows();
    Var h = tape.constant(Matrix::Zero(batch, hidden_));
    for (std::size_t t = 0; t < steps.size(); ++t) {
      const Matrix& m = masks[t];
      const double active = m.sum();
      if (active == 0.0) continue;
      Var cand = (*this)(p, tape.constant(steps[t]), h);
      if (active == static_cast<double>(m.rows()))
        h = cand;
      else
        h = ops::add(h, ops::mul_col(ops::sub(cand, h), tape.constant(m)));
    }
    return h;
  }

  Eigen::Index in() const { return in_; }
  Eigen::Index hidden() const { return hidden_; }

 private:
  std::string name_;
  Eigen::Index in_ = 0, hidden_ = 0;
  std::size_t wi_ = 0, wh_ = 0, bi_ = 0, bh_ = 0;
};

inline void zero_all(ParameterSet& ps) {
  for (auto& p : ps) p.value.setZero();
}

}  // namespace mixinfer

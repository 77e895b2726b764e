#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mixinfer/diffcore/parameters.hpp"

namespace mixinfer {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid as long as the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

/// Reverse-mode evaluation record over dense matrices.
///
/// Every operation appends a node holding its forward value and, when any
/// input requires a gradient, a closure that pushes the node's adjoint back
/// to its inputs. `backward(root)` seeds the root with ones and sweeps the
/// nodes in reverse creation order, which is a valid topological order.
///
/// Each new value is checked for finiteness; a failure throws NumericFault
/// naming the current scope and the operation.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& grad_out)>;

  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };

  /// RAII label for the layer currently being evaluated.
  class Scope {
   public:
    Scope(Tape& t, std::string name) : tape_(t), saved_(std::move(t.scope_)) {
      tape_.scope_ = saved_.empty() ? std::move(name) : saved_ + "." + name;
    }
    ~Scope() { tape_.scope_ = std::move(saved_); }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape& tape_;
    std::string saved_;
  };

  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix m) { return push(std::move(m), false, nullptr, "constant"); }
  Var input(Matrix m, bool requires_grad) { return push(std::move(m), requires_grad, nullptr, "input"); }
  Var scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

  /// One leaf per parameter, in set order.
  std::vector<Var> bind(const ParameterSet& ps, bool requires_grad = true) {
    std::vector<Var> out;
    out.reserve(ps.size());
    for (const auto& p : ps) out.push_back(push(p.value, requires_grad, nullptr, p.name));
    return out;
  }

  Var push(Matrix value, bool requires_grad, Backward backward, const char* op) {
    if (!value.allFinite()) throw NumericFault(scope_.empty() ? std::string(op) : scope_ + "/" + op);
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, requires_grad ? std::move(backward) : nullptr});
    return Var{this, nodes_.size() - 1};
  }
  Var push(Matrix value, bool requires_grad, Backward backward, const std::string& op) {
    return push(std::move(value), requires_grad, std::move(backward), op.c_str());
  }

  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

  void accumulate(std::size_t id, const Matrix& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }
  template <typename Expr>
  void accumulate_expr(std::size_t id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }
  bool needs(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Seeds d(root)/d(root) = 1 for every entry of root and propagates.
  void backward(Var root) {
    Node& r = nodes_[root.id];
    if (!r.requires_grad) return;
    r.grad = Matrix::Ones(r.value.rows(), r.value.cols());
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.size() == 0 || !n.backward) continue;
      // grad is moved out so that accumulation into inputs cannot alias it
      Matrix g = std::move(n.grad);
      n.backward(*this, g);
      n.grad = std::move(g);
    }
  }

  /// Adjoint of a node after backward(); zeros if nothing reached it.
  Matrix grad(Var v) const {
    const Node& n = nodes_[v.id];
    if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  Gradients grads(const std::vector<Var>& leaves) const {
    Gradients g;
    g.reserve(leaves.size());
    for (Var v : leaves) g.push_back(grad(v));
    return g;
  }

 private:
  std::vector<Node> nodes_;
  std::string scope_;
};

inline const Matrix& Var::value() const { return tape->node(id).value; }

/// Parameters bound to a tape, indexed like their ParameterSet.
using Bound = std::span<const Var>;

namespace ops {

namespace detail {
inline void same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ConfigError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                      std::to_string(b.cols()));
}
}  // namespace detail

inline Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw ConfigError("matmul: inner dimension mismatch");
  Tape& t = *a.tape;
  const std::size_t ia = a.id, ib = b.id;
  Matrix out = a.value() * b.value();
  return t.push(std::move(out), t.needs(ia) || t.needs(ib),
                [ia, ib](Tape& t, const Matrix& g) {
                  if (t.needs(ia)) t.accumulate_expr(ia, g * t.node(ib).value.transpose());
                  if (t.needs(ib)) t.accumulate_expr(ib, t.node(ia).value.transpose() * g);
                },
                "matmul");
}

inline Var add(Var a, Var b) {
  detail::same_shape(a, b, "add");
  Tape& t = *a.tape;
  const std::size_t ia = a.id, ib = b.id;
  return t.push(a.value() + b.value(), t.needs(ia) || t.needs(ib),
                [ia, ib](Tape& t, const Matrix& g) {
                  t.accumulate(ia, g);
                  t.accumulate(ib, g);
                },
                "add");
}

inline Var sub(Var a, Var b) {
  detail::same_shape(a, b, "sub");
  Tape& t = *a.tape;
  const std::size_t ia = a.id, ib = b.id;
  return t.push(a.value() - b.value(), t.needs(ia) || t.needs(ib),
                [ia, ib](Tape& t, const Matrix& g) {
                  t.accumulate(ia, g);
                  if (t.needs(ib)) t.accumulate_expr(ib, -g);
                },
                "sub");
}

/// Elementwise product.
inline Var mul(Var a, Var b) {
  detail::same_shape(a, b, "mul");
  Tape& t = *a.tape;
  const std::size_t ia = a.id, ib = b.id;
  return t.push(a.value().cwiseProduct(b.value()), t.needs(ia) || t.needs(ib),
                [ia, ib](Tape& t, const Matrix& g) {
                  if (t.needs(ia)) t.accumulate_expr(ia, g.cwiseProduct(t.node(ib).value));
                  if (t.needs(ib)) t.accumulate_expr(ib, g.cwiseProduct(t.node(ia).value));
                },
                "mul");
}

/// Elementwise quotient.
inline Var div(Var a, Var b) {
  detail::same_shape(a, b, "div");
  Tape& t = *a.tape;
  const std::size_t ia = a.id, ib = b.id;
  return t.push(a.value().cwiseQuotient(b.value()), t.needs(ia) || t.needs(ib),
                [ia, ib](Tape& t, const Matrix& g) {
                  const Matrix& bv = t.node(ib).value;
                  if (t.needs(ia)) t.accumulate_expr(ia, g.cwiseQuotient(bv));
                  if (t.needs(ib))
                    t.accumulate_expr(ib, -(g.cwiseProduct(t.node(ia).value).cwiseQuotient(bv.cwiseProduct(bv))));
                },
                "div");
}

/// x (B x n) + b (1 x n) broadcast over rows.
inline Var add_row(Var x, Var b) {
  if (b.rows() != 1 || b.cols() != x.cols()) throw ConfigError("add_row: bias shape mismatch");
  Tape& t = *x.tape;
  const std::size_t ix = x.id, ib = b.id;
  Matrix out = x.value().rowwise() + b.value().row(0);
  return t.push(std::move(out), t.needs(ix) || t.needs(ib),
                [ix, ib](Tape& t, const Matrix& g) {
                  t.accumulate(ix, g);
                  if (t.needs(ib)) t.accumulate_expr(ib, g.colwise().sum());
                },
                "add_row");
}

/// x (B x n) scaled row-wise by c (B x 1).
inline Var mul_col(Var x, Var c) {
  if (c.cols() != 1 || c.rows() != x.rows()) throw ConfigError("mul_col: column shape mismatch");
  Tape& t = *x.tape;
  const std::size_t ix = x.id, ic = c.id;
  Matrix out = x.value().array().colwise() * c.value().col(0).array();
  return t.push(std::move(out), t.needs(ix) || t.needs(ic),
                [ix, ic](Tape& t, const Matrix& g) {
                  if (t.needs(ix))
                    t.accumulate_expr(ix, (g.array().colwise() * t.node(ic).value.col(0).array()).matrix());
                  if (t.needs(ic)) t.accumulate_expr(ic, g.cwiseProduct(t.node(ix).value).rowwise().sum());
                },
                "mul_col");
}

inline Var scale(Var x, double c) {
  Tape& t = *x.tape;
  const std::size_t ix = x.id;
  return t.push(x.value() * c, t.needs(ix), [ix, c](Tape& t, const Matrix& g) { t.accumulate_expr(ix, g * c); },
                "scale");
}

/// x + c elementwise.
inline Var shift(Var x, double c) {
  Tape& t = *x.tape;
  const std::size_t ix = x.id;
  return t.push((x.value().array() + c).matrix(), t.needs(ix),
                [ix](Tape& t, const Matrix& g) { t.accumulate(ix, g); }, "shift");
}

inline Var neg(Var x) { return scale(x, -1.0); }

namespace detail {
// Unary elementwise op whose derivative is a function of (input, output).
template <typename F, typename D>
Var unary(Var x, F f, D d, const char* name) {
  Tape& t = *x.tape;
  const std::size_t ix = x.id;
  Matrix out = x.value().unaryExpr(f);
  const bool rg = t.needs(ix);
  Var y = t.push(std::move(out), rg, nullptr, name);
  if (rg) {
    const std::size_t iy = y.id;
    t.node(iy).backward = [ix, iy, d](Tape& t, const Matrix& g) {
      const Matrix& xv = t.node(ix).value;
      const Matrix& yv = t.node(iy).value;
      Matrix dx(g.rows(), g.cols());
      for (Eigen::Index i = 0; i < g.size(); ++i) dx.data()[i] = g.data()[i] * d(xv.data()[i], yv.data()[i]);
      t.accumulate(ix, dx);
    };
  }
  return y;
}
}  // namespace detail

inline Var relu(Var x) {
  return detail::unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; }, "relu");
}

inline Var tanh(Var x) {
  return detail::unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; }, "tanh");
}

inline Var sigmoid(Var x) {
  return detail::unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

/// log(1 + e^x), evaluated stably.
inline Var softplus(Var x) {
  return detail::unary(
      x, [](double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](double v, double) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      "softplus");
}

inline Var exp(Var x) {
  return detail::unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; }, "exp");
}

inline Var log(Var x) {
  return detail::unary(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; }, "log");
}

inline Var sqrt(Var x) {
  return detail::unary(
      x, [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; }, "sqrt");
}

inline Var square(Var x) {
  return detail::unary(
      x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; }, "square");
}

inline Var abs(Var x) {
  return detail::unary(
      x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }, "abs");
}

/// Clamp to [lo, hi]; gradient is zero where clamped.
inline Var clamp(Var x, double lo, double hi) {
  return detail::unary(
      x, [lo, hi](double v) { return v < lo ? lo : (v > hi ? hi : v); },
      [lo, hi](double v, double) { return (v < lo || v > hi) ? 0.0 : 1.0; }, "clamp");
}

/// max(x, lo); gradient is zero below the floor.
inline Var floor_at(Var x, double lo) {
  return detail::unary(
      x, [lo](double v) { return v < lo ? lo : v; }, [lo](double v, double) { return v < lo ? 0.0 : 1.0; },
      "floor_at");
}

/// Elementwise minimum; ties route the gradient to `a`.
inline Var min(Var a, Var b) {
  detail::same_shape(a, b, "min");
  Tape& t = *a.tape;
  const std::size_t ia = a.id, ib = b.id;
  return t.push(a.value().cwiseMin(b.value()), t.needs(ia) || t.needs(ib),
                [ia, ib](Tape& t, const Matrix& g) {
                  const Matrix& av = t.node(ia).value;
                  const Matrix& bv = t.node(ib).value;
                  Matrix ga = Matrix::Zero(g.rows(), g.cols());
                  Matrix gb = Matrix::Zero(g.rows(), g.cols());
                  for (Eigen::Index i = 0; i < g.size(); ++i) {
                    if (av.data()[i] <= bv.data()[i])
                      ga.data()[i] = g.data()[i];
                    else
                      gb.data()[i] = g.data()[i];
                  }
                  t.accumulate(ia, ga);
                  t.accumulate(ib, gb);
                },
                "min");
}

/// Row sums: (B x n) -> (B x 1).
inline Var sum_cols(Var x) {
  Tape& t = *x.tape;
  const std::size_t ix = x.id;
  const Eigen::Index n = x.cols();
  return t.push(x.value().rowwise().sum(), t.needs(ix),
                [ix, n](Tape& t, const Matrix& g) { t.accumulate_expr(ix, g.replicate(1, n)); }, "sum_cols");
}

inline Var sum(Var x) {
  Tape& t = *x.tape;
  const std::size_t ix = x.id;
  const Eigen::Index r = x.rows(), c = x.cols();
  return t.push(Matrix::Constant(1, 1, x.value().sum()), t.needs(ix),
                [ix, r, c](Tape& t, const Matrix& g) { t.accumulate_expr(ix, Matrix::Constant(r, c, g(0, 0))); },
                "sum");
}

inline Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ConfigError("concat_cols: no inputs");
  Tape& t = *parts.front().tape;
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (Var p : parts) {
    if (p.rows() != rows) throw ConfigError("concat_cols: row count mismatch");
    cols += p.cols();
    rg = rg || t.needs(p.id);
  }
  Matrix out(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> spans;
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    spans.emplace_back(p.id, p.cols());
    at += p.cols();
  }
  return t.push(std::move(out), rg,
                [spans](Tape& t, const Matrix& g) {
                  Eigen::Index at = 0;
                  for (auto [id, n] : spans) {
                    if (t.needs(id)) t.accumulate_expr(id, g.middleCols(at, n));
                    at += n;
                  }
                },
                "concat_cols");
}

inline Var slice_cols(Var x, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n < 0 || start + n > x.cols()) throw ConfigError("slice_cols: out of range");
  Tape& t = *x.tape;
  const std::size_t ix = x.id;
  const Eigen::Index r = x.rows(), c = x.cols();
  return t.push(x.value().middleCols(start, n), t.needs(ix),
                [ix, r, c, start, n](Tape& t, const Matrix& g) {
                  Matrix full = Matrix::Zero(r, c);
                  full.middleCols(start, n) = g;
                  t.accumulate(ix, full);
                },
                "slice_cols");
}

/// Stacks inputs vertically; all inputs must share a column count.
inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ConfigError("concat_rows: no inputs");
  Tape& t = *parts.front().tape;
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  bool rg = false;
  for (Var p : parts) {
    if (p.cols() != cols) throw ConfigError("concat_rows: column count mismatch");
    rows += p.rows();
    rg = rg || t.needs(p.id);
  }
  Matrix out(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> spans;
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    spans.emplace_back(p.id, p.rows());
    at += p.rows();
  }
  return t.push(std::move(out), rg,
                [spans](Tape& t, const Matrix& g) {
                  Eigen::Index at = 0;
                  for (auto [id, n] : spans) {
                    if (t.needs(id)) t.accumulate_expr(id, g.middleRows(at, n));
                    at += n;
                  }
                },
                "concat_rows");
}

/// Gated recurrent update from pre-activations gi = x Wi + bi and
/// gh = h Wh + bh, both (B x 3H) with reset, update and candidate blocks:
///   r = sigmoid(gi_r + gh_r), u = sigmoid(gi_u + gh_u)
///   n = tanh(gi_n + r * gh_n), h' = (1 - u) * n + u * h
/// The gates are recomputed in the backward pass rather than stored.
inline Var gru_gates(Var gi, Var gh, Var h) {
  const Eigen::Index B = h.rows(), H = h.cols();
  if (gi.rows() != B || gh.rows() != B || gi.cols() != 3 * H || gh.cols() != 3 * H)
    throw ConfigError("gru_gates: shape mismatch");
  Tape& t = *h.tape;
  const std::size_t ii = gi.id, ig = gh.id, ih = h.id;
  struct Gates {
    Eigen::ArrayXXd r, u, n;
  };
  auto gates = [B, H](const Matrix& a, const Matrix& b) {
    Gates g;
    g.r = 1.0 / (1.0 + (-(a.leftCols(H) + b.leftCols(H)).array()).exp());
    g.u = 1.0 / (1.0 + (-(a.middleCols(H, H) + b.middleCols(H, H)).array()).exp());
    g.n = (a.rightCols(H).array() + g.r * b.rightCols(H).array()).tanh();
    (void)B;
    return g;
  };
  const Gates g = gates(gi.value(), gh.value());
  Matrix out = (g.n + g.u * (h.value().array() - g.n)).matrix();
  return t.push(std::move(out), t.needs(ii) || t.needs(ig) || t.needs(ih),
                [ii, ig, ih, H, gates](Tape& t, const Matrix& go) {
                  const Matrix& gh = t.node(ig).value;
                  const Gates g = gates(t.node(ii).value, gh);
                  const auto d = go.array();
                  const Eigen::ArrayXXd dpre_n = d * (1.0 - g.u) * (1.0 - g.n.square());
                  const Eigen::ArrayXXd dpre_u = d * (t.node(ih).value.array() - g.n) * g.u * (1.0 - g.u);
                  const Eigen::ArrayXXd dpre_r = dpre_n * gh.rightCols(H).array() * g.r * (1.0 - g.r);
                  Matrix dgi(go.rows(), 3 * H);
                  dgi << dpre_r.matrix(), dpre_u.matrix(), dpre_n.matrix();
                  if (t.needs(ih)) t.accumulate_expr(ih, (d * g.u).matrix());
                  if (t.needs(ig)) {
                    Matrix dgh = dgi;
                    dgh.rightCols(H) = (dpre_n * g.r).matrix();
                    t.accumulate(ig, dgh);
                  }
                  t.accumulate(ii, dgi);
                },
                "gru_gates");
}

/// Row-wise softmax.
inline Var softmax_rows(Var x) {
  Tape& t = *x.tape;
  const std::size_t ix = x.id;
  Matrix out = x.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  Var y = t.push(std::move(out), t.needs(ix), nullptr, "softmax_rows");
  if (t.needs(ix)) {
    const std::size_t iy = y.id;
    t.node(iy).backward = [ix, iy](Tape& t, const Matrix& g) {
      const Matrix& s = t.node(iy).value;
      const Matrix dot = g.cwiseProduct(s).rowwise().sum();
      t.accumulate_expr(ix, s.cwiseProduct(g - dot.replicate(1, g.cols())));
    };
  }
  return y;
}

/// Row-wise log-softmax.
inline Var log_softmax_rows(Var x) {
  Tape& t = *x.tape;
  const std::size_t ix = x.id;
  Matrix out = x.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    const double lse = m + std::log((out.row(r).array() - m).exp().sum());
    out.row(r).array() -= lse;
  }
  Var y = t.push(std::move(out), t.needs(ix), nullptr, "log_softmax_rows");
  if (t.needs(ix)) {
    const std::size_t iy = y.id;
    t.node(iy).backward = [ix, iy](Tape& t, const Matrix& g) {
      const Matrix s = t.node(iy).value.array().exp().matrix();
      const Matrix gs = g.rowwise().sum();
      t.accumulate_expr(ix, g - s.cwiseProduct(gs.replicate(1, g.cols())));
    };
  }
  return y;
}

}  // namespace ops
}  // namespace mixinfer

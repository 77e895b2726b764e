#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mixinfer/error.hpp"
#include "mixinfer/rng.hpp"

namespace mixinfer {

/// Dense row-major-by-convention batch: rows are samples, columns features.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Which learner a parameter belongs to. Optimization phases touch disjoint
/// owners, which is what the decoupling checks compare.
enum class Owner : std::uint8_t { Encoder = 0, Decoder = 1, Policy = 2, Critic = 3, Temperature = 4 };

inline std::string_view owner_name(Owner o) {
  switch (o) {
    case Owner::Encoder: return "encoder";
    case Owner::Decoder: return "decoder";
    case Owner::Policy: return "policy";
    case Owner::Critic: return "critic";
    case Owner::Temperature: return "temperature";
  }
  return "?";
}

struct Parameter {
  std::string name;
  Owner owner;
  Matrix value;
};

/// Ordered collection of named weights. Insertion order is the stable order
/// used by optimizers, gradients and checkpoints.
class ParameterSet {
 public:
  std::size_t add(std::string name, Owner owner, Matrix init) {
    if (find(name) != npos) throw ConfigError("duplicate parameter name: " + name);
    params_.push_back({std::move(name), owner, std::move(init)});
    return params_.size() - 1;
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t find(std::string_view name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (params_[i].name == name) return i;
    return npos;
  }

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  /// Bit-exact comparison of names, owners, shapes and values.
  bool identical(const ParameterSet& other) const {
    if (size() != other.size()) return false;
    for (std::size_t i = 0; i < size(); ++i) {
      const auto& a = params_[i];
      const auto& b = other.params_[i];
      if (a.name != b.name || a.owner != b.owner || a.value.rows() != b.value.rows() ||
          a.value.cols() != b.value.cols())
        return false;
      if (std::memcmp(a.value.data(), b.value.data(), sizeof(double) * a.value.size()) != 0)
        return false;
    }
    return true;
  }

 private:
  std::vector<Parameter> params_;
};

/// One gradient matrix per parameter, same order and shapes as the set.
using Gradients = std::vector<Matrix>;

inline Gradients zeros_like(const ParameterSet& ps) {
  Gradients g;
  g.reserve(ps.size());
  for (const auto& p : ps) g.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  return g;
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline Matrix fan_in_uniform(Eigen::Index fan_in, Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Matrix m(rows, cols);
  // Filled in column order so the draw sequence is independent of Eigen's storage details.
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = uniform(rng, -bound, bound);
  return m;
}

}  // namespace mixinfer

#pragma once

#include <cmath>
#include <utility>

#include "mixinfer/diffcore/parameters.hpp"

namespace mixinfer::taskinfer {

/// Mixture statistics for one context: K components over a dim(z) latent.
struct GaussianStats {
  Matrix mu;       ///< K x d
  Matrix var;      ///< K x d, strictly positive
  Vector rho;      ///< K, on the simplex
  Vector logits;   ///< K, pre-softmax activations

  Eigen::Index components() const { return mu.rows(); }
  Eigen::Index latent_dim() const { return mu.cols(); }

  bool valid(double tol = 1e-9) const {
    if (!mu.allFinite() || !var.allFinite() || !rho.allFinite()) return false;
    if ((var.array() <= 0.0).any() || (rho.array() < 0.0).any()) return false;
    return std::abs(rho.sum() - 1.0) <= tol;
  }
};

/// Product of two diagonal Gaussians (elementwise):
///   mu = (mu1 var2 + mu2 var1) / (var1 + var2),  var = var1 var2 / (var1 + var2).
inline std::pair<Matrix, Matrix> gaussian_product(const Matrix& mu1, const Matrix& var1, const Matrix& mu2,
                                                  const Matrix& var2) {
  if (mu1.rows() != mu2.rows() || mu1.cols() != mu2.cols() || var1.rows() != mu1.rows() ||
      var1.cols() != mu1.cols() || var2.rows() != mu1.rows() || var2.cols() != mu1.cols())
    throw ConfigError("gaussian_product: shape mismatch");
  if ((var1.array() <= 0.0).any() || (var2.array() <= 0.0).any())
    throw DomainError("gaussian_product: variances must be positive");
  const Matrix denom = var1 + var2;
  Matrix mu = (mu1.cwiseProduct(var2) + mu2.cwiseProduct(var1)).cwiseQuotient(denom);
  Matrix var = var1.cwiseProduct(var2).cwiseQuotient(denom);
  return {std::move(mu), std::move(var)};
}

inline std::pair<double, double> gaussian_product(double mu1, double var1, double mu2, double var2) {
  auto [m, v] = gaussian_product(Matrix::Constant(1, 1, mu1), Matrix::Constant(1, 1, var1),
                                 Matrix::Constant(1, 1, mu2), Matrix::Constant(1, 1, var2));
  return {m(0, 0), v(0, 0)};
}

}  // namespace mixinfer::taskinfer

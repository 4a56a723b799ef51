#pragma once

#include <cstdint>
#include <vector>

#include "ge/tensor.hpp"

namespace ge {

struct Dictionary {
  Tensor psi;  // [n, p], unit-norm columns
  std::size_t channels = 1, height = 0, width = 0;
  int overcompleteness = 1;

  std::size_t n() const { return psi.shape()[0]; }
  std::size_t p() const { return psi.shape()[1]; }
};

// Separable cosine atoms cos(pi k (2i+1) / (2P)) with P = overcompleteness * N
// frequencies per axis, block-diagonal over channels.
Dictionary build_dct_dictionary(std::size_t height, std::size_t width, int overcompleteness, std::size_t channels = 1);

Tensor soft_threshold(const Tensor& v, double tau);

struct LassoConfig {
  double alpha = 0.1;
  std::size_t iterations = 1000;
  double step = 0.0;  // 0 picks 1 / (2 L) from a power-iteration estimate of L = |A|^2
  bool fista = false;  // monotone FISTA instead of plain ISTA
  std::size_t power_iterations = 50;
  double tolerance = 0.0;  // stop once the relative objective decrease falls below this
};

struct LassoResult {
  Tensor beta;
  Tensor x_hat;  // psi * beta, [C,H,W] when a dictionary was given
  std::vector<double> objective;  // per iteration, starting with beta = 0
  double step = 0.0;
};

// |A beta - b|^2 + alpha |beta|_1
double lasso_objective(const Tensor& a, const Tensor& b, const Tensor& beta, double alpha);

// Largest eigenvalue of A^T A by power iteration.
double spectral_norm_sq(const Tensor& a, std::size_t iterations, std::uint64_t seed = 0);

// Minimizes the lasso objective over beta for A [m,p], b [m]. Throws
// ConfigError if an iteration increases the objective.
LassoResult lasso_solve(const Tensor& a, const Tensor& b, const LassoConfig& config);
LassoResult lasso_solve(const Tensor& a, const Tensor& b, const Dictionary& dict, const LassoConfig& config);

// Phi [m,n] composed with the dictionary: [m,p].
Tensor compose_sensing(const Tensor& phi, const Dictionary& dict);

// Minimum-norm c with psi c = x, via psi^T (psi psi^T + 1e-10 I)^-1 x.
Tensor pseudo_inverse_apply(const Dictionary& dict, const Tensor& x);

}  // namespace ge

#pragma once

#include <cstdint>
#include <vector>

#include "ge/imaging.hpp"
#include "ge/nn.hpp"
#include "json.hpp"

namespace ge {

struct SolveConfig {
  double lambda = 1e-3;
  std::size_t iterations = 500;
  std::size_t restarts = 2;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;  // restarts run in parallel; results do not depend on it

  void validate() const;
  nlohmann::json to_json() const;
};

struct SolveResult {
  Tensor z_star;
  Tensor x_hat;  // forward(G, z_star)
  std::vector<double> objective_final;               // per restart, at its last iterate
  std::vector<std::vector<double>> objective_trace;  // per restart, objective at each step's iterate
  std::vector<std::vector<double>> running_min;
  std::size_t winning_restart = 0;
  double wall_ms = 0.0;

  nlohmann::json to_json() const;  // everything but the tensors
};

// mse(EN(S(G(z))), m) + lambda |z|^2
Tensor ge_objective(const Tensor& z, const Network& encoder, const Network& generator, const AdjustmentOp& s,
                    const Tensor& m, double lambda);

SolveResult solve_ge(const Tensor& m, const Network& encoder, const Network& generator, const AdjustmentOp& s,
                     const SolveConfig& config);

// mse(A vec(G(z)), y) + lambda |z|^2
Tensor ga_objective(const Tensor& z, const Tensor& a, const Network& generator, const Tensor& y, double lambda);

SolveResult solve_ga(const Tensor& y, const Tensor& a, const Network& generator, const SolveConfig& config);

// Entries i.i.d. N(0, 1/m).
Tensor gaussian_sensing_matrix(std::size_t m, std::size_t n, std::uint64_t seed);

// A vec(x).
Tensor sense(const Tensor& a, const Tensor& x);

}  // namespace ge

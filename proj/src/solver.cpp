#include "ge/solver.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "ge/began.hpp"
#include "ge/error.hpp"
#include "ge/optim.hpp"
#include "ge/parallel.hpp"
#include "ge/rng.hpp"

namespace ge {

void SolveConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("solve: lambda must be >= 0");
  if (iterations < 1) throw ConfigError("solve: iterations must be >= 1");
  if (restarts < 1) throw ConfigError("solve: restarts must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("solve: learning rate must be positive");
}

nlohmann::json SolveConfig::to_json() const {
  return {{"lambda", lambda}, {"iterations", iterations}, {"restarts", restarts},
          {"learning_rate", learning_rate}, {"seed", seed}};
}

nlohmann::json SolveResult::to_json() const {
  return {{"objective_final", objective_final}, {"winning_restart", winning_restart},
          {"objective", objective_final.at(winning_restart)}, {"z_star", z_star.to_vector()}, {"wall_ms", wall_ms}};
}

namespace {

using Objective = std::function<Tensor(const Tensor&)>;

SolveResult run_restarts(std::size_t latent, const Objective& objective, const Network& generator,
                         const SolveConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  struct Outcome {
    Tensor z;
    std::vector<double> trace, running;
    double final = 0.0;
  };
  std::vector<Outcome> out(cfg.restarts);

  parallel_for(cfg.restarts, cfg.jobs, [&](std::size_t r) {
    Rng rng(mix_seed(cfg.seed, r));
    std::vector<Tensor> params{reshape(sample_latent(1, latent, rng), {latent})};
    AdamState adam(cfg.learning_rate);
    auto& o = out[r];
    double best = std::numeric_limits<double>::infinity();
    std::size_t step = 0;
    try {
      for (; step < cfg.iterations; ++step) {
        Tape tape;
        Tensor z = tape.watch(params[0]);
        Tensor f = objective(z);
        const double v = f.item();
        if (!std::isfinite(v)) throw NumericError("non-finite objective");
        o.trace.push_back(v);
        best = std::min(best, v);
        o.running.push_back(best);
        adam_step(adam, params, {tape.backward(f).of(z)});
      }
      o.final = objective(params[0]).item();
    } catch (const NumericError& e) {
      throw SolverError("restart " + std::to_string(r) + " step " + std::to_string(step) + ": " + e.what());
    }
    o.z = params[0];
  });

  SolveResult res;
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    res.objective_final.push_back(out[r].final);
    res.objective_trace.push_back(std::move(out[r].trace));
    res.running_min.push_back(std::move(out[r].running));
    if (out[r].final < out[res.winning_restart].final) res.winning_restart = r;
  }
  res.z_star = out[res.winning_restart].z;
  res.x_hat = forward(generator, res.z_star);
  res.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

void check_latent(const Network& generator, const Tensor& z) {
  if (generator.spec().input_shape.size() != 1 || z.shape() != generator.spec().input_shape)
    throw ContractError("latent " + to_string(z.shape()) + " does not match generator input " +
                        to_string(generator.spec().input_shape));
}

void check_ge_shapes(const Tensor& z, const Network& encoder, const Network& generator, const AdjustmentOp& s,
                     const Tensor& m) {
  check_latent(generator, z);
  if (s.output_shape(generator.spec().output_shape) != encoder.spec().input_shape)
    throw ContractError("adjusted generator output " + to_string(s.output_shape(generator.spec().output_shape)) +
                        " does not match encoder input " + to_string(encoder.spec().input_shape));
  if (m.shape() != encoder.spec().output_shape)
    throw ContractError("measurement " + to_string(m.shape()) + " does not match encoder output " +
                        to_string(encoder.spec().output_shape));
}

}  // namespace

Tensor ge_objective(const Tensor& z, const Network& encoder, const Network& generator, const AdjustmentOp& s,
                    const Tensor& m, double lambda) {
  check_ge_shapes(z, encoder, generator, s, m);
  Tensor residual = mse(forward(encoder, s.apply(forward(generator, z))), m);
  return add(residual, scale(sq_l2(z), lambda));
}

SolveResult solve_ge(const Tensor& m, const Network& encoder, const Network& generator, const AdjustmentOp& s,
                     const SolveConfig& cfg) {
  if (!encoder.frozen() || !generator.frozen()) throw ContractError("solve_ge: networks must be frozen");
  const std::size_t latent = generator.spec().input_shape.at(0);
  check_ge_shapes(Tensor::zeros({latent}), encoder, generator, s, m);
  return run_restarts(
      latent, [&](const Tensor& z) { return ge_objective(z, encoder, generator, s, m, cfg.lambda); }, generator, cfg);
}

Tensor sense(const Tensor& a, const Tensor& x) {
  if (a.rank() != 2 || a.shape()[1] != x.numel())
    throw ContractError("sensing matrix " + to_string(a.shape()) + " does not fit an image of " +
                        std::to_string(x.numel()) + " values");
  return reshape(matmul(a, reshape(x, {x.numel(), 1})), {a.shape()[0]});
}

Tensor ga_objective(const Tensor& z, const Tensor& a, const Network& generator, const Tensor& y, double lambda) {
  check_latent(generator, z);
  if (y.numel() != a.shape().at(0)) throw ContractError("measurement length does not match the sensing matrix");
  Tensor residual = mse(sense(a, forward(generator, z)), reshape(y, {y.numel()}));
  return add(residual, scale(sq_l2(z), lambda));
}

SolveResult solve_ga(const Tensor& y, const Tensor& a, const Network& generator, const SolveConfig& cfg) {
  if (!generator.frozen()) throw ContractError("solve_ga: generator must be frozen");
  const std::size_t latent = generator.spec().input_shape.at(0);
  if (a.rank() != 2 || a.shape()[1] != numel(generator.spec().output_shape))
    throw ContractError("sensing matrix " + to_string(a.shape()) + " does not match generator output " +
                        to_string(generator.spec().output_shape));
  return run_restarts(
      latent, [&](const Tensor& z) { return ga_objective(z, a, generator, y, cfg.lambda); }, generator, cfg);
}

Tensor gaussian_sensing_matrix(std::size_t m, std::size_t n, std::uint64_t seed) {
  if (m < 1 || n < 1) throw ContractError("gaussian_sensing_matrix: m and n must be >= 1");
  Rng rng(seed);
  const double sd = 1.0 / std::sqrt(static_cast<double>(m));
  std::vector<double> v(m * n);
  for (auto& x : v) x = sd * rng.normal();
  return Tensor({m, n}, std::move(v));
}

}  // namespace ge

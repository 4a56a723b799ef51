#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ge/data.hpp"
#include "ge/lasso.hpp"
#include "ge/nn.hpp"
#include "ge/solver.hpp"
#include "json.hpp"

namespace ge {

// Mean squared difference over all pixels and channels.
double image_mse(const Tensor& a, const Tensor& b);

struct Summary {
  std::size_t count = 0;
  double median = 0.0, mean = 0.0, stddev = 0.0;  // population standard deviation
};
Summary summarize(std::vector<double> values);

struct EvalRow {
  std::size_t image_id = 0;
  std::string method;
  std::size_t m = 0;
  double mse = 0.0;
  double wall_ms = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  nlohmann::json config;
  std::string config_hash;
  // Reconstructions by method, in image order.
  std::map<std::string, std::vector<Tensor>> reconstructions;

  std::vector<double> mse_of(const std::string& method) const;
  Summary summary(const std::string& method) const;
  std::vector<std::string> methods() const;  // in first-appearance order

  // Columns image_id, method, m, mse, wall_ms.
  std::string csv(bool with_wall_time = true) const;
  void write_csv(const std::filesystem::path& path) const;
  nlohmann::json summary_json() const;
};

// FNV-1a of the compact JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

struct CompareConfig {
  std::vector<std::string> methods{"lasso", "ga", "ge0", "ge1"};
  std::size_t ga_m = 0;     // 0: same as the GE encoder width
  std::size_t lasso_m = 0;  // 0: 4x the GE encoder width
  SolveConfig solve;
  LassoConfig lasso;
  int overcomplete = 2;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  nlohmann::json to_json() const;
};

struct Models {
  Network generator;
  std::optional<Network> ge0_encoder, ge1_encoder;
};

EvalReport compare_methods(const ImageSet& test, const Models& models, const CompareConfig& config);

// Rows: originals, then one row per method.
void write_comparison_grid(const ImageSet& test, const EvalReport& report, const std::filesystem::path& path,
                           std::size_t max_images = 8);

struct Decomposition {
  double fake_mse = 0.0, real_mse = 0.0, ratio = 0.0;
  std::vector<double> fake, real;
  std::uint64_t target_generator_hash = 0, solver_generator_hash = 0;
};

Decomposition error_decomposition(const Network& generator, const Network& encoder, const SolveConfig& solve,
                                  const ImageSet& real_test, std::size_t n_fake, std::uint64_t seed);

struct SweepPoint {
  std::size_t m = 0;
  Summary stats;
};

// Returns a frozen encoder with bottleneck m (trained or loaded).
using EncoderSource = std::function<Network(std::size_t m)>;

struct SweepResult {
  std::vector<SweepPoint> curve;
  EvalReport report;  // per-image rows, method "ge1"
};

SweepResult sweep_measurements(const std::vector<std::size_t>& budgets, const EncoderSource& encoders,
                               const Network& generator, const ImageSet& test, const SolveConfig& solve,
                               std::size_t jobs = 1);

void write_curve_csv(const std::vector<SweepPoint>& curve, const std::filesystem::path& path);
// Line chart of median MSE against m.
std::string curve_svg(const std::vector<SweepPoint>& curve, const std::string& title);

double measurement_rate(std::size_t m, const Shape& image_shape);

// ---- restoration tasks -------------------------------------------------------

// params with kind set to the task's degradation (none for cs).
DegradationSpec task_degradation(Task task, DegradationSpec params);

struct Restoration {
  Tensor x_dagger;          // as degraded (low resolution for superres)
  Tensor x_dagger_aligned;  // full resolution
  SolveResult solve;
};

// Solves from an already degraded image; x_dagger is at the degraded resolution.
Restoration restore_degraded(const Tensor& x_dagger, Task task, const DegradationSpec& params,
                             const Network& generator, const Network& encoder, const SolveConfig& solve);
// Degrades x_star per task with params, then restores.
Restoration restore(const Tensor& x_star, Task task, const DegradationSpec& params, const Network& generator,
                    const Network& encoder, const SolveConfig& solve);

// Rows with methods "ge" (x_hat) and "degraded" (aligned x_dagger), image i
// degraded with seed mix_seed(params.seed, i).
EvalReport evaluate_task(const ImageSet& test, Task task, const DegradationSpec& params, const Network& generator,
                         const Network& encoder, const SolveConfig& solve, std::size_t jobs = 1);

}  // namespace ge

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "ge/data.hpp"
#include "ge/nn.hpp"
#include "ge/rng.hpp"

namespace ge {

struct BeganConfig {
  std::size_t latent_dim = 8;
  double gamma = 0.5;
  double lambda_k = 0.001;
  double k0 = 0.0;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.5;
  std::size_t steps = 0;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

struct BeganRecord {
  double l_real, l_fake, k, m;
};

struct BeganResult {
  Network generator;
  Network discriminator;
  std::vector<BeganRecord> history;
};

// [n,k] standard normal draws.
Tensor sample_latent(std::size_t n, std::size_t k, Rng& rng);

// Mean absolute error between v and D(v).
Tensor disc_recon_loss(const Network& d, const Tensor& v);

double update_k(double k, double gamma, double lambda_k, double l_real, double l_fake);
double convergence_measure(double l_real, double l_fake, double gamma);

// Called after every step with the step index and the current generator.
using BeganObserver = std::function<void(std::size_t step, const Network& generator, const BeganRecord& rec)>;

BeganResult train_began(const ImageSet& data, const NetworkSpec& g_spec, const NetworkSpec& d_spec,
                        const BeganConfig& config, const BeganObserver& observer = {});

// Frozen encoding half of an encoder+decoder discriminator.
// GE0-rule encoder followed by a linear-output decoder. A tanh output cannot
// reach the -1 background exactly, which keeps L_fake above gamma * L_real and
// pins k at 0.
NetworkSpec build_discriminator_spec(int depth, int filters, int m, int decoder_layers, const Shape& image_shape);

Network extract_encoder(const Network& d);

void write_began_history(const std::vector<BeganRecord>& history, const std::filesystem::path& path);

}  // namespace ge

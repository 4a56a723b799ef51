#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ge/data.hpp"
#include "ge/nn.hpp"
#include "ge/rng.hpp"

namespace ge {

struct AeConfig {
  double fake_ratio = 0.5;
  std::size_t steps = 0;
  std::size_t batch_size = 16;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

// n_total images: floor(fake_ratio * n_total) generator samples, the rest
// taken from `real` in a seeded order, then shuffled together.
ImageSet augment_dataset(const ImageSet& real, const Network& generator, double fake_ratio, std::size_t n_total,
                         Rng& rng);

struct AeResult {
  Network encoder;
  Network decoder;
  std::vector<double> history;  // training mse per step
};

AeResult train_ae(const ImageSet& images, const NetworkSpec& enc_spec, const NetworkSpec& dec_spec,
                  const AeConfig& config);

Tensor encode(const Network& encoder, const Tensor& x);
Tensor decode(const Network& decoder, const Tensor& m);

// MSE of the best constant image (the pixelwise mean) on `set`.
double constant_predictor_mse(const ImageSet& set);
// Mean reconstruction MSE of decode(encode(x)) over `set`.
double reconstruction_mse(const Network& encoder, const Network& decoder, const ImageSet& set);

struct AeArchitecture {
  EncoderVariant variant = EncoderVariant::ge1;
  int depth = 4;
  int filters = 8;
  int m = 8;
  int decoder_layers = 4;
  int decoder_filters = 16;

  nlohmann::json to_json() const;
};

// Augments `real` to n_total images (0: real.size()) with generator samples
// when a generator is given and fake_ratio > 0, then trains.
AeResult train_ae_pipeline(const ImageSet& real, const Network* generator, const AeArchitecture& arch,
                           const AeConfig& config, std::size_t n_total = 0);

void write_loss_history(const std::vector<double>& history, const std::filesystem::path& path);

}  // namespace ge

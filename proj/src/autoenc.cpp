#include "ge/autoenc.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "ge/began.hpp"
#include "ge/error.hpp"
#include "ge/optim.hpp"

namespace ge {

void AeConfig::validate() const {
  if (!(fake_ratio >= 0.0 && fake_ratio <= 1.0)) throw ConfigError("autoenc: fake_ratio must be in [0,1]");
  if (!(learning_rate > 0.0)) throw ConfigError("autoenc: learning rate must be positive");
  if (batch_size < 1) throw ConfigError("autoenc: batch_size must be >= 1");
}

nlohmann::json AeConfig::to_json() const {
  return {{"fake_ratio", fake_ratio}, {"steps", steps}, {"batch_size", batch_size},
          {"learning_rate", learning_rate}, {"seed", seed}, {"augmentation", "static"}};
}

namespace {

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.engine()() % i]);
}

}  // namespace

ImageSet augment_dataset(const ImageSet& real, const Network& generator, double fake_ratio, std::size_t n_total,
                         Rng& rng) {
  if (!generator.frozen()) throw ContractError("augment_dataset: generator must be frozen");
  if (real.size() == 0) throw ContractError("augment_dataset: no real images");
  if (!(fake_ratio >= 0.0 && fake_ratio <= 1.0)) throw ConfigError("augment_dataset: fake_ratio must be in [0,1]");
  const auto n_fake = static_cast<std::size_t>(std::floor(fake_ratio * static_cast<double>(n_total)));
  ImageSet out{{}, real.source + "+generator", real.seed, real.split};
  out.images.reserve(n_total);

  std::vector<std::size_t> order(real.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng);
  for (std::size_t i = 0; i < n_total - n_fake; ++i) out.images.push_back(real.images[order[i % order.size()]]);

  if (n_fake > 0) {
    const std::size_t k = generator.spec().input_shape.at(0);
    const Shape& s = generator.spec().output_shape;
    Tensor fakes = forward(generator, sample_latent(n_fake, k, rng));
    for (std::size_t i = 0; i < n_fake; ++i) out.images.push_back(reshape(slice_rows(fakes, i, i + 1), s));
  }
  std::vector<std::size_t> perm(out.images.size());
  std::iota(perm.begin(), perm.end(), 0);
  shuffle(perm, rng);
  return out.subset(perm, out.split);
}

AeResult train_ae(const ImageSet& images, const NetworkSpec& enc_spec, const NetworkSpec& dec_spec,
                  const AeConfig& cfg) {
  cfg.validate();
  if (images.size() == 0) throw ContractError("train_ae: empty training set");
  if (enc_spec.output_shape != dec_spec.input_shape || dec_spec.output_shape != enc_spec.input_shape ||
      enc_spec.input_shape != images.shape())
    throw ShapeError("train_ae: encoder " + to_string(enc_spec.input_shape) + "->" + to_string(enc_spec.output_shape) +
                     " and decoder " + to_string(dec_spec.input_shape) + "->" + to_string(dec_spec.output_shape) +
                     " do not compose on images " + to_string(images.shape()));
  Network en = init_params(enc_spec, mix_seed(cfg.seed, 1));
  Network de = init_params(dec_spec, mix_seed(cfg.seed, 2));
  AdamState adam_en(cfg.learning_rate), adam_de(cfg.learning_rate);
  Rng rng(mix_seed(cfg.seed, 3));
  std::vector<double> history;
  history.reserve(cfg.steps);
  std::vector<std::size_t> idx(cfg.batch_size);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    try {
      for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(images.size()) - 1));
      const Tensor x = images.batch(idx);
      Tape tape;
      Network ew = en.watched(tape), dw = de.watched(tape);
      Tensor loss = mse(forward(dw, forward(ew, x)), x);
      history.push_back(loss.item());
      auto grads = tape.backward(loss);
      auto pe = en.trainable_params(), pd = de.trainable_params();
      adam_step(adam_en, pe, ew.gradients(grads));
      adam_step(adam_de, pd, dw.gradients(grads));
      en.set_trainable_params(std::move(pe));
      de.set_trainable_params(std::move(pd));
    } catch (const NumericError& e) {
      throw TrainingError("autoencoder diverged at step " + std::to_string(step) + ": " + e.what());
    }
  }
  return {en.frozen_copy(), de.frozen_copy(), std::move(history)};
}

Tensor encode(const Network& encoder, const Tensor& x) {
  if (!encoder.frozen()) throw ContractError("encode: encoder must be frozen");
  return forward(encoder, x);
}

Tensor decode(const Network& decoder, const Tensor& m) {
  if (!decoder.frozen()) throw ContractError("decode: decoder must be frozen");
  return forward(decoder, m);
}

double constant_predictor_mse(const ImageSet& set) {
  const std::size_t n = set.size(), p = numel(set.shape());
  std::vector<double> mean(p, 0.0);
  for (const auto& im : set.images)
    for (std::size_t j = 0; j < p; ++j) mean[j] += im[j];
  for (auto& v : mean) v /= static_cast<double>(n);
  double acc = 0.0;
  for (const auto& im : set.images)
    for (std::size_t j = 0; j < p; ++j) acc += (im[j] - mean[j]) * (im[j] - mean[j]);
  return acc / static_cast<double>(n * p);
}

double reconstruction_mse(const Network& encoder, const Network& decoder, const ImageSet& set) {
  double acc = 0.0;
  for (const auto& im : set.images) acc += mse(decode(decoder, encode(encoder, im)), im).item();
  return acc / static_cast<double>(set.size());
}

void write_loss_history(const std::vector<double>& history, const std::filesystem::path& path) {
  std::ostringstream out;
  out.precision(17);
  out << "step,loss\n";
  for (std::size_t i = 0; i < history.size(); ++i) out << i << ',' << history[i] << '\n';
  write_file_atomic(path, out.str());
}

nlohmann::json AeArchitecture::to_json() const {
  return {{"variant", variant == EncoderVariant::ge0 ? "ge0" : "ge1"},
          {"depth", depth},
          {"filters", filters},
          {"m", m},
          {"decoder_layers", decoder_layers},
          {"decoder_filters", decoder_filters}};
}

AeResult train_ae_pipeline(const ImageSet& real, const Network* generator, const AeArchitecture& arch,
                           const AeConfig& cfg, std::size_t n_total) {
  cfg.validate();
  if (real.size() == 0) throw ContractError("train_ae_pipeline: no real images");
  const Shape& shape = real.shape();
  NetworkSpec enc = build_encoder_spec(arch.variant, arch.depth, arch.filters, arch.m, shape);
  NetworkSpec dec = build_decoder_spec(arch.m, arch.decoder_layers, arch.decoder_filters, shape);
  if (generator && cfg.fake_ratio > 0.0) {
    if (generator->spec().output_shape != shape)
      throw ShapeError("train_ae_pipeline: generator output " + to_string(generator->spec().output_shape) +
                       " differs from the images " + to_string(shape));
    Rng rng(mix_seed(cfg.seed, 4));
    return train_ae(augment_dataset(real, *generator, cfg.fake_ratio, n_total ? n_total : real.size(), rng), enc, dec,
                    cfg);
  }
  return train_ae(real, enc, dec, cfg);
}

}  // namespace ge

#include "ge/began.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ge/error.hpp"
#include "ge/optim.hpp"

namespace ge {

void BeganConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("began: gamma must be in (0,1]");
  if (!(lambda_k > 0.0)) throw ConfigError("began: lambda_k must be positive");
  if (!(k0 >= 0.0 && k0 <= 1.0)) throw ConfigError("began: k0 must be in [0,1]");
  if (!(learning_rate > 0.0)) throw ConfigError("began: learning rate must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("began: adam_beta1 must be in [0,1)");
  if (latent_dim < 1 || batch_size < 1) throw ConfigError("began: latent_dim and batch_size must be >= 1");
}

nlohmann::json BeganConfig::to_json() const {
  return {{"latent_dim", latent_dim}, {"gamma", gamma},   {"lambda_k", lambda_k},     {"k0", k0},
          {"learning_rate", learning_rate}, {"adam_beta1", adam_beta1}, {"steps", steps}, {"batch_size", batch_size}, {"seed", seed}};
}

Tensor sample_latent(std::size_t n, std::size_t k, Rng& rng) {
  if (n < 1 || k < 1) throw ContractError("sample_latent: n and k must be >= 1");
  std::vector<double> v(n * k);
  for (auto& x : v) x = rng.normal();
  return Tensor({n, k}, std::move(v));
}

Tensor disc_recon_loss(const Network& d, const Tensor& v) { return mean_abs_diff(forward(d, v), v); }

double update_k(double k, double gamma, double lambda_k, double l_real, double l_fake) {
  return std::clamp(k + lambda_k * (gamma * l_real - l_fake), 0.0, 1.0);
}

double convergence_measure(double l_real, double l_fake, double gamma) {
  return l_real + std::abs(gamma * l_real - l_fake);
}

BeganResult train_began(const ImageSet& data, const NetworkSpec& g_spec, const NetworkSpec& d_spec,
                        const BeganConfig& cfg, const BeganObserver& observer) {
  cfg.validate();
  if (data.size() == 0) throw ContractError("train_began: empty dataset");
  if (g_spec.input_shape != Shape{cfg.latent_dim})
    throw ShapeError("train_began: generator input " + to_string(g_spec.input_shape) + " does not match latent_dim");
  if (g_spec.output_shape != data.shape() || d_spec.input_shape != data.shape() || d_spec.output_shape != data.shape())
    throw ShapeError("train_began: generator/discriminator shapes do not match the data " + to_string(data.shape()));

  Network g = init_params(g_spec, mix_seed(cfg.seed, 1));
  Network d = init_params(d_spec, mix_seed(cfg.seed, 2));
  Rng rng(mix_seed(cfg.seed, 3));
  AdamState adam_g(cfg.learning_rate), adam_d(cfg.learning_rate);
  adam_g.beta1 = adam_d.beta1 = cfg.adam_beta1;
  double k = cfg.k0;
  std::vector<BeganRecord> history;
  history.reserve(cfg.steps);
  std::vector<std::size_t> idx(cfg.batch_size);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    try {
      for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(data.size()) - 1));
      const Tensor real = data.batch(idx);
      const Tensor fake = forward(g, sample_latent(cfg.batch_size, cfg.latent_dim, rng));

      double l_real = 0.0, l_fake = 0.0;
      {
        Tape tape;
        Network dw = d.watched(tape);
        Tensor lr = disc_recon_loss(dw, real), lf = disc_recon_loss(dw, fake);
        l_real = lr.item();
        l_fake = lf.item();
        auto grads = dw.gradients(tape.backward(sub(lr, scale(lf, k))));
        auto params = d.trainable_params();
        adam_step(adam_d, params, grads);
        d.set_trainable_params(std::move(params));
      }
      {
        const Tensor z = sample_latent(cfg.batch_size, cfg.latent_dim, rng);
        Tape tape;
        Network gw = g.watched(tape);
        auto grads = gw.gradients(tape.backward(disc_recon_loss(d, forward(gw, z))));
        auto params = g.trainable_params();
        adam_step(adam_g, params, grads);
        g.set_trainable_params(std::move(params));
      }
      k = update_k(k, cfg.gamma, cfg.lambda_k, l_real, l_fake);
      history.push_back({l_real, l_fake, k, convergence_measure(l_real, l_fake, cfg.gamma)});
      if (observer) observer(step, g, history.back());
    } catch (const NumericError& e) {
      throw TrainingError("began diverged at step " + std::to_string(step) + ": " + e.what());
    }
  }
  return {g.frozen_copy(), d.frozen_copy(), std::move(history)};
}

NetworkSpec build_discriminator_spec(int depth, int filters, int m, int decoder_layers, const Shape& image_shape) {
  return build_autoencoder_spec(build_encoder_spec(EncoderVariant::ge0, depth, filters, m, image_shape),
                                build_decoder_spec(m, decoder_layers, filters, image_shape, Activation::none),
                                NetworkLabel::discriminator);
}

Network extract_encoder(const Network& d) {
  const auto& spec = d.spec();
  if (spec.encoder_layers == 0 || spec.encoder_layers >= spec.layers.size())
    throw ContractError("extract_encoder: network is not an encoder+decoder");
  return d.slice(0, spec.encoder_layers, NetworkLabel::ge0).frozen_copy();
}

void write_began_history(const std::vector<BeganRecord>& history, const std::filesystem::path& path) {
  std::ostringstream out;
  out.precision(17);
  out << "step,L_real,L_fake,k_t,M\n";
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& r = history[i];
    out << i << ',' << r.l_real << ',' << r.l_fake << ',' << r.k << ',' << r.m << '\n';
  }
  write_file_atomic(path, out.str());
}

}  // namespace ge

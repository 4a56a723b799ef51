#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ge/tensor.hpp"

namespace ge {

// ---- layer primitives --------------------------------------------------------
//
// All image ops accept a single image [C,H,W] or a batch [N,C,H,W] and
// preserve that rank. Convolution is cross-correlation with zero padding.

// kernels [F,C,k,k], bias [F].
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, int stride,
              int padding);

// Adjoint of conv2d for the same kernels [C,F,k,k]: maps C channels to F
// channels, bias [F]. Output size (H-1)*stride - 2*padding + k + output_padding.
Tensor conv2d_transpose(const Tensor& input, const Tensor& kernels, const Tensor& bias, int stride,
                        int padding, int output_padding = 0);

Tensor upsample_nearest(const Tensor& input, int factor);
Tensor avgpool(const Tensor& input, int factor);

// x [N,in] or [in], weight [in,out], bias [out].
Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias);

enum class Activation { none, elu, tanh, sigmoid };
Tensor activate(const Tensor& x, Activation act);

// ---- architecture description --------------------------------------------

enum class LayerKind { conv, conv_transpose, upsample_nearest, avgpool, dense, activation };

struct LayerSpec {
  LayerKind kind = LayerKind::activation;
  int kernel = 0;
  int stride = 1;
  int padding = 0;
  int output_padding = 0;  // conv_transpose only
  int filters = 0;
  int in_width = 0;   // dense
  int out_width = 0;  // dense
  int factor = 0;     // upsample_nearest / avgpool
  Activation activation = Activation::none;
  Shape out_shape;    // dense: optional reshape of the output to a feature map

  static LayerSpec conv(int filters, int kernel, int stride, int padding, Activation act);
  static LayerSpec conv_transpose(int filters, int kernel, int stride, int padding,
                                  int output_padding, Activation act);
  static LayerSpec upsample(int factor);
  static LayerSpec pool(int factor);
  static LayerSpec dense(int in_width, int out_width, Activation act, Shape out_shape = {});
  static LayerSpec activation_only(Activation act);

  bool operator==(const LayerSpec&) const = default;
};

enum class NetworkLabel { ge0, ge1, generator, decoder, discriminator, custom };

struct NetworkSpec {
  std::vector<LayerSpec> layers;
  Shape input_shape;   // (C,H,W) or (width)
  Shape output_shape;  // (m) for encoders, (C,H,W) for image outputs
  NetworkLabel label = NetworkLabel::custom;
  // For autoencoder-shaped networks: number of leading layers forming the encoder.
  std::size_t encoder_layers = 0;

  bool operator==(const NetworkSpec&) const = default;
};

std::string to_string(LayerKind kind);
std::string to_string(Activation act);
std::string to_string(NetworkLabel label);
LayerKind layer_kind_from_string(const std::string& s);
Activation activation_from_string(const std::string& s);
NetworkLabel network_label_from_string(const std::string& s);

// Output shape after every layer (per sample). Throws ShapeError when the
// composition does not work out or the final shape differs from output_shape.
std::vector<Shape> infer_shapes(const NetworkSpec& spec);

// Parameter shapes of one layer given its input shape; empty for
// parameter-free layers. Order: kernel/weight, then bias.
std::vector<Shape> param_shapes(const LayerSpec& layer, const Shape& input);

// ---- networks --------------------------------------------------------------

class Network {
 public:
  Network() = default;
  // Validates the spec and the parameter shapes.
  Network(NetworkSpec spec, std::vector<Tensor> params);

  const NetworkSpec& spec() const { return spec_; }
  std::span<const Tensor> params() const { return params_; }
  std::vector<std::string> param_names() const;
  // Parameters of layer i.
  std::span<const Tensor> layer_params(std::size_t layer) const;
  // Per-sample output shape of every layer.
  const std::vector<Shape>& layer_shapes() const { return shapes_; }

  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }
  Network frozen_copy() const;

  void set_trainable(std::size_t param, bool trainable);
  bool trainable(std::size_t param) const { return trainable_.at(param); }

  // Trainable parameters in order (untracked copies).
  std::vector<Tensor> trainable_params() const;
  void set_trainable_params(std::vector<Tensor> values);

  // Copy whose trainable parameters are leaves of `tape`.
  Network watched(Tape& tape) const;
  // Gradients of the trainable parameters of a watched network, in order.
  std::vector<Tensor> gradients(const Gradients& grads) const;

  // Layers [begin, end) as a standalone network.
  Network slice(std::size_t begin, std::size_t end, NetworkLabel label) const;

  // FNV-1a over the parameter bytes.
  std::uint64_t param_hash() const;

 private:
  NetworkSpec spec_;
  std::vector<Tensor> params_;
  std::vector<Shape> shapes_;
  std::vector<std::size_t> layer_begin_;  // size layers+1
  std::vector<bool> trainable_;
  bool frozen_ = false;
};

// Forward pass over a single sample (shape == input_shape) or a batch.
Tensor forward(const Network& net, const Tensor& input);
// Forward through layers [begin, end) only.
Tensor forward_layers(const Network& net, const Tensor& input, std::size_t begin, std::size_t end);

// Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases.
Network init_params(const NetworkSpec& spec, std::uint64_t seed);

// ---- constructors ------------------------------------------------------------

enum class EncoderVariant { ge0, ge1 };

// Filters of conv layer n (1-based): n*f for GE1, ceil(n/3)*f for GE0.
int encoder_filters(EncoderVariant variant, int n, int f);

// d 3x3 conv+elu layers, 2x average pooling after every second conv, and a
// linear dense layer to an m-vector.
NetworkSpec build_encoder_spec(EncoderVariant variant, int d, int f, int m, const Shape& input_shape);
Network build_encoder(EncoderVariant variant, int d, int f, int m, const Shape& input_shape,
                      std::uint64_t seed);

// Dense latent -> (base_filters, H/2^u, W/2^u) map, then conv_layers 3x3
// convs with floor(conv_layers/2) nearest upsamplings (one after every odd
// conv but the last); elu on hidden convs, tanh on the output conv.
NetworkSpec build_generator_spec(int latent_dim, int conv_layers, int base_filters,
                                 const Shape& output_shape);
Network build_generator(int latent_dim, int conv_layers, int base_filters, const Shape& output_shape,
                        std::uint64_t seed);

// Same stack; the output activation is selectable.
NetworkSpec build_decoder_spec(int m, int conv_layers, int base_filters, const Shape& output_shape,
                               Activation output = Activation::tanh);
Network build_decoder(int m, int conv_layers, int base_filters, const Shape& output_shape, std::uint64_t seed,
                      Activation output = Activation::tanh);

// Encoder followed by decoder; encoder_layers marks the split.
NetworkSpec build_autoencoder_spec(const NetworkSpec& encoder, const NetworkSpec& decoder,
                                   NetworkLabel label);

}  // namespace ge

#include "ge/nn.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "ge/error.hpp"
#include "test_util.hpp"

namespace ge {
namespace {

using testing::dot;
using testing::random_tensor;

// Direct six-loop cross-correlation with zero padding.
Tensor conv_oracle(const Tensor& x, const Tensor& k, const Tensor& b, int s, int p) {
  const long c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const long f = k.shape()[0], ks = k.shape()[2];
  const long oh = (h + 2 * p - ks) / s + 1, ow = (w + 2 * p - ks) / s + 1;
  std::vector<double> out(f * oh * ow);
  for (long fo = 0; fo < f; ++fo)
    for (long oy = 0; oy < oh; ++oy)
      for (long ox = 0; ox < ow; ++ox) {
        double acc = b[fo];
        for (long ci = 0; ci < c; ++ci)
          for (long ky = 0; ky < ks; ++ky)
            for (long kx = 0; kx < ks; ++kx) {
              long iy = oy * s - p + ky, ix = ox * s - p + kx;
              if (iy < 0 || ix < 0 || iy >= h || ix >= w) continue;
              acc += k[((fo * c + ci) * ks + ky) * ks + kx] * x[(ci * h + iy) * w + ix];
            }
        out[(fo * oh + oy) * ow + ox] = acc;
      }
  return Tensor({static_cast<std::size_t>(f), static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)}, out);
}

TEST(Conv2d, UnitKernelIsIdentity) {
  Tensor x = random_tensor({1, 3, 3}, 1);
  auto y = conv2d(x, Tensor({1, 1, 1, 1}, {1.0}), Tensor::zeros({1}), 1, 0);
  EXPECT_EQ(y.to_vector(), x.to_vector());
}

TEST(Conv2d, ImpulseResponseIsFlippedKernel) {
  std::vector<double> img(25, 0.0);
  img[12] = 1.0;
  Tensor k = random_tensor({1, 1, 3, 3}, 2);
  auto y = conv2d(Tensor({1, 5, 5}, img), k, Tensor::zeros({1}), 1, 1);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) EXPECT_EQ(y[(1 + a) * 5 + (1 + b)], k[(2 - a) * 3 + (2 - b)]);
  EXPECT_EQ(y[0], 0.0);
}

TEST(Conv2d, MatchesLoopOracle) {
  Tensor x = random_tensor({2, 5, 5}, 3), k = random_tensor({3, 2, 3, 3}, 4), b = random_tensor({3}, 5);
  auto y = conv2d(x, k, b, 2, 1);
  auto ref = conv_oracle(x, k, b, 2, 1);
  ASSERT_EQ(y.shape(), (Shape{3, 3, 3}));
  EXPECT_LT(testing::max_abs_diff(y, ref), 1e-12);
}

TEST(Conv2d, BatchMatchesPerSample) {
  Tensor x = random_tensor({3, 2, 6, 6}, 6), k = random_tensor({4, 2, 3, 3}, 7), b = random_tensor({4}, 8);
  auto y = conv2d(x, k, b, 1, 1);
  for (std::size_t i = 0; i < 3; ++i) {
    auto yi = conv2d(reshape(slice_rows(x, i, i + 1), {2, 6, 6}), k, b, 1, 1);
    auto ref = conv_oracle(reshape(slice_rows(x, i, i + 1), {2, 6, 6}), k, b, 1, 1);
    EXPECT_LT(testing::max_abs_diff(reshape(slice_rows(y, i, i + 1), {4, 6, 6}), ref), 1e-12);
    EXPECT_LT(testing::max_abs_diff(yi, ref), 1e-12);
  }
}

TEST(Conv2d, ShapeErrors) {
  auto k = Tensor::zeros({1, 1, 3, 3});
  EXPECT_THROW(conv2d(Tensor::zeros({1, 16, 16}), k, Tensor::zeros({1}), 2, 1), ShapeError);
  EXPECT_THROW(conv2d(Tensor::zeros({1, 4, 4}), Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1}), 1, 0),
               ShapeError);
  EXPECT_THROW(conv2d(Tensor::zeros({2, 4, 4}), k, Tensor::zeros({1}), 1, 1), ShapeError);
}

TEST(Conv2dTranspose, AdjointOfConv) {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 * static_cast<int>(rng.uniform_int(0, 2)) + 1;
    const int s = static_cast<int>(rng.uniform_int(1, 3));
    const int p = static_cast<int>(rng.uniform_int(0, k / 2));
    const std::size_t c = rng.uniform_int(1, 3), f = rng.uniform_int(1, 3);
    const std::size_t oh = rng.uniform_int(1, 4), ow = rng.uniform_int(1, 4);
    const std::size_t h = (oh - 1) * s + k - 2 * p, w = (ow - 1) * s + k - 2 * p;
    Tensor kern = random_tensor({f, c, static_cast<std::size_t>(k), static_cast<std::size_t>(k)}, rng);
    Tensor u = random_tensor({c, h, w}, rng), v = random_tensor({f, oh, ow}, rng);
    auto cu = conv2d(u, kern, Tensor::zeros({f}), s, p);
    auto tv = conv2d_transpose(v, kern, Tensor::zeros({c}), s, p);
    ASSERT_EQ(tv.shape(), u.shape());
    EXPECT_NEAR(dot(cu, v), dot(u, tv), 1e-10) << "trial " << trial;
  }
}

TEST(Conv2dTranspose, ZeroInputGivesBias) {
  Tensor b({2}, {0.5, -1.5});
  auto y = conv2d_transpose(Tensor::zeros({3, 2, 2}), random_tensor({3, 2, 3, 3}, 1), b, 1, 1);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(y[i], 0.5);
    EXPECT_EQ(y[4 + i], -1.5);
  }
}

TEST(Conv2dTranspose, StrideTwoInsertsZeros) {
  auto y = conv2d_transpose(Tensor::full({1, 2, 2}, 1.0), Tensor({1, 1, 1, 1}, {1.0}), Tensor::zeros({1}), 2, 0,
                            1);
  ASSERT_EQ(y.shape(), (Shape{1, 4, 4}));
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(y[r * 4 + c], (r % 2 == 0 && c % 2 == 0) ? 1.0 : 0.0);
}

TEST(Resampling, UpsampleAndPool) {
  auto up = upsample_nearest(Tensor({1, 2, 2}, {1, 2, 3, 4}), 2);
  std::vector<double> want{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  EXPECT_EQ(up.to_vector(), want);

  Tensor x = random_tensor({2, 3, 5}, 3);
  EXPECT_EQ(avgpool(upsample_nearest(x, 2), 2).to_vector(), x.to_vector());
  EXPECT_EQ(avgpool(Tensor::full({1, 4, 4}, 1.0), 2).to_vector(), std::vector<double>(4, 1.0));
  EXPECT_THROW(avgpool(Tensor::zeros({1, 5, 4}), 2), ShapeError);
  EXPECT_THROW(upsample_nearest(x, 1), ShapeError);
}

TEST(LayerGradients, EveryKindPassesGradCheck) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = random_tensor({2, 2, 4, 4}, rng);
    Tensor k = random_tensor({3, 2, 3, 3}, rng), b = random_tensor({3}, rng);
    EXPECT_LT(grad_check([&](const Tensor& v) { return sq_l2(conv2d(v, k, b, 1, 1)); }, x), 1e-5);
    EXPECT_LT(grad_check([&](const Tensor& v) { return sq_l2(conv2d(x, v, b, 1, 1)); }, k), 1e-5);
    EXPECT_LT(grad_check([&](const Tensor& v) { return sq_l2(conv2d(x, k, v, 1, 1)); }, b), 1e-5);

    Tensor kt = random_tensor({2, 3, 3, 3}, rng), bt = random_tensor({3}, rng);
    EXPECT_LT(grad_check([&](const Tensor& v) { return sq_l2(conv2d_transpose(v, kt, bt, 2, 1, 1)); }, x), 1e-5);
    EXPECT_LT(grad_check([&](const Tensor& v) { return sq_l2(conv2d_transpose(x, v, bt, 2, 1, 1)); }, kt), 1e-5);
    EXPECT_LT(grad_check([&](const Tensor& v) { return sq_l2(conv2d_transpose(x, kt, v, 2, 1, 1)); }, bt), 1e-5);

    EXPECT_LT(grad_check([&](const Tensor& v) { return sq_l2(tanh(upsample_nearest(v, 2))); }, x), 1e-5);
    EXPECT_LT(grad_check([&](const Tensor& v) { return sq_l2(tanh(avgpool(v, 2))); }, x), 1e-5);

    Tensor d = random_tensor({3, 5}, rng), w = random_tensor({5, 4}, rng), db = random_tensor({4}, rng);
    EXPECT_LT(grad_check([&](const Tensor& v) { return sq_l2(dense(v, w, db)); }, d), 1e-5);
    EXPECT_LT(grad_check([&](const Tensor& v) { return sq_l2(dense(d, v, db)); }, w), 1e-5);
    EXPECT_LT(grad_check([&](const Tensor& v) { return sq_l2(dense(d, w, v)); }, db), 1e-5);
  }
}

TEST(BuildEncoder, FilterRule) {
  auto spec = build_encoder_spec(EncoderVariant::ge1, 4, 16, 128, {3, 64, 64});
  std::vector<int> filters;
  for (const auto& l : spec.layers)
    if (l.kind == LayerKind::conv) filters.push_back(l.filters);
  EXPECT_EQ(filters, (std::vector<int>{16, 32, 48, 64}));

  auto ge0 = build_encoder_spec(EncoderVariant::ge0, 12, 64, 128, {3, 64, 64});
  filters.clear();
  for (const auto& l : ge0.layers)
    if (l.kind == LayerKind::conv) filters.push_back(l.filters);
  ASSERT_EQ(filters.size(), 12u);
  EXPECT_EQ(filters.front(), 64);
  EXPECT_EQ(filters.back(), 256);
  EXPECT_EQ(ge0.output_shape, (Shape{128}));
}

TEST(BuildEncoder, MinimalNetwork) {
  auto net = build_encoder(EncoderVariant::ge1, 1, 1, 1, {1, 4, 4}, 3);
  ASSERT_EQ(net.spec().layers.size(), 2u);
  EXPECT_EQ(net.spec().layers[0].kind, LayerKind::conv);
  EXPECT_EQ(net.spec().layers[1].kind, LayerKind::dense);
  auto y = forward(net, random_tensor({1, 4, 4}, 1));
  EXPECT_EQ(y.shape(), (Shape{1}));
}

TEST(BuildEncoder, TooSmallInput) {
  EXPECT_THROW(build_encoder_spec(EncoderVariant::ge1, 12, 4, 8, {1, 16, 16}), ShapeError);
  EXPECT_THROW(build_encoder_spec(EncoderVariant::ge1, 0, 4, 8, {1, 16, 16}), ContractError);
}

TEST(BuildGenerator, ShapeArithmetic) {
  auto g = build_generator(8, 4, 6, {1, 16, 16}, 11);
  int ups = 0;
  for (const auto& l : g.spec().layers) ups += l.kind == LayerKind::upsample_nearest;
  EXPECT_EQ(ups, 2);
  EXPECT_EQ(g.spec().layers[0].out_shape, (Shape{6, 4, 4}));
  auto y = forward(g, Tensor::full({8}, 1.0));
  ASSERT_EQ(y.shape(), (Shape{1, 16, 16}));
  for (double v : y.data()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  auto y0 = forward(g, Tensor::zeros({8}));
  EXPECT_EQ(y0.shape(), (Shape{1, 16, 16}));
}

TEST(BuildGenerator, FullScaleLatentConvention) {
  auto g64 = build_generator_spec(128, 9, 4, {3, 64, 64});
  auto g128 = build_generator_spec(64, 11, 4, {3, 128, 128});
  EXPECT_EQ(g64.input_shape, (Shape{128}));
  EXPECT_EQ(g128.input_shape, (Shape{64}));
  EXPECT_THROW(build_generator_spec(8, 4, 4, {1, 10, 10}), ShapeError);
}

TEST(BuildDecoder, InterfaceAndRoundTripShape) {
  auto enc = build_encoder(EncoderVariant::ge1, 2, 3, 8, {1, 8, 8}, 1);
  auto dec = build_decoder(8, 2, 3, {1, 8, 8}, 2);
  EXPECT_EQ(dec.spec().input_shape, (Shape{8}));
  Tensor x = random_tensor({1, 8, 8}, 3);
  EXPECT_EQ(forward(dec, forward(enc, x)).shape(), x.shape());
}

TEST(Forward, EmptyNetworkIsIdentity) {
  NetworkSpec spec;
  spec.input_shape = {2, 3, 3};
  spec.output_shape = {2, 3, 3};
  Network net(spec, {});
  Tensor x = random_tensor({2, 3, 3}, 1);
  EXPECT_EQ(forward(net, x).to_vector(), x.to_vector());
}

TEST(Forward, DeterministicAndShapeChecked) {
  auto net = build_encoder(EncoderVariant::ge1, 2, 2, 4, {1, 8, 8}, 5).frozen_copy();
  Tensor x = random_tensor({1, 8, 8}, 2);
  EXPECT_EQ(forward(net, x).to_vector(), forward(net, x).to_vector());
  EXPECT_THROW(forward(net, Tensor::zeros({1, 4, 4})), ShapeError);
  auto batch = forward(net, reshape(x, {1, 1, 8, 8}));
  EXPECT_EQ(batch.shape(), (Shape{1, 4}));
}

TEST(Forward, CompositeGradientMatchesFiniteDifferences) {
  auto enc = build_encoder(EncoderVariant::ge1, 2, 2, 3, {1, 4, 4}, 7);
  auto gen = build_generator(3, 2, 2, {1, 4, 4}, 8);
  Tensor target = random_tensor({3}, 9);
  EXPECT_LT(grad_check([&](const Tensor& z) { return mse(forward(enc, forward(gen, z)), target); },
                       random_tensor({3}, 10)),
            1e-5);

  // Gradient with respect to parameters through the watched copy.
  Tensor x = random_tensor({2, 1, 4, 4}, 11);
  auto loss_of = [&](const Network& net) { return mse(forward(net, x), Tensor::zeros({2, 3})); };
  std::vector<Tensor> analytic;
  {
    Tape tape;
    auto w = enc.watched(tape);
    analytic = w.gradients(tape.backward(loss_of(w)));
  }
  auto params = enc.trainable_params();
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto base = params[p].to_vector();
    for (std::size_t i = 0; i < base.size(); i += 3) {
      auto probe = params;
      auto v = base;
      v[i] += 1e-5;
      probe[p] = Tensor(params[p].shape(), v);
      Network up = enc;
      up.set_trainable_params(probe);
      v[i] -= 2e-5;
      probe[p] = Tensor(params[p].shape(), v);
      Network down = enc;
      down.set_trainable_params(probe);
      double fd = (loss_of(up).item() - loss_of(down).item()) / 2e-5;
      EXPECT_LT(std::abs(fd - analytic[p][i]) / std::max(1.0, std::abs(fd)), 1e-5);
    }
  }
}

TEST(InitParams, DeterministicGlorot) {
  NetworkSpec spec;
  spec.input_shape = {100};
  spec.output_shape = {100};
  spec.layers = {LayerSpec::dense(100, 100, Activation::none)};
  auto a = init_params(spec, 42), b = init_params(spec, 42);
  EXPECT_EQ(a.param_hash(), b.param_hash());
  EXPECT_NE(a.param_hash(), init_params(spec, 43).param_hash());
  for (double v : a.params()[1].data()) EXPECT_EQ(v, 0.0);
  const double s = std::sqrt(6.0 / 200.0);
  double sq = 0.0;
  for (double v : a.params()[0].data()) {
    EXPECT_LE(std::abs(v), s);
    sq += v * v;
  }
  const double sd = std::sqrt(sq / 1e4);
  EXPECT_NEAR(sd, s / std::sqrt(3.0), 0.2 * s / std::sqrt(3.0));
}

TEST(Network, FrozenRejectsUpdates) {
  auto net = build_encoder(EncoderVariant::ge1, 1, 1, 1, {1, 4, 4}, 1).frozen_copy();
  EXPECT_THROW(net.set_trainable_params(net.trainable_params()), ContractError);
}

TEST(Network, SliceMatchesPartialForward) {
  auto enc = build_encoder_spec(EncoderVariant::ge0, 2, 2, 4, {1, 8, 8});
  auto dec = build_decoder_spec(4, 2, 2, {1, 8, 8});
  auto ae = init_params(build_autoencoder_spec(enc, dec, NetworkLabel::discriminator), 3);
  EXPECT_EQ(ae.spec().encoder_layers, enc.layers.size());
  auto half = ae.slice(0, ae.spec().encoder_layers, NetworkLabel::ge0);
  Tensor x = random_tensor({1, 8, 8}, 4);
  EXPECT_EQ(forward(half, x).to_vector(), forward_layers(ae, x, 0, ae.spec().encoder_layers).to_vector());
  EXPECT_EQ(forward(half, x).shape(), (Shape{4}));
}

TEST(Network, ParameterShapesValidated) {
  auto spec = build_encoder_spec(EncoderVariant::ge1, 1, 1, 1, {1, 4, 4});
  EXPECT_THROW(Network(spec, {}), ShapeError);
}

}  // namespace
}  // namespace ge

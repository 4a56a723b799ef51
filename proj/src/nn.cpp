#include "ge/nn.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstring>

#include "ge/error.hpp"
#include "ge/rng.hpp"

namespace ge {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

struct ImageDims {
  std::size_t n, c, h, w;
  bool batched;
};

ImageDims image_dims(const char* op, const Tensor& x) {
  const auto& s = x.shape();
  if (s.size() == 3) return {1, s[0], s[1], s[2], false};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3], true};
  throw ShapeError(std::string(op) + ": expected [C,H,W] or [N,C,H,W], got " + to_string(s));
}

Shape image_shape(const ImageDims& d, std::size_t c, std::size_t h, std::size_t w) {
  if (d.batched) return {d.n, c, h, w};
  return {c, h, w};
}

// Patch geometry: an image (n, c, h, w) read through k x k windows at
// stride s with zero padding p gives an (oh, ow) grid.
struct Geometry {
  std::size_t n, c, h, w, k, s, p, oh, ow;
  std::size_t rows() const { return c * k * k; }
  std::size_t cols() const { return n * oh * ow; }
};

// col[(c,ky,kx), (n,oy,ox)]
void im2col(const double* x, const Geometry& g, double* col) {
  const std::size_t cols = g.cols(), plane = g.oh * g.ow;
  std::memset(col, 0, sizeof(double) * g.rows() * cols);
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = col + ((c * g.k + ky) * g.k + kx) * cols;
        for (std::size_t n = 0; n < g.n; ++n) {
          const double* img = x + (n * g.c + c) * g.h * g.w;
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            long iy = static_cast<long>(oy * g.s + ky) - static_cast<long>(g.p);
            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
            double* dst = row + n * plane + oy * g.ow;
            const double* src = img + iy * g.w;
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
              long ix = static_cast<long>(ox * g.s + kx) - static_cast<long>(g.p);
              if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ox] = src[ix];
            }
          }
        }
      }
}

void col2im(const double* col, const Geometry& g, double* x) {
  const std::size_t cols = g.cols(), plane = g.oh * g.ow;
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = col + ((c * g.k + ky) * g.k + kx) * cols;
        for (std::size_t n = 0; n < g.n; ++n) {
          double* img = x + (n * g.c + c) * g.h * g.w;
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            long iy = static_cast<long>(oy * g.s + ky) - static_cast<long>(g.p);
            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
            const double* src = row + n * plane + oy * g.ow;
            double* dst = img + iy * g.w;
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
              long ix = static_cast<long>(ox * g.s + kx) - static_cast<long>(g.p);
              if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[ox];
            }
          }
        }
      }
}

// [N,C,HW] <-> [C, N*HW]
std::vector<double> to_channel_major(std::span<const double> x, std::size_t n, std::size_t c,
                                     std::size_t hw) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      std::memcpy(out.data() + ch * n * hw + i * hw, x.data() + (i * c + ch) * hw, sizeof(double) * hw);
  return out;
}

void from_channel_major(const double* m, std::size_t n, std::size_t c, std::size_t hw, double* out,
                        bool accumulate) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* src = m + ch * n * hw + i * hw;
      double* dst = out + (i * c + ch) * hw;
      if (accumulate) {
        for (std::size_t j = 0; j < hw; ++j) dst[j] += src[j];
      } else {
        std::memcpy(dst, src, sizeof(double) * hw);
      }
    }
}

std::size_t conv_out(const char* op, std::size_t in, int k, int stride, int padding) {
  long span = static_cast<long>(in) + 2L * padding - k;
  if (span < 0) {
    throw ShapeError(std::string(op) + ": input extent " + std::to_string(in) + " smaller than kernel");
  }
  if (span % stride != 0) {
    throw ShapeError(std::string(op) + ": output size (" + std::to_string(in) + " + 2*" +
                     std::to_string(padding) + " - " + std::to_string(k) + ")/" +
                     std::to_string(stride) + " + 1 is not integral");
  }
  return static_cast<std::size_t>(span / stride + 1);
}

void check_conv_args(const char* op, int k, int stride, int padding) {
  if (k <= 0 || k % 2 == 0) throw ShapeError(std::string(op) + ": kernel size must be odd and positive");
  if (stride <= 0) throw ShapeError(std::string(op) + ": stride must be positive");
  if (padding < 0) throw ShapeError(std::string(op) + ": padding must be non-negative");
}

std::uint64_t fnv1a(std::uint64_t h, const void* bytes, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

// ---- primitives ---------------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, int stride,
              int padding) {
  auto d = image_dims("conv2d", input);
  const auto& ks = kernels.shape();
  if (ks.size() != 4 || ks[2] != ks[3]) throw ShapeError("conv2d: kernels must be [F,C,k,k]");
  if (ks[1] != d.c) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(ks[1]) + " channels, input has " +
                     std::to_string(d.c));
  }
  const auto f = ks[0];
  const int k = static_cast<int>(ks[2]);
  check_conv_args("conv2d", k, stride, padding);
  if (bias.shape() != Shape{f}) throw ShapeError("conv2d: bias must be [F]");

  Geometry g{d.n, d.c, d.h, d.w, ks[2], static_cast<std::size_t>(stride),
             static_cast<std::size_t>(padding), conv_out("conv2d", d.h, k, stride, padding),
             conv_out("conv2d", d.w, k, stride, padding)};
  auto col = std::make_shared<std::vector<double>>(g.rows() * g.cols());
  im2col(input.data().data(), g, col->data());

  const std::size_t plane = g.oh * g.ow;
  RowMatrix out_m = ConstMap(kernels.data().data(), f, g.rows()) * ConstMap(col->data(), g.rows(), g.cols());
  std::vector<double> out(d.n * f * plane);
  from_channel_major(out_m.data(), d.n, f, plane, out.data(), false);
  auto b = bias.data();
  for (std::size_t i = 0; i < d.n; ++i)
    for (std::size_t ch = 0; ch < f; ++ch) {
      double* p = out.data() + (i * f + ch) * plane;
      for (std::size_t j = 0; j < plane; ++j) p[j] += b[ch];
    }

  return record_op(
      "conv2d", image_shape(d, f, g.oh, g.ow), std::move(out), {&input, &kernels, &bias},
      [g, f, col, kernels, plane](std::span<const double> grad, std::span<const std::span<double>> gi) {
        auto gm = to_channel_major(grad, g.n, f, plane);
        ConstMap gmat(gm.data(), f, g.cols());
        if (!gi[0].empty()) {
          RowMatrix dcol = ConstMap(kernels.data().data(), f, g.rows()).transpose() * gmat;
          col2im(dcol.data(), g, gi[0].data());
        }
        if (!gi[1].empty()) {
          MutMap(gi[1].data(), f, g.rows()).noalias() +=
              gmat * ConstMap(col->data(), g.rows(), g.cols()).transpose();
        }
        if (!gi[2].empty()) {
          for (std::size_t ch = 0; ch < f; ++ch) gi[2][ch] += gmat.row(ch).sum();
        }
      });
}

Tensor conv2d_transpose(const Tensor& input, const Tensor& kernels, const Tensor& bias, int stride,
                        int padding, int output_padding) {
  auto d = image_dims("conv2d_transpose", input);
  const auto& ks = kernels.shape();
  if (ks.size() != 4 || ks[2] != ks[3]) {
    throw ShapeError("conv2d_transpose: kernels must be [C,F,k,k]");
  }
  if (ks[0] != d.c) throw ShapeError("conv2d_transpose: kernel/input channel mismatch");
  const auto f = ks[1];
  const int k = static_cast<int>(ks[2]);
  check_conv_args("conv2d_transpose", k, stride, padding);
  if (output_padding < 0 || output_padding >= stride) {
    throw ShapeError("conv2d_transpose: output_padding must be in [0, stride)");
  }
  if (bias.shape() != Shape{f}) throw ShapeError("conv2d_transpose: bias must be [F]");
  long oh = (static_cast<long>(d.h) - 1) * stride - 2L * padding + k + output_padding;
  long ow = (static_cast<long>(d.w) - 1) * stride - 2L * padding + k + output_padding;
  if (oh <= 0 || ow <= 0) throw ShapeError("conv2d_transpose: non-positive output size");

  // Geometry of the forward conv this op is the adjoint of.
  Geometry g{d.n, f, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), ks[2],
             static_cast<std::size_t>(stride), static_cast<std::size_t>(padding), d.h, d.w};
  const std::size_t in_plane = d.h * d.w, out_plane = g.h * g.w;
  auto vm = std::make_shared<std::vector<double>>(to_channel_major(input.data(), d.n, d.c, in_plane));
  RowMatrix col = ConstMap(kernels.data().data(), d.c, g.rows()).transpose() *
                  ConstMap(vm->data(), d.c, g.cols());
  std::vector<double> out(d.n * f * out_plane, 0.0);
  col2im(col.data(), g, out.data());
  auto b = bias.data();
  for (std::size_t i = 0; i < d.n; ++i)
    for (std::size_t ch = 0; ch < f; ++ch) {
      double* p = out.data() + (i * f + ch) * out_plane;
      for (std::size_t j = 0; j < out_plane; ++j) p[j] += b[ch];
    }

  const std::size_t c = d.c;
  return record_op(
      "conv2d_transpose", image_shape(d, f, g.h, g.w), std::move(out), {&input, &kernels, &bias},
      [g, c, f, vm, kernels, in_plane, out_plane](std::span<const double> grad,
                                                  std::span<const std::span<double>> gi) {
        std::vector<double> gcol(g.rows() * g.cols());
        im2col(grad.data(), g, gcol.data());
        ConstMap gc(gcol.data(), g.rows(), g.cols());
        if (!gi[0].empty()) {
          RowMatrix dv = ConstMap(kernels.data().data(), c, g.rows()) * gc;
          from_channel_major(dv.data(), g.n, c, in_plane, gi[0].data(), true);
        }
        if (!gi[1].empty()) {
          MutMap(gi[1].data(), c, g.rows()).noalias() += ConstMap(vm->data(), c, g.cols()) * gc.transpose();
        }
        if (!gi[2].empty()) {
          for (std::size_t i = 0; i < g.n; ++i)
            for (std::size_t ch = 0; ch < f; ++ch) {
              const double* p = grad.data() + (i * f + ch) * out_plane;
              double s = 0.0;
              for (std::size_t j = 0; j < out_plane; ++j) s += p[j];
              gi[2][ch] += s;
            }
        }
      });
}

Tensor upsample_nearest(const Tensor& input, int factor) {
  if (factor < 2) throw ShapeError("upsample_nearest: factor must be >= 2");
  auto d = image_dims("upsample_nearest", input);
  const std::size_t fct = factor, oh = d.h * fct, ow = d.w * fct;
  std::vector<double> out(d.n * d.c * oh * ow);
  auto x = input.data();
  for (std::size_t p = 0; p < d.n * d.c; ++p)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx)
        out[(p * oh + y) * ow + xx] = x[(p * d.h + y / fct) * d.w + xx / fct];
  return record_op("upsample_nearest", image_shape(d, d.c, oh, ow), std::move(out), {&input},
                   [d, fct, oh, ow](std::span<const double> g, std::span<const std::span<double>> gi) {
                     for (std::size_t p = 0; p < d.n * d.c; ++p)
                       for (std::size_t y = 0; y < oh; ++y)
                         for (std::size_t xx = 0; xx < ow; ++xx)
                           gi[0][(p * d.h + y / fct) * d.w + xx / fct] += g[(p * oh + y) * ow + xx];
                   });
}

Tensor avgpool(const Tensor& input, int factor) {
  if (factor < 2) throw ShapeError("avgpool: factor must be >= 2");
  auto d = image_dims("avgpool", input);
  const std::size_t fct = factor;
  if (d.h % fct != 0 || d.w % fct != 0) {
    throw ShapeError("avgpool: " + std::to_string(d.h) + "x" + std::to_string(d.w) +
                     " not divisible by " + std::to_string(fct));
  }
  const std::size_t oh = d.h / fct, ow = d.w / fct;
  const double inv = 1.0 / static_cast<double>(fct * fct);
  std::vector<double> out(d.n * d.c * oh * ow, 0.0);
  auto x = input.data();
  for (std::size_t p = 0; p < d.n * d.c; ++p)
    for (std::size_t y = 0; y < d.h; ++y)
      for (std::size_t xx = 0; xx < d.w; ++xx)
        out[(p * oh + y / fct) * ow + xx / fct] += x[(p * d.h + y) * d.w + xx];
  for (auto& v : out) v *= inv;
  return record_op("avgpool", image_shape(d, d.c, oh, ow), std::move(out), {&input},
                   [d, fct, oh, ow, inv](std::span<const double> g, std::span<const std::span<double>> gi) {
                     for (std::size_t p = 0; p < d.n * d.c; ++p)
                       for (std::size_t y = 0; y < d.h; ++y)
                         for (std::size_t xx = 0; xx < d.w; ++xx)
                           gi[0][(p * d.h + y) * d.w + xx] += inv * g[(p * oh + y / fct) * ow + xx / fct];
                   });
}

Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2) throw ShapeError("dense: weight must be [in,out]");
  const std::size_t in = weight.shape()[0], outw = weight.shape()[1];
  if (bias.shape() != Shape{outw}) throw ShapeError("dense: bias must be [out]");
  std::size_t n;
  Shape out_shape;
  if (x.rank() == 1 && x.shape()[0] == in) {
    n = 1;
    out_shape = {outw};
  } else if (x.rank() == 2 && x.shape()[1] == in) {
    n = x.shape()[0];
    out_shape = {n, outw};
  } else {
    throw ShapeError("dense: input " + to_string(x.shape()) + " does not match width " + std::to_string(in));
  }
  std::vector<double> out(n * outw);
  MutMap mo(out.data(), n, outw);
  mo.noalias() = ConstMap(x.data().data(), n, in) * ConstMap(weight.data().data(), in, outw);
  auto b = bias.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < outw; ++j) mo(i, j) += b[j];
  return record_op("dense", std::move(out_shape), std::move(out), {&x, &weight, &bias},
                   [x, weight, n, in, outw](std::span<const double> g, std::span<const std::span<double>> gi) {
                     ConstMap mg(g.data(), n, outw);
                     if (!gi[0].empty())
                       MutMap(gi[0].data(), n, in).noalias() +=
                           mg * ConstMap(weight.data().data(), in, outw).transpose();
                     if (!gi[1].empty())
                       MutMap(gi[1].data(), in, outw).noalias() +=
                           ConstMap(x.data().data(), n, in).transpose() * mg;
                     if (!gi[2].empty())
                       for (std::size_t j = 0; j < outw; ++j) gi[2][j] += mg.col(j).sum();
                   });
}

Tensor activate(const Tensor& x, Activation act) {
  switch (act) {
    case Activation::none: return x;
    case Activation::elu: return elu(x);
    case Activation::tanh: return tanh(x);
    case Activation::sigmoid: return sigmoid(x);
  }
  return x;
}

// ---- specs ------------------------------------------------------------------

LayerSpec LayerSpec::conv(int filters, int kernel, int stride, int padding, Activation act) {
  LayerSpec l;
  l.kind = LayerKind::conv;
  l.filters = filters;
  l.kernel = kernel;
  l.stride = stride;
  l.padding = padding;
  l.activation = act;
  return l;
}

LayerSpec LayerSpec::conv_transpose(int filters, int kernel, int stride, int padding,
                                    int output_padding, Activation act) {
  LayerSpec l = conv(filters, kernel, stride, padding, act);
  l.kind = LayerKind::conv_transpose;
  l.output_padding = output_padding;
  return l;
}

LayerSpec LayerSpec::upsample(int factor) {
  LayerSpec l;
  l.kind = LayerKind::upsample_nearest;
  l.factor = factor;
  return l;
}

LayerSpec LayerSpec::pool(int factor) {
  LayerSpec l;
  l.kind = LayerKind::avgpool;
  l.factor = factor;
  return l;
}

LayerSpec LayerSpec::dense(int in_width, int out_width, Activation act, Shape out_shape) {
  LayerSpec l;
  l.kind = LayerKind::dense;
  l.in_width = in_width;
  l.out_width = out_width;
  l.activation = act;
  l.out_shape = std::move(out_shape);
  return l;
}

LayerSpec LayerSpec::activation_only(Activation act) {
  LayerSpec l;
  l.kind = LayerKind::activation;
  l.activation = act;
  return l;
}

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::conv_transpose: return "conv_transpose";
    case LayerKind::upsample_nearest: return "upsample_nearest";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::dense: return "dense";
    case LayerKind::activation: return "activation";
  }
  return "?";
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::none: return "none";
    case Activation::elu: return "elu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

std::string to_string(NetworkLabel label) {
  switch (label) {
    case NetworkLabel::ge0: return "GE0";
    case NetworkLabel::ge1: return "GE1";
    case NetworkLabel::generator: return "generator";
    case NetworkLabel::decoder: return "decoder";
    case NetworkLabel::discriminator: return "discriminator";
    case NetworkLabel::custom: return "custom";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
  for (auto k : {LayerKind::conv, LayerKind::conv_transpose, LayerKind::upsample_nearest,
                 LayerKind::avgpool, LayerKind::dense, LayerKind::activation}) {
    if (to_string(k) == s) return k;
  }
  throw FormatError("unknown layer kind '" + s + "'");
}

Activation activation_from_string(const std::string& s) {
  for (auto a : {Activation::none, Activation::elu, Activation::tanh, Activation::sigmoid}) {
    if (to_string(a) == s) return a;
  }
  throw FormatError("unknown activation '" + s + "'");
}

NetworkLabel network_label_from_string(const std::string& s) {
  for (auto l : {NetworkLabel::ge0, NetworkLabel::ge1, NetworkLabel::generator, NetworkLabel::decoder,
                 NetworkLabel::discriminator, NetworkLabel::custom}) {
    if (to_string(l) == s) return l;
  }
  throw FormatError("unknown network label '" + s + "'");
}

namespace {

Shape next_shape(const LayerSpec& l, const Shape& in, std::size_t index) {
  const std::string where = "layer " + std::to_string(index) + " (" + to_string(l.kind) + ")";
  auto need_image = [&] {
    if (in.size() != 3) throw ShapeError(where + ": expects a [C,H,W] input, got " + to_string(in));
  };
  switch (l.kind) {
    case LayerKind::conv: {
      need_image();
      check_conv_args(where.c_str(), l.kernel, l.stride, l.padding);
      if (l.filters <= 0) throw ShapeError(where + ": filters must be positive");
      return {static_cast<std::size_t>(l.filters), conv_out(where.c_str(), in[1], l.kernel, l.stride, l.padding),
              conv_out(where.c_str(), in[2], l.kernel, l.stride, l.padding)};
    }
    case LayerKind::conv_transpose: {
      need_image();
      check_conv_args(where.c_str(), l.kernel, l.stride, l.padding);
      if (l.filters <= 0) throw ShapeError(where + ": filters must be positive");
      if (l.output_padding < 0 || l.output_padding >= l.stride) throw ShapeError(where + ": bad output_padding");
      long oh = (static_cast<long>(in[1]) - 1) * l.stride - 2L * l.padding + l.kernel + l.output_padding;
      long ow = (static_cast<long>(in[2]) - 1) * l.stride - 2L * l.padding + l.kernel + l.output_padding;
      if (oh <= 0 || ow <= 0) throw ShapeError(where + ": non-positive output size");
      return {static_cast<std::size_t>(l.filters), static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)};
    }
    case LayerKind::upsample_nearest:
      need_image();
      if (l.factor < 2) throw ShapeError(where + ": factor must be >= 2");
      return {in[0], in[1] * l.factor, in[2] * l.factor};
    case LayerKind::avgpool:
      need_image();
      if (l.factor < 2) throw ShapeError(where + ": factor must be >= 2");
      if (in[1] % l.factor != 0 || in[2] % l.factor != 0) {
        throw ShapeError(where + ": " + to_string(in) + " not divisible by " + std::to_string(l.factor));
      }
      return {in[0], in[1] / l.factor, in[2] / l.factor};
    case LayerKind::dense: {
      if (l.in_width <= 0 || l.out_width <= 0) throw ShapeError(where + ": widths must be positive");
      if (numel(in) != static_cast<std::size_t>(l.in_width)) {
        throw ShapeError(where + ": input " + to_string(in) + " has " + std::to_string(numel(in)) +
                         " values, layer expects " + std::to_string(l.in_width));
      }
      if (!l.out_shape.empty()) {
        if (numel(l.out_shape) != static_cast<std::size_t>(l.out_width)) {
          throw ShapeError(where + ": out_shape does not match out_width");
        }
        return l.out_shape;
      }
      return {static_cast<std::size_t>(l.out_width)};
    }
    case LayerKind::activation:
      return in;
  }
  throw ShapeError(where + ": unknown kind");
}

}  // namespace

std::vector<Shape> infer_shapes(const NetworkSpec& spec) {
  if (spec.input_shape.empty()) throw ShapeError("network input shape is empty");
  std::vector<Shape> shapes;
  Shape cur = spec.input_shape;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    cur = next_shape(spec.layers[i], cur, i);
    shapes.push_back(cur);
  }
  if (cur != spec.output_shape) {
    throw ShapeError("network produces " + to_string(cur) + " but declares output " +
                     to_string(spec.output_shape));
  }
  if (spec.encoder_layers > spec.layers.size()) throw ShapeError("encoder_layers exceeds layer count");
  return shapes;
}

std::vector<Shape> param_shapes(const LayerSpec& l, const Shape& in) {
  const std::size_t k = l.kernel, f = l.filters;
  switch (l.kind) {
    case LayerKind::conv: return {{f, in[0], k, k}, {f}};
    case LayerKind::conv_transpose: return {{in[0], f, k, k}, {f}};
    case LayerKind::dense:
      return {{static_cast<std::size_t>(l.in_width), static_cast<std::size_t>(l.out_width)},
              {static_cast<std::size_t>(l.out_width)}};
    default: return {};
  }
}

// ---- Network ------------------------------------------------------------------

Network::Network(NetworkSpec spec, std::vector<Tensor> params)
    : spec_(std::move(spec)), params_(std::move(params)) {
  shapes_ = infer_shapes(spec_);
  const auto& shapes = shapes_;
  layer_begin_.push_back(0);
  std::size_t expected = 0;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const Shape& in = i == 0 ? spec_.input_shape : shapes[i - 1];
    for (const auto& ps : param_shapes(spec_.layers[i], in)) {
      if (expected >= params_.size() || params_[expected].shape() != ps) {
        throw ShapeError("parameter " + std::to_string(expected) + " of layer " + std::to_string(i) +
                         " should have shape " + to_string(ps));
      }
      ++expected;
    }
    layer_begin_.push_back(expected);
  }
  if (expected != params_.size()) throw ShapeError("too many parameter tensors for spec");
  for (auto& p : params_) p = p.detached();
  trainable_.assign(params_.size(), true);
}

std::vector<std::string> Network::param_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const bool conv_like = spec_.layers[i].kind != LayerKind::dense;
    for (std::size_t j = layer_begin_[i]; j < layer_begin_[i + 1]; ++j) {
      std::string role = j == layer_begin_[i] ? (conv_like ? "kernel" : "weight") : "bias";
      names.push_back("layer" + std::to_string(i) + "." + role);
    }
  }
  return names;
}

std::span<const Tensor> Network::layer_params(std::size_t layer) const {
  return std::span<const Tensor>(params_).subspan(layer_begin_.at(layer),
                                                  layer_begin_.at(layer + 1) - layer_begin_[layer]);
}

Network Network::frozen_copy() const {
  Network copy = *this;
  copy.frozen_ = true;
  return copy;
}

void Network::set_trainable(std::size_t param, bool trainable) {
  if (frozen_) throw ContractError("set_trainable on a frozen network");
  trainable_.at(param) = trainable;
}

std::vector<Tensor> Network::trainable_params() const {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (trainable_[i]) out.push_back(params_[i].detached());
  return out;
}

void Network::set_trainable_params(std::vector<Tensor> values) {
  if (frozen_) throw ContractError("cannot update parameters of a frozen network");
  std::size_t k = 0;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!trainable_[i]) continue;
    if (k >= values.size() || values[k].shape() != params_[i].shape()) {
      throw DimensionError("set_trainable_params: value " + std::to_string(k) + " has wrong shape");
    }
    params_[i] = values[k++].detached();
  }
  if (k != values.size()) throw DimensionError("set_trainable_params: too many values");
}

Network Network::watched(Tape& tape) const {
  Network copy = *this;
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (trainable_[i] && !frozen_) copy.params_[i] = tape.watch(params_[i]);
  return copy;
}

std::vector<Tensor> Network::gradients(const Gradients& grads) const {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (trainable_[i]) out.push_back(grads.of(params_[i]));
  return out;
}

Network Network::slice(std::size_t begin, std::size_t end, NetworkLabel label) const {
  if (begin > end || end > spec_.layers.size()) throw ContractError("slice: bad layer range");
  const auto& shapes = shapes_;
  NetworkSpec sub;
  sub.layers.assign(spec_.layers.begin() + begin, spec_.layers.begin() + end);
  sub.input_shape = begin == 0 ? spec_.input_shape : shapes[begin - 1];
  sub.output_shape = end == 0 ? spec_.input_shape : shapes[end - 1];
  sub.label = label;
  std::vector<Tensor> ps(params_.begin() + layer_begin_[begin], params_.begin() + layer_begin_[end]);
  Network out(std::move(sub), std::move(ps));
  for (std::size_t i = 0; i < out.params_.size(); ++i) out.trainable_[i] = trainable_[layer_begin_[begin] + i];
  out.frozen_ = frozen_;
  return out;
}

std::uint64_t Network::param_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& p : params_) h = fnv1a(h, p.data().data(), p.numel() * sizeof(double));
  return h;
}

Tensor forward_layers(const Network& net, const Tensor& input, std::size_t begin, std::size_t end) {
  const auto& spec = net.spec();
  if (begin > end || end > spec.layers.size()) throw ContractError("forward_layers: bad layer range");
  const auto& shapes = net.layer_shapes();
  const Shape& in_shape = begin == 0 ? spec.input_shape : shapes[begin - 1];

  Tensor x = input;
  bool batched;
  if (input.shape() == in_shape) {
    batched = false;
    Shape s{1};
    s.insert(s.end(), in_shape.begin(), in_shape.end());
    x = reshape(input, s);
  } else if (input.rank() == in_shape.size() + 1 &&
             Shape(input.shape().begin() + 1, input.shape().end()) == in_shape) {
    batched = true;
  } else {
    throw ShapeError("forward: input " + to_string(input.shape()) + " does not match expected " +
                     to_string(in_shape));
  }
  const std::size_t n = x.shape()[0];

  for (std::size_t i = begin; i < end; ++i) {
    const auto& l = spec.layers[i];
    auto p = net.layer_params(i);
    switch (l.kind) {
      case LayerKind::conv:
        x = activate(conv2d(x, p[0], p[1], l.stride, l.padding), l.activation);
        break;
      case LayerKind::conv_transpose:
        x = activate(conv2d_transpose(x, p[0], p[1], l.stride, l.padding, l.output_padding), l.activation);
        break;
      case LayerKind::upsample_nearest:
        x = upsample_nearest(x, l.factor);
        break;
      case LayerKind::avgpool:
        x = avgpool(x, l.factor);
        break;
      case LayerKind::dense: {
        if (x.rank() != 2) x = reshape(x, {n, static_cast<std::size_t>(l.in_width)});
        x = activate(dense(x, p[0], p[1]), l.activation);
        if (!l.out_shape.empty()) {
          Shape s{n};
          s.insert(s.end(), l.out_shape.begin(), l.out_shape.end());
          x = reshape(x, s);
        }
        break;
      }
      case LayerKind::activation:
        x = activate(x, l.activation);
        break;
    }
  }
  if (!batched) {
    const Shape& out_shape = end == begin ? in_shape : shapes[end - 1];
    x = reshape(x, out_shape);
  }
  return x;
}

Tensor forward(const Network& net, const Tensor& input) {
  return forward_layers(net, input, 0, net.spec().layers.size());
}

Network init_params(const NetworkSpec& spec, std::uint64_t seed) {
  auto shapes = infer_shapes(spec);
  Rng rng(seed);
  std::vector<Tensor> params;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const Shape& in = i == 0 ? spec.input_shape : shapes[i - 1];
    auto ps = param_shapes(spec.layers[i], in);
    if (ps.empty()) continue;
    const Shape& w = ps[0];
    double fan_in, fan_out;
    if (w.size() == 4) {
      const double rf = static_cast<double>(w[2] * w[3]);
      fan_in = static_cast<double>(w[1]) * rf;
      fan_out = static_cast<double>(w[0]) * rf;
      if (spec.layers[i].kind == LayerKind::conv_transpose) std::swap(fan_in, fan_out);
    } else {
      fan_in = static_cast<double>(w[0]);
      fan_out = static_cast<double>(w[1]);
    }
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<double> values(numel(w));
    for (auto& v : values) v = rng.uniform(-bound, bound);
    params.emplace_back(w, std::move(values));
    params.push_back(Tensor::zeros(ps[1]));
  }
  return Network(spec, std::move(params));
}

// ---- constructors -------------------------------------------------------------

int encoder_filters(EncoderVariant variant, int n, int f) {
  return variant == EncoderVariant::ge1 ? n * f : ((n + 2) / 3) * f;
}

NetworkSpec build_encoder_spec(EncoderVariant variant, int d, int f, int m, const Shape& input_shape) {
  if (d < 1 || f < 1 || m < 1) throw ContractError("build_encoder: d, f, m must be >= 1");
  if (input_shape.size() != 3) throw ShapeError("build_encoder: input must be (C,H,W)");
  NetworkSpec spec;
  spec.input_shape = input_shape;
  spec.label = variant == EncoderVariant::ge1 ? NetworkLabel::ge1 : NetworkLabel::ge0;
  Shape cur = input_shape;
  auto push = [&](LayerSpec l) {
    cur = next_shape(l, cur, spec.layers.size());
    spec.layers.push_back(std::move(l));
  };
  for (int n = 1; n <= d; ++n) {
    push(LayerSpec::conv(encoder_filters(variant, n, f), 3, 1, 1, Activation::elu));
    if (n % 2 == 0) push(LayerSpec::pool(2));
  }
  push(LayerSpec::dense(static_cast<int>(numel(cur)), m, Activation::none));
  spec.output_shape = cur;
  infer_shapes(spec);
  return spec;
}

Network build_encoder(EncoderVariant variant, int d, int f, int m, const Shape& input_shape,
                      std::uint64_t seed) {
  return init_params(build_encoder_spec(variant, d, f, m, input_shape), seed);
}

namespace {

NetworkSpec upsampling_stack(int in_width, int conv_layers, int base_filters, const Shape& output_shape,
                             NetworkLabel label, Activation out_act) {
  if (in_width < 1 || conv_layers < 1 || base_filters < 1) {
    throw ContractError("generator/decoder: widths and layer count must be >= 1");
  }
  if (output_shape.size() != 3) throw ShapeError("generator/decoder: output must be (C,H,W)");
  const int ups = conv_layers / 2;
  const std::size_t scale = std::size_t{1} << ups;
  if (output_shape[1] % scale != 0 || output_shape[2] % scale != 0) {
    throw ShapeError("generator/decoder: output " + to_string(output_shape) + " not divisible by 2^" +
                     std::to_string(ups) + " upsamplings");
  }
  Shape initial{static_cast<std::size_t>(base_filters), output_shape[1] / scale, output_shape[2] / scale};
  NetworkSpec spec;
  spec.input_shape = {static_cast<std::size_t>(in_width)};
  spec.output_shape = output_shape;
  spec.label = label;
  spec.layers.push_back(LayerSpec::dense(in_width, static_cast<int>(numel(initial)), Activation::none, initial));
  int done = 0;
  for (int i = 1; i <= conv_layers; ++i) {
    const bool last = i == conv_layers;
    spec.layers.push_back(LayerSpec::conv(last ? static_cast<int>(output_shape[0]) : base_filters, 3, 1, 1,
                                          last ? out_act : Activation::elu));
    if (i % 2 == 1 && !last && done < ups) {
      spec.layers.push_back(LayerSpec::upsample(2));
      ++done;
    }
  }
  infer_shapes(spec);
  return spec;
}

}  // namespace

NetworkSpec build_generator_spec(int latent_dim, int conv_layers, int base_filters, const Shape& output_shape) {
  return upsampling_stack(latent_dim, conv_layers, base_filters, output_shape, NetworkLabel::generator, Activation::tanh);
}

Network build_generator(int latent_dim, int conv_layers, int base_filters, const Shape& output_shape,
                        std::uint64_t seed) {
  return init_params(build_generator_spec(latent_dim, conv_layers, base_filters, output_shape), seed);
}

NetworkSpec build_decoder_spec(int m, int conv_layers, int base_filters, const Shape& output_shape, Activation output) {
  return upsampling_stack(m, conv_layers, base_filters, output_shape, NetworkLabel::decoder, output);
}

Network build_decoder(int m, int conv_layers, int base_filters, const Shape& output_shape, std::uint64_t seed,
                      Activation output) {
  return init_params(build_decoder_spec(m, conv_layers, base_filters, output_shape, output), seed);
}

NetworkSpec build_autoencoder_spec(const NetworkSpec& encoder, const NetworkSpec& decoder,
                                   NetworkLabel label) {
  if (encoder.output_shape != decoder.input_shape) {
    throw ShapeError("autoencoder: encoder output " + to_string(encoder.output_shape) +
                     " does not feed decoder input " + to_string(decoder.input_shape));
  }
  if (encoder.input_shape != decoder.output_shape) {
    throw ShapeError("autoencoder: decoder output must match encoder input");
  }
  NetworkSpec spec;
  spec.layers = encoder.layers;
  spec.layers.insert(spec.layers.end(), decoder.layers.begin(), decoder.layers.end());
  spec.input_shape = encoder.input_shape;
  spec.output_shape = decoder.output_shape;
  spec.label = label;
  spec.encoder_layers = encoder.layers.size();
  infer_shapes(spec);
  return spec;
}

}  // namespace ge

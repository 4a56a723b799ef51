#include "ge/imaging.hpp"

#include <algorithm>
#include <cmath>

#include "ge/data.hpp"
#include "ge/error.hpp"
#include "ge/nn.hpp"

namespace ge {

namespace {

struct Chw {
  std::size_t c, h, w;
};

Chw chw(const char* op, const Tensor& x) {
  if (x.rank() != 3) throw ShapeError(std::string(op) + ": expected [C,H,W], got " + to_string(x.shape()));
  return {x.shape()[0], x.shape()[1], x.shape()[2]};
}

// Symmetric reflection; works for offsets up to one image length.
std::size_t reflect(long i, long n) {
  if (i < 0) i = -i - 1;
  if (i >= n) i = 2 * n - i - 1;
  return static_cast<std::size_t>(std::clamp(i, 0L, n - 1));
}

double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

}  // namespace

Tensor apply_noise(const Tensor& x, double sigma, Rng& rng) {
  if (!(sigma > 0.0)) throw ConfigError("apply_noise: sigma must be positive");
  auto v = x.to_vector();
  for (auto& p : v) p += sigma * rng.normal();
  return Tensor(x.shape(), std::move(v));
}

std::vector<double> gaussian_kernel(double sigma, int size) {
  if (!(sigma > 0.0)) throw ConfigError("gaussian_kernel: sigma must be positive");
  if (size < 1 || size % 2 == 0) throw ConfigError("gaussian_kernel: size must be odd");
  const int r = size / 2;
  std::vector<double> k(static_cast<std::size_t>(size * size));
  double total = 0.0;
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) {
      double v = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
      k[(y + r) * size + (x + r)] = v;
      total += v;
    }
  for (auto& v : k) v /= total;
  return k;
}

Tensor gaussian_blur(const Tensor& x, double sigma, int size) {
  const auto [c, h, w] = chw("gaussian_blur", x);
  const auto k = gaussian_kernel(sigma, size);
  const int r = size / 2;
  if (r > static_cast<int>(std::min(h, w))) throw ShapeError("gaussian_blur: kernel larger than twice the image");
  std::vector<double> out(x.numel(), 0.0);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        double acc = 0.0;
        for (int dy = -r; dy <= r; ++dy) {
          const std::size_t sy = reflect(static_cast<long>(y) + dy, static_cast<long>(h));
          for (int dx = -r; dx <= r; ++dx) {
            const std::size_t sx = reflect(static_cast<long>(xx) + dx, static_cast<long>(w));
            acc += k[(dy + r) * size + (dx + r)] * x[(ch * h + sy) * w + sx];
          }
        }
        out[(ch * h + y) * w + xx] = acc;
      }
  return Tensor(x.shape(), std::move(out));
}

Tensor downsample(const Tensor& x, int factor) {
  chw("downsample", x);
  if (factor < 2) throw ConfigError("downsample: factor must be >= 2");
  return avgpool(x.detached(), factor);
}

double bicubic_sample(const Tensor& x, std::size_t c, double y, double xp) {
  const auto [cc, h, w] = chw("bicubic_sample", x);
  if (c >= cc) throw ShapeError("bicubic_sample: channel out of range");
  const long y0 = static_cast<long>(std::floor(y)), x0 = static_cast<long>(std::floor(xp));
  double acc = 0.0;
  for (long j = y0 - 1; j <= y0 + 2; ++j) {
    const double wy = cubic_weight(y - j);
    if (wy == 0.0) continue;
    const std::size_t sy = static_cast<std::size_t>(std::clamp(j, 0L, static_cast<long>(h) - 1));
    for (long i = x0 - 1; i <= x0 + 2; ++i) {
      const double wx = cubic_weight(xp - i);
      if (wx == 0.0) continue;
      const std::size_t sx = static_cast<std::size_t>(std::clamp(i, 0L, static_cast<long>(w) - 1));
      acc += wy * wx * x[(c * h + sy) * w + sx];
    }
  }
  return acc;
}

Tensor bicubic_upsample(const Tensor& x, int factor) {
  const auto [c, h, w] = chw("bicubic_upsample", x);
  if (factor < 1) throw ConfigError("bicubic_upsample: factor must be >= 1");
  const std::size_t oh = h * factor, ow = w * factor;
  std::vector<double> out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx)
        out[(ch * oh + y) * ow + xx] =
            bicubic_sample(x, ch, (y + 0.5) / factor - 0.5, (xx + 0.5) / factor - 0.5);
  return Tensor({c, oh, ow}, std::move(out));
}

Tensor rect_mask(std::size_t height, std::size_t width, const Rect& r) {
  if (r.w == 0 || r.h == 0 || r.x + r.w > width || r.y + r.h > height)
    throw ConfigError("rect_mask: rectangle outside the image");
  std::vector<double> m(height * width, 1.0);
  for (std::size_t y = r.y; y < r.y + r.h; ++y)
    for (std::size_t x = r.x; x < r.x + r.w; ++x) m[y * width + x] = 0.0;
  return Tensor({1, height, width}, std::move(m));
}

Tensor mask_from_png(const std::filesystem::path& path, std::size_t height, std::size_t width) {
  Tensor g = read_png(path, 1);
  if (g.shape()[1] != height || g.shape()[2] != width)
    throw ShapeError("mask " + path.string() + " is " + to_string(g.shape()) + ", image needs " +
                     std::to_string(height) + "x" + std::to_string(width));
  auto v = g.to_vector();
  for (auto& p : v) p = p > 0.0 ? 1.0 : 0.0;
  return Tensor(g.shape(), std::move(v));
}

Tensor mask_apply(const Tensor& x, const Tensor& mask) {
  const auto& s = x.shape();
  if (s.size() < 3 || mask.rank() != 3 || mask.shape()[1] != s[s.size() - 2] || mask.shape()[2] != s.back())
    throw ShapeError("mask_apply: mask " + to_string(mask.shape()) + " does not fit " + to_string(s));
  for (double v : mask.data())
    if (v != 0.0 && v != 1.0) throw ContractError("mask_apply: mask must be binary");
  const std::size_t plane = mask.shape()[1] * mask.shape()[2];
  const std::size_t mc = mask.shape()[0];
  const std::size_t c = s[s.size() - 3];
  if (mc != 1 && mc != c) throw ShapeError("mask_apply: mask channels must be 1 or C");
  std::vector<double> full(x.numel());
  for (std::size_t i = 0; i < full.size(); ++i) {
    const std::size_t ch = (i / plane) % c;
    full[i] = mask[(mc == 1 ? 0 : ch) * plane + i % plane];
  }
  return mul(x, Tensor(s, std::move(full)));
}

double total_variation(const Tensor& x) {
  const auto [c, h, w] = chw("total_variation", x);
  double tv = 0.0;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        const double v = x[(ch * h + y) * w + xx];
        if (xx + 1 < w) tv += std::abs(x[(ch * h + y) * w + xx + 1] - v);
        if (y + 1 < h) tv += std::abs(x[(ch * h + y + 1) * w + xx] - v);
      }
  return tv;
}

void DegradationSpec::validate(const Shape& image) const {
  if (image.size() != 3) throw ShapeError("degradation: expected [C,H,W] image");
  switch (kind) {
    case DegradationKind::none:
      break;
    case DegradationKind::gaussian_noise:
      if (!(sigma > 0.0)) throw ConfigError("noise sigma must be positive");
      break;
    case DegradationKind::gaussian_blur:
      if (!(blur_sigma > 0.0) || blur_size < 1 || blur_size % 2 == 0)
        throw ConfigError("blur needs sigma > 0 and an odd kernel size");
      break;
    case DegradationKind::downsample:
      if (factor < 2 || image[1] % factor || image[2] % factor)
        throw ConfigError("downsample factor must be >= 2 and divide the image size");
      break;
    case DegradationKind::mask:
      if (mask.rank() != 3 || mask.shape()[1] != image[1] || mask.shape()[2] != image[2])
        throw ConfigError("mask does not match the image size");
      break;
  }
}

Tensor degrade(const Tensor& x, const DegradationSpec& spec) {
  spec.validate(x.shape());
  switch (spec.kind) {
    case DegradationKind::none:
      return x.detached();
    case DegradationKind::gaussian_noise: {
      Rng rng(spec.seed);
      return apply_noise(x, spec.sigma, rng);
    }
    case DegradationKind::gaussian_blur:
      return gaussian_blur(x, spec.blur_sigma, spec.blur_size);
    case DegradationKind::downsample:
      return downsample(x, spec.factor);
    case DegradationKind::mask:
      return mask_apply(x.detached(), spec.mask);
  }
  throw ContractError("degrade: unknown kind");
}

Tensor degrade_aligned(const Tensor& x, const DegradationSpec& spec) {
  Tensor d = degrade(x, spec);
  if (spec.kind == DegradationKind::downsample) return bicubic_upsample(d, spec.factor);
  return d;
}

std::string to_string(Task t) {
  switch (t) {
    case Task::cs: return "cs";
    case Task::denoise: return "denoise";
    case Task::deblur: return "deblur";
    case Task::superres: return "superres";
    case Task::inpaint: return "inpaint";
  }
  return "?";
}

Task task_from_string(const std::string& s) {
  for (Task t : {Task::cs, Task::denoise, Task::deblur, Task::superres, Task::inpaint})
    if (to_string(t) == s) return t;
  throw ConfigError("unknown task '" + s + "'");
}

Shape AdjustmentOp::output_shape(const Shape& in) const {
  return kind == AdjustmentKind::resize ? target : in;
}

Tensor AdjustmentOp::apply(const Tensor& x) const {
  switch (kind) {
    case AdjustmentKind::identity:
      return x;
    case AdjustmentKind::mask:
      return mask_apply(x, mask);
    case AdjustmentKind::resize: {
      const auto& s = x.shape();
      if (target.size() != 3 || s.size() != 3 || target[0] != s[0]) throw ShapeError("resize: incompatible shapes");
      if (target == s) return x;
      if (s[1] % target[1] == 0 && s[2] % target[2] == 0 && s[1] / target[1] == s[2] / target[2])
        return avgpool(x, static_cast<int>(s[1] / target[1]));
      if (target[1] % s[1] == 0 && target[2] % s[2] == 0 && target[1] / s[1] == target[2] / s[2])
        return upsample_nearest(x, static_cast<int>(target[1] / s[1]));
      throw ShapeError("resize: only integer factors are supported, " + to_string(s) + " -> " + to_string(target));
    }
  }
  throw ContractError("adjustment: unknown kind");
}

AdjustmentOp adjustment_for(Task task, const Tensor& mask) {
  AdjustmentOp op;
  if (task == Task::inpaint) {
    if (mask.rank() != 3) throw ConfigError("inpaint needs a [1,H,W] mask");
    op.kind = AdjustmentKind::mask;
    op.mask = mask;
  }
  return op;
}

}  // namespace ge

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ge/rng.hpp"
#include "ge/tensor.hpp"

namespace ge {

// Images are [C,H,W] throughout.

Tensor apply_noise(const Tensor& x, double sigma, Rng& rng);

// Normalized, rotationally symmetric size x size Gaussian (row-major).
std::vector<double> gaussian_kernel(double sigma, int size);
// Channelwise 2-D filtering with symmetric (edge-repeating) reflection.
Tensor gaussian_blur(const Tensor& x, double sigma, int size);

// Block average.
Tensor downsample(const Tensor& x, int factor);
// Cubic convolution (a = -0.5), half-pixel centres, clamped edges.
Tensor bicubic_upsample(const Tensor& x, int factor);
// Value of channel c at fractional source coordinates (y, x).
double bicubic_sample(const Tensor& x, std::size_t c, double y, double x_pos);

struct Rect {
  std::size_t x = 0, y = 0, w = 0, h = 0;
};

// [1,H,W] binary mask, 0 inside the rectangle.
Tensor rect_mask(std::size_t height, std::size_t width, const Rect& hole);
// 8-bit PNG, white keeps, black masks.
Tensor mask_from_png(const std::filesystem::path& path, std::size_t height, std::size_t width);
// x * M with M broadcast over channels (and batch). Differentiable in x.
Tensor mask_apply(const Tensor& x, const Tensor& mask);

// Anisotropic total variation: sum of absolute neighbour differences.
double total_variation(const Tensor& x);

enum class DegradationKind { none, gaussian_noise, gaussian_blur, downsample, mask };

struct DegradationSpec {
  DegradationKind kind = DegradationKind::none;
  double sigma = 0.4;       // noise
  double blur_sigma = 3.0;  // blur
  int blur_size = 15;
  int factor = 4;           // downsample
  Tensor mask;              // [1,H,W]
  std::uint64_t seed = 0;

  void validate(const Shape& image) const;
};

// x-dagger from x-star.
Tensor degrade(const Tensor& x, const DegradationSpec& spec);
// Degraded image at full resolution (bicubic upsampling after downsample).
Tensor degrade_aligned(const Tensor& x, const DegradationSpec& spec);

enum class Task { cs, denoise, deblur, superres, inpaint };
std::string to_string(Task t);
Task task_from_string(const std::string& s);

enum class AdjustmentKind { identity, mask, resize };

struct AdjustmentOp {
  AdjustmentKind kind = AdjustmentKind::identity;
  Tensor mask;   // mask kind
  Shape target;  // resize kind: [C,H,W]

  // Differentiable in x. Resize uses block averaging to shrink and nearest
  // repetition to enlarge by integer factors.
  Tensor apply(const Tensor& x) const;
  Shape output_shape(const Shape& in) const;
};

// identity for cs/denoise/deblur/superres (inputs are preconditioned to full
// resolution), the mask for inpaint.
AdjustmentOp adjustment_for(Task task, const Tensor& mask = {});

}  // namespace ge

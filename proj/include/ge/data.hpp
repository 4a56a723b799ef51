#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ge/nn.hpp"
#include "ge/tensor.hpp"
#include "json.hpp"

namespace ge {

// Images [C,H,W] with pixels in [-1,1].
struct ImageSet {
  std::vector<Tensor> images;
  std::string source;
  std::uint64_t seed = 0;
  std::string split = "all";

  std::size_t size() const { return images.size(); }
  const Shape& shape() const;
  // Stacked [N,C,H,W] batch of the given indices.
  Tensor batch(std::span<const std::size_t> indices) const;
  ImageSet subset(std::span<const std::size_t> indices, std::string split_tag) const;
};

// n grayscale size x size images, each a clamped sum of 1..max_blobs
// isotropic Gaussian bumps, mapped to [-1,1].
ImageSet gen_blobs_dataset(std::size_t n, std::size_t size, int max_blobs, std::uint64_t seed);

struct DataSplit {
  ImageSet train, validation, test;
};
// Seeded shuffle, then 90/5/5.
DataSplit split_dataset(const ImageSet& set, std::uint64_t seed);

// ---- PNG -------------------------------------------------------------------

std::uint8_t to_u8(double v);
double from_u8(std::uint8_t v);

// [1,H,W] is written as gray, [3,H,W] as RGB.
void write_png(const Tensor& image, const std::filesystem::path& path);
// channels 0 keeps the file's layout (gray stays gray, everything else RGB).
Tensor read_png(const std::filesystem::path& path, int channels = 0);
// Tile [C,H,W] images into a grid, `cols` per row, 1 pixel gaps at -1.
void write_png_grid(std::span<const Tensor> images, std::size_t cols, const std::filesystem::path& path);

// Every *.png in the directory (sorted by name), center-cropped to a square
// and resized to size x size.
ImageSet load_image_dir(const std::filesystem::path& dir, std::size_t size);
// Center crop to square and bilinear resize.
Tensor fit_square(const Tensor& image, std::size_t size);

// Writes 00000.png ... and metadata.json.
void save_image_set(const ImageSet& set, const std::filesystem::path& dir, const nlohmann::json& extra = {});

// ---- checkpoints -------------------------------------------------------------

nlohmann::json spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const nlohmann::json& j);

void save_checkpoint(const Network& net, const std::filesystem::path& path, const nlohmann::json& config = {});
Network load_checkpoint(const std::filesystem::path& path);
// Header only.
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

// Write to a sibling temporary file, then rename over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace ge

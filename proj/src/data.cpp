#include "ge/data.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "ge/error.hpp"
#include "ge/rng.hpp"

namespace ge {

namespace fs = std::filesystem;
using nlohmann::json;

const Shape& ImageSet::shape() const {
  if (images.empty()) throw ContractError("empty image set has no shape");
  return images.front().shape();
}

Tensor ImageSet::batch(std::span<const std::size_t> indices) const {
  std::vector<Tensor> parts;
  parts.reserve(indices.size());
  for (auto i : indices) parts.push_back(images.at(i));
  return stack(parts);
}

ImageSet ImageSet::subset(std::span<const std::size_t> indices, std::string split_tag) const {
  ImageSet out{{}, source, seed, std::move(split_tag)};
  for (auto i : indices) out.images.push_back(images.at(i));
  return out;
}

ImageSet gen_blobs_dataset(std::size_t n, std::size_t size, int max_blobs, std::uint64_t seed) {
  if (n == 0 || size < 2 || max_blobs < 1) throw ContractError("gen_blobs_dataset: need n >= 1, size >= 2, max_blobs >= 1");
  Rng rng(seed);
  ImageSet set{{}, "blobs", seed, "all"};
  set.images.reserve(n);
  const double s = static_cast<double>(size);
  std::vector<double> img(size * size);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(img.begin(), img.end(), 0.0);
    const auto blobs = rng.uniform_int(1, max_blobs);
    for (int b = 0; b < blobs; ++b) {
      const double cx = rng.uniform(0.0, s), cy = rng.uniform(0.0, s);
      const double width = rng.uniform(s / 10.0, s / 4.0);
      const double amp = rng.uniform(0.4, 1.0);
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
          const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
          img[y * size + x] += amp * std::exp(-(dx * dx + dy * dy) / (2.0 * width * width));
        }
    }
    std::vector<double> px(img.size());
    for (std::size_t j = 0; j < img.size(); ++j) px[j] = 2.0 * std::clamp(img[j], 0.0, 1.0) - 1.0;
    set.images.emplace_back(Shape{1, size, size}, std::move(px));
  }
  return set;
}

DataSplit split_dataset(const ImageSet& set, std::uint64_t seed) {
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 eng(seed);
  // Fisher-Yates with our own index draw so the order does not depend on
  // the standard library's shuffle.
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[eng() % i]);
  const std::size_t n_val = set.size() / 20, n_test = set.size() / 20;
  const std::size_t n_train = set.size() - n_val - n_test;
  std::span<const std::size_t> all(order);
  return {set.subset(all.subspan(0, n_train), "train"), set.subset(all.subspan(n_train, n_val), "validation"),
          set.subset(all.subspan(n_train + n_val), "test")};
}

// ---- PNG -------------------------------------------------------------------

std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::round((v + 1.0) * 127.5), 0.0, 255.0));
}

double from_u8(std::uint8_t v) { return v / 127.5 - 1.0; }

namespace {

void write_png_bytes(const std::vector<std::uint8_t>& pixels, std::size_t c, std::size_t h, std::size_t w,
                     const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = c == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  png_alloc_size_t len = 0;
  if (!png_image_write_to_memory(&image, nullptr, &len, 0, pixels.data(), 0, nullptr))
    throw IoError("png encode failed for " + path.string() + ": " + image.message);
  std::string buf(len, '\0');
  if (!png_image_write_to_memory(&image, buf.data(), &len, 0, pixels.data(), 0, nullptr))
    throw IoError("png encode failed for " + path.string() + ": " + image.message);
  buf.resize(len);
  write_file_atomic(path, buf);
}

}  // namespace

void write_png(const Tensor& img, const fs::path& path) {
  const auto& s = img.shape();
  if (s.size() != 3 || (s[0] != 1 && s[0] != 3))
    throw ShapeError("write_png: need [1,H,W] or [3,H,W], got " + to_string(s));
  const std::size_t c = s[0], h = s[1], w = s[2];
  std::vector<std::uint8_t> px(c * h * w);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h * w; ++i) px[i * c + ch] = to_u8(img[ch * h * w + i]);
  write_png_bytes(px, c, h, w, path);
}

Tensor read_png(const fs::path& path, int channels) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    throw IoError("cannot decode " + path.string() + ": " + image.message);
  std::size_t c = channels;
  if (c == 0) c = (image.format & PNG_FORMAT_FLAG_COLOR) ? 3 : 1;
  if (c != 1 && c != 3) {
    png_image_free(&image);
    throw ContractError("read_png: channels must be 0, 1 or 3");
  }
  image.format = c == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  const std::size_t h = image.height, w = image.width;
  std::vector<std::uint8_t> px(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, px.data(), 0, nullptr))
    throw IoError("cannot decode " + path.string() + ": " + image.message);
  std::vector<double> out(c * h * w);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h * w; ++i) out[ch * h * w + i] = from_u8(px[i * c + ch]);
  return Tensor({c, h, w}, std::move(out));
}

void write_png_grid(std::span<const Tensor> images, std::size_t cols, const fs::path& path) {
  if (images.empty() || cols == 0) throw ContractError("write_png_grid: nothing to draw");
  const auto& s = images.front().shape();
  const std::size_t c = s[0], h = s[1], w = s[2];
  cols = std::min(cols, images.size());
  const std::size_t rows = (images.size() + cols - 1) / cols;
  const std::size_t gh = rows * (h + 1) - 1, gw = cols * (w + 1) - 1;
  std::vector<double> grid(c * gh * gw, -1.0);
  for (std::size_t k = 0; k < images.size(); ++k) {
    if (images[k].shape() != s) throw ShapeError("write_png_grid: mixed image shapes");
    const std::size_t oy = (k / cols) * (h + 1), ox = (k % cols) * (w + 1);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          grid[(ch * gh + oy + y) * gw + ox + x] = images[k][(ch * h + y) * w + x];
  }
  write_png(Tensor({c, gh, gw}, std::move(grid)), path);
}

Tensor fit_square(const Tensor& img, std::size_t size) {
  const std::size_t c = img.shape()[0], h = img.shape()[1], w = img.shape()[2];
  const std::size_t side = std::min(h, w), y0 = (h - side) / 2, x0 = (w - side) / 2;
  if (side == size && h == w) return img.detached();
  std::vector<double> out(c * size * size);
  const double scale = static_cast<double>(side) / size;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        double sy = std::clamp((y + 0.5) * scale - 0.5, 0.0, side - 1.0);
        double sx = std::clamp((x + 0.5) * scale - 0.5, 0.0, side - 1.0);
        std::size_t iy = static_cast<std::size_t>(sy), ix = static_cast<std::size_t>(sx);
        std::size_t iy1 = std::min(iy + 1, side - 1), ix1 = std::min(ix + 1, side - 1);
        double fy = sy - iy, fx = sx - ix;
        auto at = [&](std::size_t yy, std::size_t xx) { return img[(ch * h + y0 + yy) * w + x0 + xx]; };
        out[(ch * size + y) * size + x] = (1 - fy) * ((1 - fx) * at(iy, ix) + fx * at(iy, ix1)) +
                                          fy * ((1 - fx) * at(iy1, ix) + fx * at(iy1, ix1));
      }
  return Tensor({c, size, size}, std::move(out));
}

ImageSet load_image_dir(const fs::path& dir, std::size_t size) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no PNG images in " + dir.string());
  std::vector<Tensor> raw;
  bool color = false;
  for (const auto& f : files) {
    raw.push_back(read_png(f));
    color = color || raw.back().shape()[0] == 3;
  }
  ImageSet set{{}, dir.string(), 0, "all"};
  for (std::size_t i = 0; i < raw.size(); ++i) {
    Tensor img = raw[i];
    if (color && img.shape()[0] == 1) img = read_png(files[i], 3);
    set.images.push_back(fit_square(img, size));
  }
  return set;
}

void save_image_set(const ImageSet& set, const fs::path& dir, const json& extra) {
  fs::create_directories(dir);
  char name[32];
  for (std::size_t i = 0; i < set.size(); ++i) {
    std::snprintf(name, sizeof name, "%05zu.png", i);
    write_png(set.images[i], dir / name);
  }
  json meta = extra;
  meta["count"] = set.size();
  meta["shape"] = set.shape();
  meta["source"] = set.source;
  meta["seed"] = set.seed;
  meta["split"] = set.split;
  write_file_atomic(dir / "metadata.json", meta.dump(2) + "\n");
}

// ---- checkpoints -------------------------------------------------------------

json spec_to_json(const NetworkSpec& spec) {
  json layers = json::array();
  for (const auto& l : spec.layers) {
    json j{{"kind", to_string(l.kind)}};
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::conv_transpose:
        j["filters"] = l.filters;
        j["kernel"] = l.kernel;
        j["stride"] = l.stride;
        j["padding"] = l.padding;
        if (l.kind == LayerKind::conv_transpose) j["output_padding"] = l.output_padding;
        break;
      case LayerKind::dense:
        j["in"] = l.in_width;
        j["out"] = l.out_width;
        if (!l.out_shape.empty()) j["out_shape"] = l.out_shape;
        break;
      case LayerKind::upsample_nearest:
      case LayerKind::avgpool:
        j["factor"] = l.factor;
        break;
      case LayerKind::activation:
        break;
    }
    j["activation"] = to_string(l.activation);
    layers.push_back(std::move(j));
  }
  return {{"label", to_string(spec.label)},
          {"input_shape", spec.input_shape},
          {"output_shape", spec.output_shape},
          {"encoder_layers", spec.encoder_layers},
          {"layers", std::move(layers)}};
}

NetworkSpec spec_from_json(const json& j) {
  try {
    NetworkSpec spec;
    spec.label = network_label_from_string(j.at("label").get<std::string>());
    spec.input_shape = j.at("input_shape").get<Shape>();
    spec.output_shape = j.at("output_shape").get<Shape>();
    spec.encoder_layers = j.value("encoder_layers", std::size_t{0});
    for (const auto& l : j.at("layers")) {
      LayerSpec s;
      s.kind = layer_kind_from_string(l.at("kind").get<std::string>());
      s.activation = activation_from_string(l.value("activation", std::string("none")));
      s.filters = l.value("filters", 0);
      s.kernel = l.value("kernel", 0);
      s.stride = l.value("stride", 1);
      s.padding = l.value("padding", 0);
      s.output_padding = l.value("output_padding", 0);
      s.in_width = l.value("in", 0);
      s.out_width = l.value("out", 0);
      s.factor = l.value("factor", 0);
      if (l.contains("out_shape")) s.out_shape = l.at("out_shape").get<Shape>();
      spec.layers.push_back(s);
    }
    return spec;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed network spec: ") + e.what());
  }
}

namespace {

constexpr char kMagic[4] = {'G', 'E', 'C', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_header(const std::string& bytes, const fs::path& path, std::size_t& body_offset) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError(path.string() + ": bad magic at offset 0 (expected GEC1)");
  if (bytes.size() < 12) throw FormatError(path.string() + ": header length field truncated at offset 4");
  const std::uint64_t len = get_u64(reinterpret_cast<const unsigned char*>(bytes.data()) + 4);
  if (len > bytes.size() - 12)
    throw FormatError(path.string() + ": header of " + std::to_string(len) + " bytes at offset 12 runs past end of file (" +
                      std::to_string(bytes.size()) + " bytes)");
  body_offset = 12 + len;
  try {
    return json::parse(bytes.begin() + 12, bytes.begin() + 12 + static_cast<std::ptrdiff_t>(len));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": invalid JSON header at offset " + std::to_string(12 + e.byte) + ": " + e.what());
  }
}

}  // namespace

void save_checkpoint(const Network& net, const fs::path& path, const json& config) {
  const auto names = net.param_names();
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    const auto& p = net.params()[i];
    tensors.push_back({{"name", names[i]}, {"shape", p.shape()}, {"offset", offset}, {"bytes", 8 * p.numel()}});
    offset += 8 * p.numel();
  }
  json header{{"format", "GEC1"},
              {"byte_order", "little"},
              {"dtype", "float64"},
              {"spec", spec_to_json(net.spec())},
              {"frozen", net.frozen()},
              {"tensors", std::move(tensors)},
              {"config", config.is_null() ? json::object() : config},
              {"created_by", "ge"}};
  const std::string h = header.dump();
  std::string out(kMagic, 4);
  put_u64(out, h.size());
  out += h;
  out.reserve(out.size() + offset);
  for (const auto& p : net.params())
    for (double v : p.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  write_file_atomic(path, out);
}

json read_checkpoint_header(const fs::path& path) {
  std::size_t body = 0;
  return parse_header(read_all(path), path, body);
}

Network load_checkpoint(const fs::path& path) {
  const std::string bytes = read_all(path);
  std::size_t body = 0;
  const json header = parse_header(bytes, path, body);
  if (!header.contains("spec") || !header.contains("tensors"))
    throw FormatError(path.string() + ": header lacks spec or tensors");
  NetworkSpec spec = spec_from_json(header.at("spec"));
  std::vector<Tensor> params;
  for (const auto& t : header.at("tensors")) {
    const auto name = t.value("name", std::string("?"));
    const Shape shape = t.at("shape").get<Shape>();
    const std::uint64_t off = t.at("offset").get<std::uint64_t>(), len = t.at("bytes").get<std::uint64_t>();
    if (len != 8 * numel(shape))
      throw FormatError(path.string() + ": tensor '" + name + "' declares " + std::to_string(len) + " bytes for shape " +
                        to_string(shape));
    if (body + off + len > bytes.size())
      throw FormatError(path.string() + ": tensor '" + name + "' needs bytes [" + std::to_string(body + off) + ", " +
                        std::to_string(body + off + len) + ") but the file ends at offset " + std::to_string(bytes.size()));
    std::vector<double> v(numel(shape));
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + body + off;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::bit_cast<double>(get_u64(p + 8 * i));
    params.emplace_back(shape, std::move(v));
  }
  Network net(std::move(spec), std::move(params));
  if (header.value("frozen", false)) net.freeze();
  return net;
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace ge

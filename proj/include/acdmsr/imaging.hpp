#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "acdmsr/checkpoint.hpp"
#include "acdmsr/rng.hpp"
#include "acdmsr/tensor.hpp"

namespace acdmsr {

// 8-bit raster, interleaved (RGBRGB... or gray).
struct ImageFile {
  std::size_t width = 0, height = 0, channels = 0;
  std::vector<std::uint8_t> pixels;
};

// ---------------------------------------------------------------------------
// Netpbm binary I/O: P5 (gray) and P6 (RGB), maxval <= 255.

inline ImageFile decode_pnm(const std::string& bytes, const std::string& origin = "<memory>") {
  std::size_t pos = 0;
  auto bad = [&](const std::string& why) -> void { fail(ErrorKind::io, origin + ": " + why); };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&]() -> std::size_t {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos]))) bad("malformed header");
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + std::size_t(bytes[pos++] - '0');
      if (v > (1u << 24)) bad("header value too large");
    }
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) bad("unsupported format (need P5 or P6)");
  ImageFile img;
  img.channels = bytes[1] == '5' ? 1 : 3;
  pos = 2;
  img.width = read_uint();
  img.height = read_uint();
  const std::size_t maxval = read_uint();
  if (img.width == 0 || img.height == 0) bad("zero dimension");
  if (maxval == 0 || maxval > 255) bad("only 8-bit maxval (1..255) is supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) bad("malformed header");
  ++pos;
  const std::size_t n = img.width * img.height * img.channels;
  if (bytes.size() - pos < n) bad("truncated pixel data");
  img.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = static_cast<std::uint8_t>(bytes[pos + i]);
    if (v > maxval) bad("pixel exceeds maxval");
    img.pixels[i] = maxval == 255 ? v : static_cast<std::uint8_t>(std::lround(double(v) * 255.0 / double(maxval)));
  }
  return img;
}

inline std::string encode_pnm(const ImageFile& img) {
  if (img.channels != 1 && img.channels != 3) fail(ErrorKind::range, "PNM needs 1 or 3 channels");
  if (img.pixels.size() != img.width * img.height * img.channels) fail(ErrorKind::shape, "pixel buffer size mismatch");
  std::string out = (img.channels == 1 ? "P5\n" : "P6\n") + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return out;
}

inline ImageFile read_image(const std::filesystem::path& path) { return decode_pnm(read_file_bytes(path), path.string()); }

inline void write_image(const ImageFile& img, const std::filesystem::path& path) { write_file_bytes(path, encode_pnm(img)); }

// Planar C x H x W in [0, 1].
template <typename T = float>
BasicTensor<T> image_to_tensor(const ImageFile& img) {
  BasicTensor<T> t({img.channels, img.height, img.width});
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c)
        t.at(c, y, x) = T(img.pixels[(y * img.width + x) * img.channels + c]) / T(255);
  return t;
}

template <typename T>
ImageFile tensor_to_image(const BasicTensor<T>& t) {
  if (t.rank() != 3 || (t.dim(0) != 1 && t.dim(0) != 3))
    fail(ErrorKind::shape, "image tensor must be 1 or 3 x H x W, got " + shape_str(t.shape()));
  ImageFile img;
  img.channels = t.dim(0);
  img.height = t.dim(1);
  img.width = t.dim(2);
  img.pixels.resize(t.size());
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double v = std::clamp(double(t.at(c, y, x)), 0.0, 1.0);
        img.pixels[(y * img.width + x) * img.channels + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  return img;
}

template <typename T = float>
BasicTensor<T> load_tensor_image(const std::filesystem::path& path) {
  return image_to_tensor<T>(read_image(path));
}

template <typename T>
void save_tensor_image(const BasicTensor<T>& t, const std::filesystem::path& path) {
  write_image(tensor_to_image(t), path);
}

template <typename T>
BasicTensor<T> quantize_8bit(const BasicTensor<T>& t) {
  return map(t, [](T v) { return T(std::lround(std::clamp(double(v), 0.0, 1.0) * 255.0)) / T(255); });
}

// ---------------------------------------------------------------------------
// Bicubic resampling: Catmull-Rom (a = -0.5), half-pixel centres, edge clamp.

inline double cubic_weight(double x, double a = -0.5) {
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

struct CubicTaps {
  std::array<std::size_t, 4> index;
  std::array<double, 4> weight;
};

// Taps for output coordinate `dst` when mapping `in` samples to `out` samples.
inline CubicTaps cubic_taps(std::size_t dst, std::size_t in, std::size_t out) {
  const double src = (double(dst) + 0.5) * double(in) / double(out) - 0.5;
  const double base = std::floor(src);
  CubicTaps taps{};
  for (int k = 0; k < 4; ++k) {
    const double pos = base - 1.0 + double(k);
    taps.weight[std::size_t(k)] = cubic_weight(src - pos);
    taps.index[std::size_t(k)] = std::size_t(std::clamp(pos, 0.0, double(in - 1)));
  }
  return taps;
}

template <typename T>
BasicTensor<T> bicubic_resize(const BasicTensor<T>& img, std::size_t out_h, std::size_t out_w) {
  if (img.rank() != 3) fail(ErrorKind::shape, "bicubic_resize expects C x H x W, got " + shape_str(img.shape()));
  if (out_h == 0 || out_w == 0) fail(ErrorKind::range, "bicubic_resize output dims must be positive");
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  std::vector<CubicTaps> ty(out_h), tx(out_w);
  for (std::size_t y = 0; y < out_h; ++y) ty[y] = cubic_taps(y, h, out_h);
  for (std::size_t x = 0; x < out_w; ++x) tx[x] = cubic_taps(x, w, out_w);
  // horizontal pass then vertical pass, in double
  std::vector<double> tmp(c * h * out_w);
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < out_w; ++x) {
        double s = 0;
        for (int j = 0; j < 4; ++j) s += tx[x].weight[std::size_t(j)] * double(img.at(k, y, tx[x].index[std::size_t(j)]));
        tmp[(k * h + y) * out_w + x] = s;
      }
  BasicTensor<T> out({c, out_h, out_w});
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t y = 0; y < out_h; ++y)
      for (std::size_t x = 0; x < out_w; ++x) {
        double s = 0;
        for (int j = 0; j < 4; ++j) s += ty[y].weight[std::size_t(j)] * tmp[(k * h + ty[y].index[std::size_t(j)]) * out_w + x];
        out.at(k, y, x) = T(s);
      }
  return out;
}

template <typename T>
BasicTensor<T> degrade(const BasicTensor<T>& hr, std::size_t scale) {
  if (hr.rank() != 3) fail(ErrorKind::shape, "degrade expects C x H x W");
  if (scale == 0 || hr.dim(1) % scale != 0 || hr.dim(2) % scale != 0)
    fail(ErrorKind::shape, "image " + std::to_string(hr.dim(1)) + "x" + std::to_string(hr.dim(2)) +
                               " not divisible by scale " + std::to_string(scale));
  return bicubic_resize(hr, hr.dim(1) / scale, hr.dim(2) / scale);
}

template <typename T>
BasicTensor<T> upsample_bicubic(const BasicTensor<T>& lr, std::size_t scale) {
  return bicubic_resize(lr, lr.dim(1) * scale, lr.dim(2) * scale);
}

template <typename T>
BasicTensor<T> upsample_nearest(const BasicTensor<T>& lr, std::size_t scale) {
  if (lr.rank() != 3 || scale == 0) fail(ErrorKind::shape, "upsample_nearest expects C x H x W and scale >= 1");
  BasicTensor<T> out({lr.dim(0), lr.dim(1) * scale, lr.dim(2) * scale});
  for (std::size_t k = 0; k < lr.dim(0); ++k)
    for (std::size_t y = 0; y < out.dim(1); ++y)
      for (std::size_t x = 0; x < out.dim(2); ++x) out.at(k, y, x) = lr.at(k, y / scale, x / scale);
  return out;
}

// ---------------------------------------------------------------------------
// Patches

struct PatchPos {
  std::size_t y = 0, x = 0;
};

template <typename T>
BasicTensor<T> crop(const BasicTensor<T>& img, std::size_t y, std::size_t x, std::size_t h, std::size_t w) {
  if (img.rank() != 3 || y + h > img.dim(1) || x + w > img.dim(2))
    fail(ErrorKind::shape, "crop window exceeds image " + shape_str(img.shape()));
  BasicTensor<T> out({img.dim(0), h, w});
  for (std::size_t k = 0; k < img.dim(0); ++k)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) out.at(k, r, c) = img.at(k, y + r, x + c);
  return out;
}

// Seeded uniform top-left corners; with align > 1 corners are multiples of align.
inline std::vector<PatchPos> patch_positions(std::size_t h, std::size_t w, std::size_t patch, std::size_t count,
                                             std::uint64_t seed, std::size_t align = 1) {
  if (patch == 0 || patch > h || patch > w)
    fail(ErrorKind::range, "patch " + std::to_string(patch) + " larger than image " + std::to_string(h) + "x" + std::to_string(w));
  const CounterRng rng(seed);
  const auto ny = std::int64_t((h - patch) / align), nx = std::int64_t((w - patch) / align);
  std::vector<PatchPos> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i].y = std::size_t(rng.uniform_int(2 * i, 0, ny)) * align;
    out[i].x = std::size_t(rng.uniform_int(2 * i + 1, 0, nx)) * align;
  }
  return out;
}

template <typename T>
std::vector<BasicTensor<T>> extract_patches(const BasicTensor<T>& img, std::size_t patch, std::size_t count,
                                            std::uint64_t seed) {
  if (img.rank() != 3) fail(ErrorKind::shape, "extract_patches expects C x H x W");
  std::vector<BasicTensor<T>> out;
  out.reserve(count);
  for (const auto& p : patch_positions(img.dim(1), img.dim(2), patch, count, seed))
    out.push_back(crop(img, p.y, p.x, patch, patch));
  return out;
}

// ---------------------------------------------------------------------------
// Procedural textures: flat regions cut by 1 to 3 straight edges, each cell
// coloured 0.1 or 0.9 per channel, plus a faint grating; values stay in
// [0.05, 0.95].

template <typename T = float>
BasicTensor<T> procedural_texture(std::size_t h, std::size_t w, std::size_t channels, std::uint64_t seed) {
  const CounterRng rng = CounterRng(seed).stream({0x7e47});
  std::uint64_t ctr = 0;
  auto u = [&] { return rng.uniform(ctr++); };
  const int edges = 1 + int(u() * 3);
  std::vector<std::array<double, 3>> lines(static_cast<std::size_t>(edges));
  for (auto& l : lines) {
    const double theta = u() * 2 * std::numbers::pi;
    l = {std::cos(theta), std::sin(theta), 0.0};
    l[2] = -(l[0] * u() * double(w) + l[1] * u() * double(h));
  }
  std::vector<double> palette(channels << edges);
  for (auto& c : palette) c = u() < 0.5 ? 0.1 : 0.9;
  std::vector<double> img(channels * h * w, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      std::size_t cell = 0;
      for (std::size_t k = 0; k < lines.size(); ++k)
        if (lines[k][0] * double(x) + lines[k][1] * double(y) + lines[k][2] > 0) cell |= std::size_t(1) << k;
      for (std::size_t c = 0; c < channels; ++c) img[(c * h + y) * w + x] = palette[cell * channels + c];
    }
  const double theta = u() * std::numbers::pi, freq = 0.02 + 0.04 * u(), phase = u() * 2 * std::numbers::pi;
  const double amp = 0.02 + 0.03 * u();
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double v = amp * std::sin(2 * std::numbers::pi * freq * (std::cos(theta) * double(x) + std::sin(theta) * double(y)) + phase);
      for (std::size_t c = 0; c < channels; ++c) img[(c * h + y) * w + x] += v;
    }
  BasicTensor<T> out({channels, h, w});
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = T(std::clamp(img[i], 0.05, 0.95));
  return out;
}

// ---------------------------------------------------------------------------
// Dataset layout: <root>/hr/*.ppm|pgm, <root>/lrX{s}/, <root>/srX{s}/<name>/.

inline std::filesystem::path hr_dir(const std::filesystem::path& root) { return root / "hr"; }
inline std::filesystem::path lr_dir(const std::filesystem::path& root, std::size_t scale) {
  return root / ("lrX" + std::to_string(scale));
}
inline std::filesystem::path sr_dir(const std::filesystem::path& root, std::size_t scale, const std::string& name) {
  return root / ("srX" + std::to_string(scale)) / name;
}

inline bool is_pnm_path(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  return ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

// Sorted by filename for a stable order.
inline std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorKind::data, "missing image directory " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && is_pnm_path(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// Finds "<dir>/<stem>.{ppm,pgm,pnm}".
inline std::filesystem::path find_image(const std::filesystem::path& dir, const std::string& stem) {
  for (const char* ext : {".ppm", ".pgm", ".pnm"}) {
    auto p = dir / (stem + ext);
    if (std::filesystem::exists(p)) return p;
  }
  fail(ErrorKind::data, "no image for id '" + stem + "' in " + dir.string());
}

}  // namespace acdmsr

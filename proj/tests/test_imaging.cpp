#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <filesystem>

#include "acdmsr/imaging.hpp"
#include "acdmsr/metrics.hpp"

using namespace acdmsr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "acdmsr_test_imaging";
  fs::create_directories(dir);
  return dir / name;
}

ImageFile random_file(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
  ImageFile img{w, h, c, std::vector<std::uint8_t>(c * h * w)};
  const CounterRng r(seed);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = std::uint8_t(r.bits(i) & 0xff);
  return img;
}

// Keys kernel with a = -1/2 written in its textbook piecewise form.
double keys(double x) {
  x = std::fabs(x);
  if (x < 1) return 1.5 * x * x * x - 2.5 * x * x + 1;
  if (x < 2) return -0.5 * x * x * x + 2.5 * x * x - 4 * x + 2;
  return 0;
}

// Sums over a wide window of integer sample positions with clamped reads.
double dense_resample_1d(const std::vector<double>& src, double pos) {
  const long n = long(src.size());
  double acc = 0;
  for (long p = -8; p < n + 8; ++p) acc += keys(pos - double(p)) * src[std::size_t(std::clamp(p, 0L, n - 1))];
  return acc;
}

}  // namespace

TEST(PnmIo, RoundTripRgb) {
  const auto img = random_file(3, 16, 16, 1);
  write_image(img, scratch("rt.ppm"));
  const auto back = read_image(scratch("rt.ppm"));
  EXPECT_EQ(back.channels, 3u);
  EXPECT_EQ(back.width, 16u);
  EXPECT_EQ(back.pixels, img.pixels);
}

TEST(PnmIo, GrayP5) {
  const auto img = random_file(1, 5, 7, 2);
  const auto back = decode_pnm(encode_pnm(img));
  EXPECT_EQ(back.channels, 1u);
  EXPECT_EQ(back.height, 5u);
  EXPECT_EQ(back.pixels, img.pixels);
}

TEST(PnmIo, HeaderComments) {
  const std::string bytes = std::string("P5\n# comment\n2 1\n# more\n255\n") + char(3) + char(250);
  const auto img = decode_pnm(bytes);
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{3, 250}));
}

TEST(PnmIo, Rejections) {
  EXPECT_THROW(decode_pnm("P3\n1 1\n255\n0 0 0"), Error);
  EXPECT_THROW(decode_pnm("P6\n2 x\n255\n"), Error);
  EXPECT_THROW(decode_pnm("P6\n2 2\n65535\n"), Error);
  EXPECT_THROW(decode_pnm(std::string("P6\n2 2\n255\n") + "abc"), Error);
  EXPECT_THROW(read_image(scratch("does_not_exist.ppm")), Error);
}

TEST(PnmIo, TensorQuantization) {
  const auto img = random_file(3, 6, 4, 3);
  const auto t = image_to_tensor<float>(img);
  EXPECT_EQ(t.shape(), (Shape{3, 6, 4}));
  EXPECT_EQ(tensor_to_image(t).pixels, img.pixels);
}

TEST(Bicubic, ConstantStaysConstant) {
  const Tensor img({3, 9, 13}, 0.37f);
  for (auto [h, w] : std::vector<std::pair<std::size_t, std::size_t>>{{4, 5}, {18, 26}, {31, 7}}) {
    const auto out = bicubic_resize(img, h, w);
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], 0.37f, 1e-6);
  }
}

TEST(Bicubic, SameSizeIsIdentity) {
  const auto img = image_to_tensor<double>(random_file(3, 12, 10, 4));
  const auto out = bicubic_resize(img, 12, 10);
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(out[i], img[i], 1e-6);
}

TEST(Bicubic, PartitionOfUnity) {
  for (auto [in, out] : std::vector<std::pair<std::size_t, std::size_t>>{{32, 8}, {8, 32}, {17, 5}, {5, 17}, {12, 12}})
    for (std::size_t d = 0; d < out; ++d) {
      const auto taps = cubic_taps(d, in, out);
      EXPECT_NEAR(taps.weight[0] + taps.weight[1] + taps.weight[2] + taps.weight[3], 1.0, 1e-12);
    }
}

TEST(Bicubic, RampDownsampleMatchesDenseOracle) {
  const std::size_t h = 16, w = 24;
  TensorD img({1, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) img.at(0, y, x) = 0.02 * double(x) + 0.03 * double(y);
  const auto out = bicubic_resize(img, h / 2, w / 2);
  for (std::size_t y = 0; y < h / 2; ++y)
    for (std::size_t x = 0; x < w / 2; ++x) {
      // separable: resample each source row at the x position, then the column
      std::vector<double> col(h);
      for (std::size_t r = 0; r < h; ++r) {
        std::vector<double> row(w);
        for (std::size_t c = 0; c < w; ++c) row[c] = img.at(0, r, c);
        col[r] = dense_resample_1d(row, (double(x) + 0.5) * 2.0 - 0.5);
      }
      EXPECT_NEAR(out.at(0, y, x), dense_resample_1d(col, (double(y) + 0.5) * 2.0 - 0.5), 1e-4);
    }
}

TEST(Degrade, ConstantRoundTrip) {
  const Tensor hr({3, 32, 32}, 0.6f);
  const auto up = upsample_bicubic(degrade(hr, 4), 4);
  EXPECT_EQ(up.shape(), hr.shape());
  for (std::size_t i = 0; i < up.size(); ++i) EXPECT_NEAR(up[i], 0.6f, 1e-6);
}

TEST(Degrade, ScaleOneIdentity) {
  const auto hr = image_to_tensor<double>(random_file(3, 8, 8, 5));
  const auto lr = degrade(hr, 1);
  for (std::size_t i = 0; i < hr.size(); ++i) EXPECT_NEAR(lr[i], hr[i], 1e-6);
}

TEST(Degrade, SmoothGradientPsnr) {
  TensorD hr({3, 64, 64});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 64; ++y)
      for (std::size_t x = 0; x < 64; ++x)
        hr.at(c, y, x) = 0.5 + 0.4 * std::sin(0.05 * double(x) + 0.1 * double(c)) * std::cos(0.04 * double(y));
  EXPECT_GT(psnr(hr, upsample_bicubic(degrade(hr, 4), 4)), 20.0);
}

TEST(Degrade, IndivisibleDims) { EXPECT_THROW(degrade(Tensor({3, 10, 12}), 3), Error); }

TEST(Degrade, IoQuantizationDoesNotPerturb) {
  const auto hr = quantize_8bit(procedural_texture<float>(32, 32, 3, 9));
  save_tensor_image(hr, scratch("q.ppm"));
  EXPECT_EQ(degrade(load_tensor_image<float>(scratch("q.ppm")), 4), degrade(hr, 4));
}

TEST(Nearest, Replicates) {
  const Tensor lr({1, 2, 2}, {1, 2, 3, 4});
  const auto up = upsample_nearest(lr, 2);
  EXPECT_EQ(up.vec(), (std::vector<float>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4}));
}

TEST(Patches, WholeImage) {
  const auto img = procedural_texture<float>(16, 16, 3, 1);
  const auto p = extract_patches(img, 16, 1, 3);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0], img);
  EXPECT_THROW(extract_patches(img, 17, 1, 3), Error);
}

TEST(Patches, Deterministic) {
  const auto img = procedural_texture<float>(40, 40, 3, 2);
  EXPECT_EQ(extract_patches(img, 8, 20, 5), extract_patches(img, 8, 20, 5));
  EXPECT_NE(extract_patches(img, 8, 20, 5), extract_patches(img, 8, 20, 6));
}

TEST(Patches, HistogramUniformity) {
  const std::size_t n = 256;
  TensorD img({1, n, n});
  const CounterRng r(13);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = r.uniform(i) * r.uniform(i + 1000000);
  constexpr int bins = 16;
  auto hist = [&](const std::vector<TensorD>& ts) {
    std::array<double, bins> h{};
    double total = 0;
    for (const auto& t : ts)
      for (std::size_t i = 0; i < t.size(); ++i) {
        h[std::min(bins - 1, int(t[i] * bins))] += 1;
        total += 1;
      }
    for (auto& v : h) v /= total;
    return h;
  };
  const auto src = hist({img});
  const auto pat = hist(extract_patches(img, 8, 10000, 21));
  double tv = 0;
  for (int b = 0; b < bins; ++b) tv += 0.5 * std::fabs(src[std::size_t(b)] - pat[std::size_t(b)]);
  EXPECT_LT(tv, 0.02);
}

TEST(Texture, DeterministicAndInRange) {
  const auto a = procedural_texture<float>(32, 48, 3, 77);
  EXPECT_EQ(a, procedural_texture<float>(32, 48, 3, 77));
  EXPECT_NE(a, procedural_texture<float>(32, 48, 3, 78));
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_GE(a[i], 0.05f - 1e-6f);
    EXPECT_LE(a[i], 0.95f + 1e-6f);
  }
}

TEST(Dataset, ListingAndLookup) {
  const auto root = scratch("ds");
  fs::remove_all(root);
  fs::create_directories(hr_dir(root));
  write_image(random_file(3, 8, 8, 1), hr_dir(root) / "b.ppm");
  write_image(random_file(3, 8, 8, 2), hr_dir(root) / "a.ppm");
  const auto files = list_images(hr_dir(root));
  ASSERT_EQ(files.size(), 2u);
  EXPECT_EQ(files[0].stem(), "a");
  EXPECT_EQ(find_image(hr_dir(root), "b"), hr_dir(root) / "b.ppm");
  EXPECT_THROW(find_image(hr_dir(root), "c"), Error);
  EXPECT_THROW(list_images(root / "missing"), Error);
  EXPECT_EQ(lr_dir(root, 4), root / "lrX4");
}

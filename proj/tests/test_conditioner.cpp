#include <gtest/gtest.h>

#include <filesystem>

#include "acdmsr/conditioner.hpp"
#include "acdmsr/metrics.hpp"

using namespace acdmsr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "acdmsr_test_conditioner" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<SrExample> textures(std::size_t n, std::size_t size, std::uint64_t seed) {
  std::vector<SrExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    SrExample e;
    e.id = "img" + std::to_string(i);
    e.hr = quantize_8bit(procedural_texture<float>(size, size, 3, seed + i));
    e.lr = quantize_8bit(degrade(e.hr, 4));
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

TEST(Conditioner, BicubicConstant) {
  const Conditioner<float> c(ConditionerSpec{});
  const auto x = c(Tensor({3, 5, 7}, 0.25f));
  EXPECT_EQ(x.shape(), (Shape{3, 20, 28}));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x[i], -0.5f, 1e-6);
}

TEST(Conditioner, NearestIsRawLr) {
  ConditionerSpec spec;
  spec.mode = ConditionMode::nearest;
  spec.scale = 2;
  const Tensor lr({1, 1, 2}, {0.0f, 1.0f});
  const auto x = Conditioner<float>(spec)(lr);
  EXPECT_EQ(x.vec(), (std::vector<float>{-1, -1, 1, 1, -1, -1, 1, 1}));
}

TEST(Conditioner, FileModePassThrough) {
  const auto dir = scratch("file");
  const auto stored = quantize_8bit(procedural_texture<float>(16, 16, 3, 3));
  save_tensor_image(stored, dir / "abc.ppm");
  ConditionerSpec spec;
  spec.mode = ConditionMode::file;
  spec.dir = dir;
  const Conditioner<float> c(spec);
  EXPECT_EQ(c(Tensor({3, 4, 4}), "abc"), to_diffusion(stored));
  try {
    c(Tensor({3, 4, 4}), "missing");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("missing"), std::string::npos);
  }
  try {
    c(Tensor({3, 5, 4}), "abc");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("abc"), std::string::npos);
  }
}

TEST(Conditioner, SpecValidation) {
  ConditionerSpec spec;
  spec.scale = 5;
  EXPECT_THROW(Conditioner<float>{spec}, Error);
  spec.scale = 4;
  spec.mode = ConditionMode::learned;
  EXPECT_THROW(Conditioner<float>{spec}, Error);
  EXPECT_THROW(parse_condition_mode("edsr"), Error);
}

TEST(TrainConditioner, OverfitsOnePatch) {
  const auto data = textures(1, 32, 50);
  ConditionerTrainConfig cfg;
  cfg.batch = 1;
  cfg.steps = 1000;
  cfg.lr = 1e-3;
  cfg.net.width = 16;
  const auto r = train_conditioner(data, cfg);
  EXPECT_LT(r.losses.back(), 0.25 * r.losses.front()) << r.losses.front() << " -> " << r.losses.back();
}

TEST(TrainConditioner, ZeroLearningRate) {
  const auto data = textures(2, 32, 60);
  ConditionerTrainConfig cfg;
  cfg.batch = 2;
  cfg.steps = 5;
  cfg.lr = 0.0;
  cfg.net.width = 8;
  cfg.seed = 4;
  const auto r = train_conditioner(data, cfg);
  SrNetConfig nc = cfg.net;
  nc.seed = cfg.seed;
  EXPECT_EQ(encode_checkpoint(r.net.params()), encode_checkpoint(SrNet<float>(nc).params()));
}

TEST(TrainConditioner, DeterministicCheckpoints) {
  const auto data = textures(3, 32, 70);
  ConditionerTrainConfig cfg;
  cfg.batch = 4;
  cfg.steps = 10;
  cfg.net.width = 8;
  const auto dir = scratch("det");
  save_sr_net(train_conditioner(data, cfg).net, dir / "a.acdt");
  save_sr_net(train_conditioner(data, cfg).net, dir / "b.acdt");
  EXPECT_EQ(read_file_bytes(dir / "a.acdt"), read_file_bytes(dir / "b.acdt"));
  const auto loaded = load_sr_net<float>(dir / "a.acdt");
  EXPECT_EQ(loaded.config().width, 8u);
}

TEST(TrainConditioner, EmptyDataset) {
  EXPECT_THROW(train_conditioner({}, ConditionerTrainConfig{}), Error);
  EXPECT_THROW(load_sr_dataset(scratch("empty"), 4), Error);
}

TEST(TrainConditioner, LearnedBeatsBicubicOnHeldOut) {
  // 24 images overfit; 64 generalise
  const auto train = textures(64, 64, 100), test = textures(6, 64, 900);
  ConditionerTrainConfig cfg;
  cfg.batch = 8;
  cfg.steps = 1000;
  cfg.lr = 1e-3;
  cfg.net.width = 16;
  const auto dir = scratch("learned");
  save_sr_net(train_conditioner(train, cfg).net, dir / "sr.acdt");
  ConditionerSpec learned_spec;
  learned_spec.mode = ConditionMode::learned;
  learned_spec.checkpoint = dir / "sr.acdt";
  const Conditioner<float> learned(learned_spec), bicubic(ConditionerSpec{});
  double ml = 0, mb = 0;
  for (const auto& e : test) {
    const auto hr = to_diffusion(e.hr);
    ml += mse(learned(e.lr, e.id), hr);
    mb += mse(bicubic(e.lr, e.id), hr);
  }
  EXPECT_LT(ml, mb) << "learned " << ml / 6 << " bicubic " << mb / 6;
}

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "acdmsr/adam.hpp"
#include "acdmsr/checkpoint.hpp"
#include "acdmsr/imaging.hpp"
#include "acdmsr/layers.hpp"
#include "acdmsr/parallel.hpp"

namespace acdmsr {

// nearest is the raw-LR condition: LR replicated up to HR size.
enum class ConditionMode { bicubic, nearest, file, learned };

inline const char* to_string(ConditionMode m) {
  switch (m) {
    case ConditionMode::bicubic: return "bicubic";
    case ConditionMode::nearest: return "nearest";
    case ConditionMode::file: return "file";
    default: return "learned";
  }
}

inline ConditionMode parse_condition_mode(const std::string& s) {
  if (s == "bicubic") return ConditionMode::bicubic;
  if (s == "nearest" || s == "raw-lr" || s == "lr") return ConditionMode::nearest;
  if (s == "file") return ConditionMode::file;
  if (s == "learned") return ConditionMode::learned;
  fail(ErrorKind::config, "conditioner mode must be bicubic|nearest|file|learned, got '" + s + "'");
}

inline void check_scale(std::size_t scale) {
  if (scale != 2 && scale != 3 && scale != 4 && scale != 8)
    fail(ErrorKind::config, "scale must be one of 2, 3, 4, 8 (got " + std::to_string(scale) + ")");
}

struct ConditionerSpec {
  ConditionMode mode = ConditionMode::bicubic;
  std::size_t scale = 4;
  std::filesystem::path dir;         // file mode
  std::filesystem::path checkpoint;  // learned mode
};

// ---------------------------------------------------------------------------
// Small SR network: bicubic(lr) + five 3x3 conv layers predicting a residual.

struct SrNetConfig {
  std::size_t channels = 3;
  std::size_t width = 32;
  std::uint64_t seed = 0;
};

template <typename T>
class SrNet {
 public:
  using Var = typename Graph<T>::Var;
  static constexpr int kLayers = 5;

  explicit SrNet(SrNetConfig cfg) : cfg_(cfg), params_(init(cfg)) {}
  SrNet(SrNetConfig cfg, ParameterSet<T> params) : cfg_(cfg), params_(std::move(params)) {
    const auto ref = init(cfg);
    for (const auto& [name, t] : ref) {
      auto it = params_.find(name);
      if (it == params_.end()) fail(ErrorKind::shape, "conditioner checkpoint lacks '" + name + "'");
      require_same_shape(it->second.shape(), t.shape(), ("parameter '" + name + "'").c_str());
    }
    if (params_.size() != ref.size()) fail(ErrorKind::shape, "conditioner checkpoint has extra parameters");
  }

  static ParameterSet<T> init(const SrNetConfig& c) {
    ParameterSet<T> p;
    for (int l = 0; l < kLayers; ++l) {
      const std::size_t cin = l == 0 ? c.channels : c.width;
      const std::size_t cout = l == kLayers - 1 ? c.channels : c.width;
      add_conv_params(p, c.seed, "sr" + std::to_string(l), cin, cout, 3, l == kLayers - 1 ? 0.1 : 1.0);
    }
    return p;
  }

  const SrNetConfig& config() const { return cfg_; }
  const ParameterSet<T>& params() const { return params_; }
  ParameterSet<T>& params() { return params_; }

  // up: bicubic-upsampled LR in the diffusion domain.
  Var forward(Graph<T>& g, const BasicTensor<T>& up, bool trainable) const {
    if (up.rank() != 3 || up.dim(0) != cfg_.channels)
      fail(ErrorKind::shape, "SR net input must be " + std::to_string(cfg_.channels) + " x H x W, got " + shape_str(up.shape()));
    const Binder<T> bind(g, params_, trainable);
    const Var in = g.constant(up);
    Var h = in;
    for (int l = 0; l < kLayers; ++l) {
      h = conv_bias(bind, h, "sr" + std::to_string(l));
      if (l < kLayers - 1) h = ops::silu(g, h);
    }
    return ops::add(g, in, h);
  }

  BasicTensor<T> apply(const BasicTensor<T>& up) const {
    Graph<T> g;
    return g.value(forward(g, up, false));
  }

  std::map<std::string, std::string> arch() const {
    return {{"model", "sr_net"}, {"channels", std::to_string(cfg_.channels)}, {"width", std::to_string(cfg_.width)}};
  }

 private:
  SrNetConfig cfg_;
  ParameterSet<T> params_;
};

inline SrNetConfig sr_config_from_arch(const std::map<std::string, std::string>& kv) {
  if (!kv.count("model") || kv.at("model") != "sr_net") fail(ErrorKind::io, "sidecar is not an sr_net checkpoint");
  if (!kv.count("channels") || !kv.count("width")) fail(ErrorKind::io, "sr_net sidecar incomplete");
  SrNetConfig c;
  c.channels = std::stoul(kv.at("channels"));
  c.width = std::stoul(kv.at("width"));
  return c;
}

template <typename T>
SrNet<T> load_sr_net(const std::filesystem::path& ckpt) {
  return SrNet<T>(sr_config_from_arch(load_sidecar(ckpt)), load_checkpoint<T>(ckpt));
}

// ---------------------------------------------------------------------------

template <typename T>
class Conditioner {
 public:
  explicit Conditioner(ConditionerSpec spec) : spec_(std::move(spec)) {
    check_scale(spec_.scale);
    if (spec_.mode == ConditionMode::file && spec_.dir.empty())
      fail(ErrorKind::config, "file conditioner needs conditioner.dir");
    if (spec_.mode == ConditionMode::learned) {
      if (spec_.checkpoint.empty()) fail(ErrorKind::config, "learned conditioner needs conditioner.checkpoint");
      net_ = std::make_shared<SrNet<T>>(load_sr_net<T>(spec_.checkpoint));
    }
  }

  Conditioner(ConditionerSpec spec, SrNet<T> net) : spec_(std::move(spec)), net_(std::make_shared<SrNet<T>>(std::move(net))) {
    check_scale(spec_.scale);
    spec_.mode = ConditionMode::learned;
  }

  const ConditionerSpec& spec() const { return spec_; }

  // lr in [0, 1]; returns x^C at HR size in the diffusion domain [-1, 1].
  BasicTensor<T> operator()(const BasicTensor<T>& lr, const std::string& id = "") const {
    if (lr.rank() != 3) fail(ErrorKind::shape, "LR image must be C x H x W, got " + shape_str(lr.shape()));
    const std::size_t s = spec_.scale;
    switch (spec_.mode) {
      case ConditionMode::bicubic:
        return to_diffusion(upsample_bicubic(lr, s));
      case ConditionMode::nearest:
        return to_diffusion(upsample_nearest(lr, s));
      case ConditionMode::file: {
        BasicTensor<T> img = load_tensor_image<T>(find_image(spec_.dir, id));
        const Shape want{lr.dim(0), lr.dim(1) * s, lr.dim(2) * s};
        if (img.shape() != want)
          fail(ErrorKind::data, "condition for id '" + id + "' is " + shape_str(img.shape()) + ", expected " + shape_str(want));
        return to_diffusion(img);
      }
      case ConditionMode::learned:
        return clamp(net_->apply(to_diffusion(upsample_bicubic(lr, s))), T(-1), T(1));
    }
    fail(ErrorKind::config, "unknown conditioner mode");
  }

 private:
  ConditionerSpec spec_;
  std::shared_ptr<SrNet<T>> net_;
};

// ---------------------------------------------------------------------------
// Training data shared by the conditioner and denoiser trainers: full HR
// images and their LR counterparts, both in [0, 1].

struct SrExample {
  std::string id;
  Tensor hr, lr;
};

inline std::vector<SrExample> load_sr_dataset(const std::filesystem::path& root, std::size_t scale) {
  check_scale(scale);
  if (!std::filesystem::is_directory(hr_dir(root))) fail(ErrorKind::data, "dataset missing: no " + hr_dir(root).string());
  if (!std::filesystem::is_directory(lr_dir(root, scale)))
    fail(ErrorKind::data, "dataset missing: no " + lr_dir(root, scale).string() + " (run degrade first)");
  std::vector<SrExample> out;
  for (const auto& p : list_images(hr_dir(root))) {
    SrExample e;
    e.id = p.stem().string();
    e.hr = load_tensor_image<float>(p);
    e.lr = load_tensor_image<float>(find_image(lr_dir(root, scale), e.id));
    const Shape want{e.hr.dim(0), e.hr.dim(1) / scale, e.hr.dim(2) / scale};
    if (e.lr.shape() != want || e.hr.dim(1) % scale || e.hr.dim(2) % scale)
      fail(ErrorKind::data, "LR image for '" + e.id + "' has shape " + shape_str(e.lr.shape()) + ", expected " + shape_str(want));
    out.push_back(std::move(e));
  }
  if (out.empty()) fail(ErrorKind::data, "dataset is empty: " + hr_dir(root).string());
  return out;
}

// Picks (image, top-left) for draw `index` of a run; top-left is a multiple of
// `align` so LR-aligned crops are possible.
struct PatchDraw {
  std::size_t image = 0, y = 0, x = 0;
};

inline PatchDraw draw_patch(const CounterRng& rng, std::uint64_t index, const std::vector<SrExample>& data,
                            std::size_t patch, std::size_t align) {
  const CounterRng r = rng.stream({index});
  PatchDraw d;
  d.image = std::size_t(r.uniform_int(0, 0, std::int64_t(data.size()) - 1));
  const auto& hr = data[d.image].hr;
  if (patch > hr.dim(1) || patch > hr.dim(2))
    fail(ErrorKind::data, "patch " + std::to_string(patch) + " exceeds image '" + data[d.image].id + "'");
  d.y = std::size_t(r.uniform_int(1, 0, std::int64_t((hr.dim(1) - patch) / align))) * align;
  d.x = std::size_t(r.uniform_int(2, 0, std::int64_t((hr.dim(2) - patch) / align))) * align;
  return d;
}

struct ConditionerTrainConfig {
  std::size_t scale = 4;
  std::size_t patch = 32;
  std::size_t batch = 8;
  std::size_t steps = 2000;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  SrNetConfig net;
};

struct ConditionerTrainResult {
  SrNet<float> net;
  std::vector<double> losses;
};

// Squared-error regression of HR patches from bicubic-upsampled LR images.
inline ConditionerTrainResult train_conditioner(const std::vector<SrExample>& data, const ConditionerTrainConfig& cfg) {
  if (data.empty()) fail(ErrorKind::data, "conditioner training set is empty");
  if (cfg.patch % cfg.scale) fail(ErrorKind::config, "patch must be a multiple of scale");
  if (cfg.batch < 1 || cfg.steps < 1) fail(ErrorKind::config, "batch and steps must be >= 1");
  SrNetConfig nc = cfg.net;
  nc.channels = data.front().hr.dim(0);
  nc.seed = cfg.seed;
  ConditionerTrainResult res{SrNet<float>(nc), {}};
  AdamState<float> st;
  st.hyper.lr = cfg.lr;
  const CounterRng rng = CounterRng(cfg.seed).stream({0xc0d1});
  // Upsample whole images so crops match inference (no patch-border clamping).
  std::vector<Tensor> up(data.size());
  parallel_for(data.size(), [&](std::size_t i) { up[i] = to_diffusion(upsample_bicubic(data[i].lr, cfg.scale)); });
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::vector<ParameterSet<float>> grads(cfg.batch);
    std::vector<double> losses(cfg.batch);
    parallel_for(cfg.batch, [&](std::size_t b) {
      const auto d = draw_patch(rng, step * cfg.batch + b, data, cfg.patch, cfg.scale);
      const Tensor in = crop(up[d.image], d.y, d.x, cfg.patch, cfg.patch);
      const Tensor hr = to_diffusion(crop(data[d.image].hr, d.y, d.x, cfg.patch, cfg.patch));
      Graph<float> g;
      auto loss = ops::mse(g, res.net.forward(g, in, true), g.constant(hr));
      losses[b] = g.value(loss)[0];
      grads[b] = g.reverse_gradients(loss);
    });
    ParameterSet<float> total = grads[0];
    for (std::size_t b = 1; b < cfg.batch; ++b)
      for (auto& [name, t] : total) {
        const auto& o = grads[b].at(name);
        for (std::size_t i = 0; i < t.size(); ++i) t[i] += o[i];
      }
    double mean_loss = 0;
    for (auto& [name, t] : total)
      for (auto& v : t.data()) v /= float(cfg.batch);
    for (double l : losses) mean_loss += l;
    res.losses.push_back(mean_loss / double(cfg.batch));
    adam_step(res.net.params(), total, st);
  }
  return res;
}

inline void save_sr_net(const SrNet<float>& net, const std::filesystem::path& ckpt) {
  save_checkpoint(ckpt, net.params());
  save_sidecar(ckpt, net.arch());
}

}  // namespace acdmsr

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "acdmsr/checkpoint.hpp"
#include "acdmsr/denoiser.hpp"
#include "acdmsr/forward.hpp"
#include "acdmsr/layers.hpp"

namespace acdmsr {

enum class Objective { image, noise };

inline const char* to_string(Objective o) { return o == Objective::image ? "image" : "noise"; }

inline Objective parse_objective(const std::string& s) {
  if (s == "image") return Objective::image;
  if (s == "noise") return Objective::noise;
  fail(ErrorKind::config, "objective must be image|noise, got '" + s + "'");
}

struct UNetConfig {
  std::size_t channels = 3;       // image channels of x_t and of the output
  std::size_t cond_channels = 3;  // channels of the condition image
  std::size_t base_width = 32;
  std::size_t time_dim = 64;
  std::uint64_t seed = 0;
  bool cond_skip = false;   // output = cond + net, so an untrained net returns the condition
  bool input_gate = false;  // x_t enters scaled by sqrt(alpha_bar_t)
};

// Factor applied to x_t before it enters the network. Gating keeps pure-noise
// inputs at large t from swamping the condition channels.
inline double input_scale(const UNetConfig& c, const NoiseSchedule& s, double t) {
  return c.input_gate ? std::sqrt(s.alpha_bar_at(t)) : 1.0;
}

// Small conditional encoder-decoder: two stride-2 downsampling stages, one
// residual block per level, skip connections by concatenation, sinusoidal time
// embedding added per block. Input is concat(x_t, cond) along channels.
template <typename T>
class CondUNet {
 public:
  using Var = typename Graph<T>::Var;

  explicit CondUNet(UNetConfig cfg) : cfg_(cfg), params_(init(cfg)) {}
  CondUNet(UNetConfig cfg, ParameterSet<T> params) : cfg_(cfg), params_(std::move(params)) {
    const ParameterSet<T> ref = init(cfg);
    for (const auto& [name, t] : ref) {
      auto it = params_.find(name);
      if (it == params_.end()) fail(ErrorKind::shape, "checkpoint lacks parameter '" + name + "'");
      require_same_shape(it->second.shape(), t.shape(), ("parameter '" + name + "'").c_str());
    }
    if (params_.size() != ref.size()) fail(ErrorKind::shape, "checkpoint has unexpected extra parameters");
  }

  const UNetConfig& config() const { return cfg_; }
  const ParameterSet<T>& params() const { return params_; }
  ParameterSet<T>& params() { return params_; }

  static ParameterSet<T> init(const UNetConfig& c) {
    ParameterSet<T> p;
    const std::size_t w = c.base_width, w2 = 2 * c.base_width, td = c.time_dim;
    const auto s = c.seed;
    add_linear_params(p, s, "temb", td, td);
    add_conv_params(p, s, "in", c.channels + c.cond_channels, w, 3);
    add_res_params(p, s, "res0", w, td);
    add_conv_params(p, s, "down1", w, w2, 3);
    add_res_params(p, s, "res1", w2, td);
    add_conv_params(p, s, "down2", w2, w2, 3);
    add_res_params(p, s, "mid", w2, td);
    add_conv_params(p, s, "up1.merge", 2 * w2, w2, 3);
    add_res_params(p, s, "up1.res", w2, td);
    add_conv_params(p, s, "up0.merge", w2 + w, w, 3);
    add_res_params(p, s, "up0.res", w, td);
    add_conv_params(p, s, "out", w, c.channels, 3, 0.1);
    return p;
  }

  // Records the forward pass; parameters are trainable leaves when trainable.
  Var forward(Graph<T>& g, const BasicTensor<T>& x_t, double t, const BasicTensor<T>& cond, bool trainable,
              double x_scale = 1.0) const {
    check_inputs(x_t, cond);
    const Binder<T> bind(g, params_, trainable);
    const auto e = time_embedding(t, cfg_.time_dim);
    Var temb = g.constant(BasicTensor<T>({cfg_.time_dim}, std::vector<T>(e.begin(), e.end())));
    temb = ops::silu(g, linear_bias(bind, temb, "temb"));

    Var h = ops::concat_channels(g, g.constant(x_scale == 1.0 ? x_t : map(x_t, [x_scale](T v) { return T(x_scale * v); })),
                                 g.constant(cond));
    h = conv_bias(bind, h, "in");
    const Var s0 = res_block(bind, h, temb, "res0");
    h = conv_bias(bind, s0, "down1", 2);
    const Var s1 = res_block(bind, h, temb, "res1");
    h = conv_bias(bind, s1, "down2", 2);
    h = res_block(bind, h, temb, "mid");
    h = ops::concat_channels(g, ops::upsample2x(g, h), s1);
    h = res_block(bind, conv_bias(bind, h, "up1.merge"), temb, "up1.res");
    h = ops::concat_channels(g, ops::upsample2x(g, h), s0);
    h = res_block(bind, conv_bias(bind, h, "up0.merge"), temb, "up0.res");
    const Var out = conv_bias(bind, ops::silu(g, h), "out");
    return cfg_.cond_skip ? ops::add(g, out, g.constant(cond)) : out;
  }

  BasicTensor<T> apply(const BasicTensor<T>& x_t, double t, const BasicTensor<T>& cond, double x_scale = 1.0) const {
    Graph<T> g;
    return g.value(forward(g, x_t, t, cond, false, x_scale));
  }

  std::map<std::string, std::string> arch() const {
    return {{"model", "cond_unet"},
            {"channels", std::to_string(cfg_.channels)},
            {"cond_channels", std::to_string(cfg_.cond_channels)},
            {"base_width", std::to_string(cfg_.base_width)},
            {"time_dim", std::to_string(cfg_.time_dim)},
            {"cond_skip", cfg_.cond_skip ? "1" : "0"},
            {"input_gate", cfg_.input_gate ? "1" : "0"}};
  }

 private:
  static void add_res_params(ParameterSet<T>& p, std::uint64_t s, const std::string& prefix, std::size_t c,
                             std::size_t td) {
    add_conv_params(p, s, prefix + ".conv1", c, c, 3);
    add_linear_params(p, s, prefix + ".temb", td, c);
    add_conv_params(p, s, prefix + ".conv2", c, c, 3, 0.1);
  }

  static Var res_block(const Binder<T>& bind, Var x, Var temb, const std::string& prefix) {
    auto& g = bind.graph();
    Var h = conv_bias(bind, ops::silu(g, x), prefix + ".conv1");
    h = ops::add_channel(g, h, linear_bias(bind, temb, prefix + ".temb"));
    h = conv_bias(bind, ops::silu(g, h), prefix + ".conv2");
    return ops::add(g, x, h);
  }

  void check_inputs(const BasicTensor<T>& x_t, const BasicTensor<T>& cond) const {
    if (x_t.rank() != 3 || x_t.dim(0) != cfg_.channels)
      fail(ErrorKind::shape, "x_t must be " + std::to_string(cfg_.channels) + " x H x W, got " + shape_str(x_t.shape()));
    if (cond.rank() != 3 || cond.dim(0) != cfg_.cond_channels || cond.dim(1) != x_t.dim(1) || cond.dim(2) != x_t.dim(2))
      fail(ErrorKind::shape, "condition " + shape_str(cond.shape()) + " does not match x_t " + shape_str(x_t.shape()) +
                                 " with " + std::to_string(cfg_.cond_channels) + " condition channels");
    if (cfg_.cond_skip && cfg_.cond_channels != cfg_.channels)
      fail(ErrorKind::shape, "cond_skip needs as many condition channels as output channels");
    if (x_t.dim(1) % 4 != 0 || x_t.dim(2) % 4 != 0)
      fail(ErrorKind::shape, "spatial dims must be divisible by 4, got " + shape_str(x_t.shape()));
  }

  UNetConfig cfg_;
  ParameterSet<T> params_;
};

// Adapts a CondUNet to the Denoiser interface. In noise-prediction mode the
// network output is read as eps_hat and converted to x0_hat.
template <typename T>
class UNetDenoiser final : public Denoiser<T> {
 public:
  UNetDenoiser(const CondUNet<T>& net, const NoiseSchedule& schedule, Objective objective)
      : net_(&net), schedule_(&schedule), objective_(objective) {}

  BasicTensor<T> denoise(const BasicTensor<T>& x_t, double t, const BasicTensor<T>* cond) const override {
    if (!cond) fail(ErrorKind::shape, "conditional network requires a condition image");
    BasicTensor<T> out = net_->apply(x_t, t, *cond, input_scale(net_->config(), *schedule_, t));
    if (objective_ == Objective::noise) return x0_from_eps_at(*schedule_, x_t, out, t);
    return out;
  }

 private:
  const CondUNet<T>* net_;
  const NoiseSchedule* schedule_;
  Objective objective_;
};

inline UNetConfig unet_config_from_arch(const std::map<std::string, std::string>& kv) {
  auto get = [&](const char* k) {
    auto it = kv.find(k);
    if (it == kv.end()) fail(ErrorKind::io, std::string("sidecar lacks '") + k + "'");
    return std::stoul(it->second);
  };
  if (kv.count("model") && kv.at("model") != "cond_unet") fail(ErrorKind::io, "sidecar is not a cond_unet checkpoint");
  UNetConfig c;
  c.channels = get("channels");
  c.cond_channels = get("cond_channels");
  c.base_width = get("base_width");
  c.time_dim = get("time_dim");
  c.cond_skip = kv.count("cond_skip") && kv.at("cond_skip") == "1";
  c.input_gate = kv.count("input_gate") && kv.at("input_gate") == "1";
  return c;
}

}  // namespace acdmsr

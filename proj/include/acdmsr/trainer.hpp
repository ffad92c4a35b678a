#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "acdmsr/adam.hpp"
#include "acdmsr/conditioner.hpp"
#include "acdmsr/forward.hpp"
#include "acdmsr/parallel.hpp"
#include "acdmsr/unet.hpp"

namespace acdmsr {

enum class LossKind { l2, l1 };

inline const char* to_string(LossKind k) { return k == LossKind::l2 ? "l2" : "l1"; }

inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "l2") return LossKind::l2;
  if (s == "l1") return LossKind::l1;
  fail(ErrorKind::config, "loss must be l2|l1, got '" + s + "'");
}

struct TrainConfig {
  ScheduleParams schedule;
  UNetConfig model;
  std::size_t batch = 16;
  double lr = 1e-4;
  std::size_t steps = 10000;
  Objective objective = Objective::image;
  LossKind loss = LossKind::l2;
  std::size_t patch = 32;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0: only at the end
  double ema = 0;                    // weight-average decay; 0 keeps the raw iterate
};

// One training example after noising.
template <typename T>
struct TrainSample {
  BasicTensor<T> x0, cond, eps, x_t;
  std::size_t t = 1;
};

// Mean over the batch of the per-sample residual against x0 (image objective)
// or eps (noise objective). The model maps (x_t, t, cond) to x0_hat.
template <typename T>
double compute_loss(const Denoiser<T>& model, const NoiseSchedule& s, const std::vector<BasicTensor<T>>& x0,
                    const std::vector<BasicTensor<T>>& cond, const std::vector<std::size_t>& ts,
                    const std::vector<BasicTensor<T>>& eps, Objective objective, LossKind kind = LossKind::l2) {
  if (x0.empty() || x0.size() != cond.size() || x0.size() != ts.size() || x0.size() != eps.size())
    fail(ErrorKind::shape, "compute_loss batch components differ in length");
  double total = 0;
  for (std::size_t b = 0; b < x0.size(); ++b) {
    const auto xt = q_sample(s, x0[b], ts[b], eps[b]).x_t;
    const auto pred = model.denoise(xt, double(ts[b]), &cond[b]);
    require_same_shape(pred.shape(), x0[b].shape(), "model output");
    const auto out = objective == Objective::image ? pred : eps_from_x0(s, xt, pred, ts[b]);
    const auto& target = objective == Objective::image ? x0[b] : eps[b];
    double acc = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double d = double(out[i]) - double(target[i]);
      acc += kind == LossKind::l2 ? d * d : std::abs(d);
    }
    total += acc / double(out.size());
  }
  return total / double(x0.size());
}

// Full-image condition tensors, computed once; patches are cropped from them
// at the same position as the HR crop.
struct PreparedData {
  std::vector<SrExample> examples;
  std::vector<Tensor> conditions;  // diffusion domain, HR size
};

inline PreparedData prepare_training_data(std::vector<SrExample> data, const Conditioner<float>& cond) {
  PreparedData p;
  p.conditions.resize(data.size());
  parallel_for(data.size(), [&](std::size_t i) { p.conditions[i] = cond(data[i].lr, data[i].id); });
  p.examples = std::move(data);
  return p;
}

// The draw for global sample index k = step * batch + b.
inline TrainSample<float> make_train_sample(const PreparedData& data, const NoiseSchedule& s, const TrainConfig& cfg,
                                            std::uint64_t k) {
  const CounterRng rng = CounterRng(cfg.seed).stream({0x7a41});
  const auto d = draw_patch(rng, k, data.examples, cfg.patch, 1);
  TrainSample<float> ts;
  ts.x0 = to_diffusion(crop(data.examples[d.image].hr, d.y, d.x, cfg.patch, cfg.patch));
  ts.cond = crop(data.conditions[d.image], d.y, d.x, cfg.patch, cfg.patch);
  ts.t = std::size_t(rng.stream({k}).uniform_int(3, 1, std::int64_t(s.T())));
  ts.eps = forward_noise<float>(cfg.seed, k, ts.t, ts.x0.shape());
  ts.x_t = q_sample(s, ts.x0, ts.t, ts.eps).x_t;
  return ts;
}

struct TrainResult {
  CondUNet<float> net;
  std::vector<double> losses;
};

using StepCallback = std::function<void(std::size_t step, double loss, const CondUNet<float>& net)>;

inline TrainResult train(const PreparedData& data, const TrainConfig& cfg, const StepCallback& on_step = {}) {
  if (data.examples.empty()) fail(ErrorKind::data, "training set is empty");
  if (cfg.batch < 1 || cfg.steps < 1) fail(ErrorKind::config, "batch and steps must be >= 1");
  if ((cfg.model.cond_skip || cfg.model.input_gate) && cfg.objective != Objective::image)
    fail(ErrorKind::config, "model.cond_skip and model.input_gate only apply to the image objective");
  const NoiseSchedule s = make_linear_schedule(cfg.schedule);
  UNetConfig mc = cfg.model;
  mc.channels = data.examples.front().hr.dim(0);
  mc.cond_channels = data.conditions.front().dim(0);
  mc.seed = cfg.seed;
  TrainResult res{CondUNet<float>(mc), {}};
  if (cfg.ema < 0 || cfg.ema >= 1) fail(ErrorKind::config, "ema decay must be in [0, 1)");
  AdamState<float> st;
  st.hyper.lr = cfg.lr;
  CondUNet<float> avg = res.net;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::vector<ParameterSet<float>> grads(cfg.batch);
    std::vector<double> losses(cfg.batch);
    parallel_for(cfg.batch, [&](std::size_t b) {
      const auto ts = make_train_sample(data, s, cfg, step * cfg.batch + b);
      Graph<float> g;
      auto y = res.net.forward(g, ts.x_t, double(ts.t), ts.cond, true, input_scale(res.net.config(), s, double(ts.t)));
      auto target = g.constant(cfg.objective == Objective::image ? ts.x0 : ts.eps);
      auto loss = cfg.loss == LossKind::l2 ? ops::mse(g, y, target) : ops::mae(g, y, target);
      losses[b] = g.value(loss)[0];
      grads[b] = g.reverse_gradients(loss);
    });
    // fixed reduction order: sample index ascending
    ParameterSet<float> total = std::move(grads[0]);
    for (std::size_t b = 1; b < cfg.batch; ++b)
      for (auto& [name, t] : total) {
        const auto& o = grads[b].at(name);
        for (std::size_t i = 0; i < t.size(); ++i) t[i] += o[i];
      }
    for (auto& [name, t] : total)
      for (auto& v : t.data()) v /= float(cfg.batch);
    double mean_loss = 0;
    for (double l : losses) mean_loss += l;
    mean_loss /= double(cfg.batch);
    if (!std::isfinite(mean_loss)) fail(ErrorKind::non_finite, "training loss became non-finite at step " + std::to_string(step + 1));
    adam_step(res.net.params(), total, st);
    if (cfg.ema > 0) {
      // warm-up so early averages are not dominated by the initialisation
      const double d = std::min(cfg.ema, (1.0 + double(step)) / (10.0 + double(step)));
      for (auto& [name, t] : avg.params()) {
        const auto& cur = res.net.params().at(name);
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = float(d * double(t[i]) + (1.0 - d) * double(cur[i]));
      }
    }
    res.losses.push_back(mean_loss);
    if (on_step) on_step(step + 1, mean_loss, cfg.ema > 0 ? avg : res.net);
  }
  if (cfg.ema > 0) res.net = std::move(avg);
  return res;
}

inline std::map<std::string, std::string> denoiser_sidecar(const CondUNet<float>& net, const TrainConfig& cfg) {
  auto kv = net.arch();
  kv["objective"] = to_string(cfg.objective);
  kv["schedule.T"] = std::to_string(cfg.schedule.T);
  std::ostringstream bs, be;
  bs.precision(17);
  be.precision(17);
  bs << cfg.schedule.beta_start;
  be << cfg.schedule.beta_end;
  kv["schedule.beta_start"] = bs.str();
  kv["schedule.beta_end"] = be.str();
  return kv;
}

inline void save_denoiser(const CondUNet<float>& net, const TrainConfig& cfg, const std::filesystem::path& ckpt) {
  save_checkpoint(ckpt, net.params());
  save_sidecar(ckpt, denoiser_sidecar(net, cfg));
}

struct LoadedDenoiser {
  CondUNet<float> net;
  Objective objective;
  ScheduleParams schedule;
};

inline LoadedDenoiser load_denoiser(const std::filesystem::path& ckpt) {
  const auto kv = load_sidecar(ckpt);
  LoadedDenoiser d{CondUNet<float>(unet_config_from_arch(kv), load_checkpoint<float>(ckpt)), Objective::image, {}};
  if (kv.count("objective")) d.objective = parse_objective(kv.at("objective"));
  if (kv.count("schedule.T")) d.schedule.T = std::stoul(kv.at("schedule.T"));
  if (kv.count("schedule.beta_start")) d.schedule.beta_start = std::stod(kv.at("schedule.beta_start"));
  if (kv.count("schedule.beta_end")) d.schedule.beta_end = std::stod(kv.at("schedule.beta_end"));
  return d;
}

inline void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& losses) {
  std::ostringstream os;
  os.precision(9);
  os << "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) os << i + 1 << ',' << losses[i] << '\n';
  write_file_bytes(path, os.str());
}

}  // namespace acdmsr

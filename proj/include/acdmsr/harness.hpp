#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "acdmsr/conditioner.hpp"
#include "acdmsr/config.hpp"
#include "acdmsr/metrics.hpp"
#include "acdmsr/samplers.hpp"
#include "acdmsr/trainer.hpp"

namespace acdmsr {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config -> typed specs

inline ScheduleParams schedule_params(const RunConfig& c) {
  if (c.str("schedule.kind") != "linear") fail(ErrorKind::config, "schedule.kind must be linear");
  return ScheduleParams{c.size("schedule.T"), c.real("schedule.beta_start"), c.real("schedule.beta_end")};
}

inline TrainConfig train_config(const RunConfig& c) {
  TrainConfig t;
  t.schedule = schedule_params(c);
  t.model.base_width = c.size("model.base_width");
  t.model.time_dim = c.size("model.time_dim");
  t.model.channels = c.size("model.channels");
  t.model.cond_skip = c.flag("model.cond_skip");
  t.model.input_gate = c.flag("model.input_gate");
  t.batch = c.size("train.batch");
  t.lr = c.real("train.lr");
  t.steps = c.size("train.steps");
  t.objective = parse_objective(c.str("train.objective"));
  t.loss = parse_loss_kind(c.str("train.loss"));
  t.patch = c.size("train.patch");
  t.seed = c.size("train.seed");
  t.checkpoint_every = c.size("train.checkpoint_every");
  t.ema = c.real("train.ema");
  if (t.patch % 4) fail(ErrorKind::config, "train.patch must be divisible by 4");
  return t;
}

inline ConditionerSpec conditioner_spec(const RunConfig& c) {
  ConditionerSpec s;
  s.mode = parse_condition_mode(c.str("conditioner.mode"));
  s.scale = c.size("data.scale");
  s.dir = c.str("conditioner.dir");
  s.checkpoint = c.str("conditioner.checkpoint");
  return s;
}

inline ConditionerTrainConfig conditioner_train_config(const RunConfig& c) {
  ConditionerTrainConfig t;
  t.scale = c.size("data.scale");
  t.patch = c.size("train.patch");
  t.batch = c.size("conditioner.batch");
  t.steps = c.size("conditioner.steps");
  t.lr = c.real("conditioner.lr");
  t.seed = c.size("train.seed");
  t.net.width = c.size("conditioner.width");
  return t;
}

inline SamplerSpec sampler_spec(const RunConfig& c) {
  SamplerSpec s;
  s.kind = parse_sampler_kind(c.str("sampler.kind"));
  s.steps = c.size("sampler.steps");
  s.spacing = parse_spacing(c.str("sampler.spacing"));
  s.clip_x0 = c.flag("sampler.clip_x0");
  s.seed = c.size("sampler.seed");
  return s;
}

inline std::string fmt(double v, int prec = 6) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Dataset preparation

struct DegradeReport {
  std::size_t written = 0;
  std::vector<std::string> errors;  // one entry per failed file
};

// Writes <root>/lrX{scale}/<stem>.ppm for every HR image. Files that cannot be
// degraded are reported and skipped.
inline DegradeReport cmd_degrade(const fs::path& root, std::size_t scale) {
  check_scale(scale);
  const auto files = list_images(hr_dir(root));
  DegradeReport r;
  std::vector<std::string> errs(files.size());
  std::vector<char> ok(files.size(), 0);
  parallel_for(files.size(), [&](std::size_t i) {
    try {
      const auto hr = load_tensor_image<float>(files[i]);
      save_tensor_image(degrade(hr, scale), lr_dir(root, scale) / (files[i].stem().string() + files[i].extension().string()));
      ok[i] = 1;
    } catch (const Error& e) {
      errs[i] = files[i].filename().string() + ": " + e.what();
    }
  });
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (ok[i])
      ++r.written;
    else
      r.errors.push_back(errs[i]);
  }
  return r;
}

// Procedural HR images for a training and a held-out root, then degraded.
inline void cmd_synth(const RunConfig& c) {
  const std::size_t size = c.size("synth.size"), scale = c.size("data.scale");
  const std::uint64_t seed = c.size("synth.seed");
  const std::pair<fs::path, std::size_t> roots[] = {{c.str("data.root"), c.size("synth.train_images")},
                                                    {c.str("eval.root"), c.size("synth.test_images")}};
  std::uint64_t offset = 0;
  for (const auto& [root, count] : roots) {
    fs::create_directories(hr_dir(root));
    for (std::size_t i = 0; i < count; ++i) {
      std::ostringstream name;
      name << "tex" << std::setw(4) << std::setfill('0') << i << ".ppm";
      save_tensor_image(procedural_texture<float>(size, size, 3, CounterRng(seed).stream({offset + i}).bits(0)),
                        hr_dir(root) / name.str());
    }
    offset += 1000003;
    const auto r = cmd_degrade(root, scale);
    if (!r.errors.empty()) fail(ErrorKind::data, r.errors.front());
  }
}

// ---------------------------------------------------------------------------
// Training commands

inline fs::path out_dir(const RunConfig& c) { return fs::path(c.str("out.dir")); }
inline fs::path model_path(const RunConfig& c) { return out_dir(c) / "model.acdt"; }
inline fs::path conditioner_path(const RunConfig& c) { return out_dir(c) / "conditioner.acdt"; }

inline TrainResult cmd_train(const RunConfig& c) {
  const TrainConfig tc = train_config(c);
  const ConditionerSpec cs = conditioner_spec(c);
  auto data = load_sr_dataset(c.str("data.root"), cs.scale);  // fails before any step
  const Conditioner<float> cond(cs);
  const PreparedData prepared = prepare_training_data(std::move(data), cond);
  fs::create_directories(out_dir(c));
  c.write_snapshot(out_dir(c));
  auto res = train(prepared, tc, [&](std::size_t step, double, const CondUNet<float>& net) {
    if (tc.checkpoint_every && step % tc.checkpoint_every == 0 && step < tc.steps) save_denoiser(net, tc, model_path(c));
  });
  save_denoiser(res.net, tc, model_path(c));
  write_loss_csv(out_dir(c) / "loss.csv", res.losses);
  return res;
}

inline ConditionerTrainResult cmd_train_conditioner(const RunConfig& c) {
  const auto tc = conditioner_train_config(c);
  const auto data = load_sr_dataset(c.str("data.root"), tc.scale);
  fs::create_directories(out_dir(c));
  c.write_snapshot(out_dir(c));
  auto res = train_conditioner(data, tc);
  save_sr_net(res.net, conditioner_path(c));
  write_loss_csv(out_dir(c) / "conditioner_loss.csv", res.losses);
  return res;
}

// ---------------------------------------------------------------------------
// Models for inference: a trained checkpoint, or "analytic" for the Gaussian
// oracle whose mean is the condition image.

struct InferenceModel {
  NoiseSchedule schedule;
  std::optional<CondUNet<float>> net;
  Objective objective = Objective::image;
  double analytic_s2 = 0;

  std::unique_ptr<Denoiser<float>> denoiser() const {
    if (net) return std::make_unique<UNetDenoiser<float>>(*net, schedule, objective);
    return std::make_unique<AnalyticGaussianDenoiser<float>>(schedule, 0.0, analytic_s2);
  }
};

inline InferenceModel load_inference_model(const RunConfig& c, const std::string& checkpoint) {
  if (checkpoint == "analytic") {
    const double s = c.real("analytic.s");
    return InferenceModel{make_linear_schedule(schedule_params(c)), std::nullopt, Objective::image, s * s};
  }
  auto d = load_denoiser(checkpoint);
  return InferenceModel{make_linear_schedule(d.schedule), std::move(d.net), d.objective, 0};
}

struct SampleReport {
  std::vector<fs::path> written;
};

// Super-resolves every LR image under `in` (a file or directory) into `out`.
inline SampleReport cmd_sample(const RunConfig& c, const std::string& checkpoint, const fs::path& in, const fs::path& out,
                               const SamplerSpec& spec, bool dump_frames = false) {
  const InferenceModel model = load_inference_model(c, checkpoint);
  const auto den = model.denoiser();
  const Conditioner<float> cond(conditioner_spec(c));
  std::vector<fs::path> inputs;
  if (fs::is_directory(in))
    inputs = list_images(in);
  else if (fs::exists(in))
    inputs.push_back(in);
  else
    fail(ErrorKind::data, "input " + in.string() + " does not exist");
  if (inputs.empty()) fail(ErrorKind::data, "no input images in " + in.string());
  fs::create_directories(out);
  c.write_snapshot(out);
  SampleReport r;
  r.written.resize(inputs.size());
  parallel_for(inputs.size(), [&](std::size_t i) {
    const std::string id = inputs[i].stem().string();
    const Tensor lr = load_tensor_image<float>(inputs[i]);
    const Tensor x_c = cond(lr, id);
    FrameSink<float> frames;
    if (dump_frames)
      frames = [&](std::size_t k, double, const Tensor& x) {
        std::ostringstream name;
        name << id << "_step" << std::setw(4) << std::setfill('0') << k << ".ppm";
        save_tensor_image(to_unit(x), out / "frames" / name.str());
      };
    const Tensor sr = sample(model.schedule, *den, spec, x_c.shape(), &x_c, i, frames);
    r.written[i] = out / (id + ".ppm");
    save_tensor_image(sr, r.written[i]);
  });
  return r;
}

// ---------------------------------------------------------------------------
// Held-out evaluation patches. Conditions are computed on the full LR image
// and cropped at the HR patch position.

struct EvalSet {
  std::vector<SrExample> images;
  struct Item {
    std::size_t image, y, x;
  };
  std::vector<Item> items;
  std::size_t patch = 32, scale = 4;
};

inline EvalSet load_eval_set(const RunConfig& c) {
  EvalSet e;
  e.scale = c.size("data.scale");
  e.patch = c.size("eval.patch");
  e.images = load_sr_dataset(c.str("eval.root"), e.scale);
  const std::size_t count = c.size("eval.patches");
  const CounterRng rng = CounterRng(c.size("eval.seed")).stream({0xe7a1});
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t img = i % e.images.size();
    const auto& hr = e.images[img].hr;
    const auto pos = patch_positions(hr.dim(1), hr.dim(2), e.patch, 1, rng.stream({i}).bits(0), e.scale).front();
    e.items.push_back({img, pos.y, pos.x});
  }
  return e;
}

struct EvalResult {
  double psnr = 0, ssim = 0;            // sampler output vs HR
  double cond_psnr = 0, cond_ssim = 0;  // condition itself vs HR
  double wall_ms = 0;
};

inline EvalResult evaluate_model(const EvalSet& e, const NoiseSchedule& s, const Denoiser<float>& den,
                                 const Conditioner<float>& cond, const SamplerSpec& spec) {
  std::vector<Tensor> conds(e.images.size());
  parallel_for(e.images.size(), [&](std::size_t i) { conds[i] = cond(e.images[i].lr, e.images[i].id); });
  const std::size_t n = e.items.size();
  std::vector<MetricReport> out(n), base(n);
  const auto t0 = std::chrono::steady_clock::now();
  parallel_for(n, [&](std::size_t i) {
    const auto& it = e.items[i];
    const Tensor hr = crop(e.images[it.image].hr, it.y, it.x, e.patch, e.patch);
    const Tensor x_c = crop(conds[it.image], it.y, it.x, e.patch, e.patch);
    out[i] = evaluate(sample(s, den, spec, hr.shape(), &x_c, i), hr);
    base[i] = evaluate(to_unit(x_c), hr);
  });
  EvalResult r;
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  for (std::size_t i = 0; i < n; ++i) {
    r.psnr += out[i].psnr_db / double(n);
    r.ssim += out[i].ssim / double(n);
    r.cond_psnr += base[i].psnr_db / double(n);
    r.cond_ssim += base[i].ssim / double(n);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Analytic Gaussian problem: x0 ~ N(mu, s^2) per component, x_T from the
// forward marginal. Terminal error is measured against the exact
// probability-flow endpoint of each x_T; PSNR/SSIM against the x0 draws.

struct AnalyticProblem {
  NoiseSchedule schedule;
  double mu, s2;
  std::vector<TensorD> x0, x_T, flow_end;
};

inline AnalyticProblem make_analytic_problem(const NoiseSchedule& s, double mu, double sd, std::size_t count,
                                             Shape shape, std::uint64_t seed) {
  AnalyticProblem p{s, mu, sd * sd, {}, {}, {}};
  const std::size_t T = s.T();
  for (std::size_t i = 0; i < count; ++i) {
    const CounterRng r = CounterRng(seed).stream({0xa7a1, i});
    TensorD x0 = map(r.stream({0}).normal_tensor<double>(shape), [&](double z) { return mu + sd * z; });
    TensorD xt = q_sample(s, x0, T, r.stream({1}).normal_tensor<double>(shape)).x_t;
    TensorD end = map(xt, [&](double v) { return gaussian_flow_endpoint(s, mu, sd * sd, v, double(T)); });
    p.x0.push_back(std::move(x0));
    p.x_T.push_back(std::move(xt));
    p.flow_end.push_back(std::move(end));
  }
  return p;
}

struct AnalyticRun {
  double psnr = 0, ssim = 0, ref_rmse = 0, wall_ms = 0;
};

inline AnalyticRun run_analytic(const AnalyticProblem& p, const SamplerSpec& spec) {
  const AnalyticGaussianDenoiser<double> d(p.schedule, p.mu, p.s2);
  const std::size_t n = p.x0.size();
  std::vector<MetricReport> m(n);
  std::vector<double> sq(n), cnt(n);
  const auto t0 = std::chrono::steady_clock::now();
  parallel_for(n, [&](std::size_t i) {
    const TensorD x = run_sampler(p.schedule, d, spec, p.x_T[i], static_cast<const TensorD*>(nullptr), i);
    for (std::size_t k = 0; k < x.size(); ++k) sq[i] += (x[k] - p.flow_end[i][k]) * (x[k] - p.flow_end[i][k]);
    cnt[i] = double(x.size());
    const auto& sh = x.shape();
    if (sh.size() == 3 && sh[1] >= kSsimWindow && sh[2] >= kSsimWindow)
      m[i] = evaluate(to_unit(x), to_unit(p.x0[i]));
    else
      m[i].psnr_db = psnr(to_unit(x), to_unit(p.x0[i]));
  });
  AnalyticRun r;
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  double tot = 0, tc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    r.psnr += m[i].psnr_db / double(n);
    r.ssim += m[i].ssim / double(n);
    tot += sq[i];
    tc += cnt[i];
  }
  r.ref_rmse = std::sqrt(tot / tc);
  return r;
}

// ---------------------------------------------------------------------------
// bench-steps

struct BenchRow {
  SamplerKind kind;
  std::size_t steps;
  double psnr, ssim, ref_rmse, wall_ms;
  bool has_ref;
};

inline std::string bench_csv(std::vector<BenchRow> rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const BenchRow& a, const BenchRow& b) {
    return a.kind != b.kind ? int(a.kind) < int(b.kind) : a.steps < b.steps;
  });
  std::string s = "sampler,N,psnr,ssim,ref_rmse,lpips,niqe,wall_ms\n";
  for (const auto& r : rows)
    s += std::string(to_string(r.kind)) + "," + std::to_string(r.steps) + "," + fmt(r.psnr) + "," + fmt(r.ssim) + "," +
         (r.has_ref ? fmt(r.ref_rmse, 9) : std::string()) + ",,," + fmt(r.wall_ms, 1) + "\n";
  return s;
}

inline std::vector<BenchRow> cmd_bench_steps(const RunConfig& c, const std::string& checkpoint,
                                             const std::vector<std::size_t>& steps_list,
                                             const std::vector<SamplerKind>& kinds) {
  const SamplerSpec base = sampler_spec(c);
  std::vector<BenchRow> rows;
  if (checkpoint == "analytic") {
    const auto s = make_linear_schedule(schedule_params(c));
    const std::size_t p = c.size("eval.patch");
    const auto prob = make_analytic_problem(s, c.real("analytic.mu"), c.real("analytic.s"), c.size("eval.patches"),
                                            {3, p, p}, c.size("eval.seed"));
    for (auto k : kinds)
      for (auto n : steps_list) {
        SamplerSpec sp = base;
        sp.kind = k;
        sp.steps = n;
        const auto r = run_analytic(prob, sp);
        rows.push_back({k, n, r.psnr, r.ssim, r.ref_rmse, r.wall_ms, true});
      }
  } else {
    const InferenceModel model = load_inference_model(c, checkpoint);
    const auto den = model.denoiser();
    const auto eval = load_eval_set(c);
    const Conditioner<float> cond(conditioner_spec(c));
    for (auto k : kinds)
      for (auto n : steps_list) {
        SamplerSpec sp = base;
        sp.kind = k;
        sp.steps = n;
        const auto r = evaluate_model(eval, model.schedule, *den, cond, sp);
        rows.push_back({k, n, r.psnr, r.ssim, 0.0, r.wall_ms, false});
      }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// ablate

struct AblationRow {
  std::string name;
  double psnr, ssim, cond_psnr;
};

inline std::string ablation_csv(const std::string& column, const std::vector<AblationRow>& rows) {
  std::string s = column + ",psnr,ssim,condition_psnr\n";
  for (const auto& r : rows) s += r.name + "," + fmt(r.psnr) + "," + fmt(r.ssim) + "," + fmt(r.cond_psnr) + "\n";
  return s;
}

// Condition mode: one denoiser, three conditioners (raw LR, bicubic, learned).
// Trains whatever is not supplied. A denoiser trained here sees the learned
// conditioner's output, so the SR net is trained first.
inline std::vector<AblationRow> ablate_condition(const RunConfig& c, std::string checkpoint) {
  std::string sr_ckpt = c.str("conditioner.checkpoint");
  if (sr_ckpt.empty()) {
    cmd_train_conditioner(c);
    sr_ckpt = conditioner_path(c).string();
  }
  if (checkpoint.empty()) {
    RunConfig cc = c;
    cc.set("conditioner.mode", "learned");
    cc.set("conditioner.checkpoint", sr_ckpt);
    cmd_train(cc);
    checkpoint = model_path(cc).string();
  }
  const InferenceModel model = load_inference_model(c, checkpoint);
  const auto den = model.denoiser();
  const auto eval = load_eval_set(c);
  const SamplerSpec spec = sampler_spec(c);
  std::vector<AblationRow> rows;
  for (const char* mode : {"nearest", "bicubic", "learned"}) {
    ConditionerSpec cs = conditioner_spec(c);
    cs.mode = parse_condition_mode(mode);
    cs.checkpoint = sr_ckpt;
    const Conditioner<float> cond(cs);
    const auto r = evaluate_model(eval, model.schedule, *den, cond, spec);
    rows.push_back({std::string(mode) == "nearest" ? "raw-lr" : mode, r.psnr, r.ssim, r.cond_psnr});
  }
  return rows;
}

// Objective mode: two training runs differing only in the objective.
inline std::vector<AblationRow> ablate_objective(const RunConfig& c) {
  std::vector<AblationRow> rows;
  const auto eval = load_eval_set(c);
  const SamplerSpec spec = sampler_spec(c);
  for (const char* obj : {"image", "noise"}) {
    RunConfig cc = c;
    cc.set("train.objective", obj);
    // skip and gate have no meaning for noise prediction; both variants go without
    cc.set("model.cond_skip", "0");
    cc.set("model.input_gate", "0");
    cc.set("out.dir", (out_dir(c) / (std::string("objective_") + obj)).string());
    cmd_train(cc);
    const InferenceModel model = load_inference_model(cc, model_path(cc).string());
    const auto den = model.denoiser();
    const Conditioner<float> cond(conditioner_spec(cc));
    const auto r = evaluate_model(eval, model.schedule, *den, cond, spec);
    rows.push_back({obj, r.psnr, r.ssim, r.cond_psnr});
  }
  return rows;
}

}  // namespace acdmsr

// acdmsr: dataset prep, training, sampling, benchmarks and oracle checks.
#include <cstdio>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "acdmsr/harness.hpp"
#include "acdmsr/oracle.hpp"

using namespace acdmsr;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kCheck = 3 };

struct Common {
  std::string config;
  std::vector<std::string> sets;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "key=value configuration file");
    app->add_option("--set", sets, "override a key, e.g. --set train.steps=100")->take_all();
  }

  RunConfig load() const {
    RunConfig c = config.empty() ? RunConfig() : RunConfig::load(config);
    for (const auto& kv : sets) c.apply_override(kv);
    return c;
  }
};

template <typename T>
std::vector<T> split_list(const std::string& s, T (*parse)(const std::string&)) {
  std::vector<T> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(parse(item));
  if (out.empty()) fail(ErrorKind::config, "empty list '" + s + "'");
  return out;
}

std::size_t parse_count(const std::string& s) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos == s.size() && v > 0) return std::size_t(v);
  } catch (const std::logic_error&) {
  }
  fail(ErrorKind::config, "bad step count '" + s + "'");
}

int exit_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::config: return kUsage;
    default: return kData;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Accelerated conditional diffusion super-resolution toolkit"};
  app.require_subcommand(1);

  Common common;

  auto* synth = app.add_subcommand("synth", "Write procedural HR textures for data.root and eval.root, then degrade");
  common.attach(synth);

  std::string root;
  std::size_t scale = 4;
  auto* deg = app.add_subcommand("degrade", "Bicubic-downsample <root>/hr into <root>/lrX<scale>");
  deg->add_option("--root", root, "dataset root")->required();
  deg->add_option("--scale", scale, "scale factor (2, 3, 4 or 8)");

  auto* train_cmd = app.add_subcommand("train", "Train the conditional denoiser");
  common.attach(train_cmd);

  auto* train_cond = app.add_subcommand("train-conditioner", "Train the small SR network used by the learned conditioner");
  common.attach(train_cond);

  std::string checkpoint, in, out, sampler, spacing;
  std::size_t steps = 0;
  long long seed = -1;
  bool frames = false;
  auto* sample_cmd = app.add_subcommand("sample", "Super-resolve LR images");
  common.attach(sample_cmd);
  sample_cmd->add_option("--checkpoint", checkpoint, "model checkpoint, or 'analytic'")->required();
  sample_cmd->add_option("--in", in, "LR image or directory")->required();
  sample_cmd->add_option("--out", out, "output directory")->required();
  sample_cmd->add_option("--sampler", sampler, "ancestral|first_order|second_order");
  sample_cmd->add_option("--steps", steps, "number of sampler steps");
  sample_cmd->add_option("--seed", seed, "sampler seed");
  sample_cmd->add_option("--spacing", spacing, "uniform_t|uniform_lambda");
  sample_cmd->add_flag("--frames", frames, "dump every intermediate state as PPM");

  std::string steps_list = "5,10,20,40", samplers = "ancestral,first_order,second_order", csv_out;
  auto* bench = app.add_subcommand("bench-steps", "PSNR/SSIM against sampler step count");
  common.attach(bench);
  bench->add_option("--checkpoint", checkpoint, "model checkpoint, or 'analytic'")->required();
  bench->add_option("--steps-list", steps_list, "comma-separated step counts");
  bench->add_option("--samplers", samplers, "comma-separated sampler kinds");
  bench->add_option("--csv", csv_out, "output CSV (default <out.dir>/bench_steps.csv)");

  bool fault = false;
  std::size_t chains = 1000;
  std::uint64_t oracle_seed = 0;
  auto* oracle = app.add_subcommand("oracle-check", "Run the analytic oracle suite");
  oracle->add_option("--seed", oracle_seed, "suite seed");
  oracle->add_option("--chains", chains, "chains for the analytic sampler studies");
  oracle->add_flag("--inject-lambda-fault", fault, "sensitivity canary: mirror the midpoint lambda");

  std::string mode;
  auto* ablate = app.add_subcommand("ablate", "Conditioner or objective ablation");
  common.attach(ablate);
  ablate->add_option("--mode", mode, "condition|objective")->required()->check(CLI::IsMember({"condition", "objective"}));
  ablate->add_option("--checkpoint", checkpoint, "trained denoiser (condition mode; trained if omitted)");
  ablate->add_option("--csv", csv_out, "output CSV (default <out.dir>/ablate_<mode>.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (synth->parsed()) {
      cmd_synth(common.load());
    } else if (deg->parsed()) {
      const auto r = cmd_degrade(root, scale);
      std::printf("wrote %zu LR images to %s\n", r.written, lr_dir(root, scale).c_str());
      for (const auto& e : r.errors) std::fprintf(stderr, "%s\n", e.c_str());
      return r.errors.empty() ? kOk : kData;
    } else if (train_cmd->parsed()) {
      const RunConfig c = common.load();
      const auto r = cmd_train(c);
      std::printf("trained %zu steps, final loss %.6f, checkpoint %s\n", r.losses.size(), r.losses.back(),
                  model_path(c).c_str());
    } else if (train_cond->parsed()) {
      const RunConfig c = common.load();
      const auto r = cmd_train_conditioner(c);
      std::printf("trained %zu steps, final loss %.6f, checkpoint %s\n", r.losses.size(), r.losses.back(),
                  conditioner_path(c).c_str());
    } else if (sample_cmd->parsed()) {
      RunConfig c = common.load();
      if (!sampler.empty()) c.set("sampler.kind", sampler);
      if (steps) c.set("sampler.steps", std::to_string(steps));
      if (seed >= 0) c.set("sampler.seed", std::to_string(seed));
      if (!spacing.empty()) c.set("sampler.spacing", spacing);
      const auto r = cmd_sample(c, checkpoint, in, out, sampler_spec(c), frames);
      std::printf("wrote %zu images to %s\n", r.written.size(), out.c_str());
    } else if (bench->parsed()) {
      const RunConfig c = common.load();
      const auto rows = cmd_bench_steps(c, checkpoint, split_list<std::size_t>(steps_list, parse_count),
                                        split_list<SamplerKind>(samplers, parse_sampler_kind));
      const std::string csv = bench_csv(rows);
      const fs::path path = csv_out.empty() ? out_dir(c) / "bench_steps.csv" : fs::path(csv_out);
      write_file_bytes(path, csv);
      c.write_snapshot(path.parent_path().empty() ? fs::path(".") : path.parent_path());
      std::fputs(csv.c_str(), stdout);
    } else if (oracle->parsed()) {
      OracleOptions o;
      o.seed = oracle_seed;
      o.chains = chains;
      o.inject_lambda_sign_fault = fault;
      const auto checks = run_oracle_suite(o);
      std::fputs(oracle_report(checks).c_str(), stdout);
      for (const auto& ch : checks)
        if (!ch.pass) return kCheck;
    } else if (ablate->parsed()) {
      const RunConfig c = common.load();
      const auto rows = mode == "condition" ? ablate_condition(c, checkpoint) : ablate_objective(c);
      const std::string csv = ablation_csv(mode == "condition" ? "condition" : "objective", rows);
      const fs::path path = csv_out.empty() ? out_dir(c) / ("ablate_" + mode + ".csv") : fs::path(csv_out);
      write_file_bytes(path, csv);
      c.write_snapshot(out_dir(c));
      std::fputs(csv.c_str(), stdout);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "acdmsr: %s\n", e.what());
    return exit_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acdmsr: %s\n", e.what());
    return kData;
  }
  return kOk;
}

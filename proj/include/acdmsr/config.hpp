#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "acdmsr/checkpoint.hpp"
#include "acdmsr/error.hpp"

namespace acdmsr {

// Every recognised key with its default. Anything else is rejected.
inline const std::vector<std::pair<std::string, std::string>>& config_defaults() {
  static const std::vector<std::pair<std::string, std::string>> d = {
      {"schedule.kind", "linear"},
      {"schedule.T", "1000"},
      {"schedule.beta_start", "0.0001"},
      {"schedule.beta_end", "0.02"},
      {"model.base_width", "32"},
      {"model.time_dim", "64"},
      {"model.channels", "3"},
      {"model.cond_skip", "1"},
      {"model.input_gate", "1"},
      {"train.batch", "16"},
      {"train.lr", "0.0001"},
      {"train.steps", "10000"},
      {"train.objective", "image"},
      {"train.loss", "l2"},
      {"train.patch", "32"},
      {"train.seed", "0"},
      {"train.checkpoint_every", "0"},
      {"train.ema", "0.999"},
      {"data.root", "data/train"},
      {"data.scale", "4"},
      {"eval.root", "data/test"},
      {"eval.patches", "32"},
      {"eval.patch", "32"},
      {"eval.seed", "0"},
      {"conditioner.mode", "bicubic"},
      {"conditioner.dir", ""},
      {"conditioner.checkpoint", ""},
      {"conditioner.width", "32"},
      {"conditioner.steps", "2000"},
      {"conditioner.lr", "0.001"},
      {"conditioner.batch", "8"},
      {"sampler.kind", "second_order"},
      {"sampler.steps", "40"},
      {"sampler.spacing", "uniform_t"},
      {"sampler.clip_x0", "true"},
      {"sampler.seed", "0"},
      {"analytic.mu", "0.3"},
      {"analytic.s", "0.25"},
      {"analytic.chains", "1000"},
      {"synth.train_images", "48"},
      {"synth.test_images", "8"},
      {"synth.size", "64"},
      {"synth.seed", "0"},
      {"out.dir", "runs/default"},
  };
  return d;
}

class RunConfig {
 public:
  RunConfig() {
    for (const auto& [k, v] : config_defaults()) values_[k] = v;
  }

  static RunConfig parse(const std::string& text, const std::string& origin = "<config>") {
    RunConfig c;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        fail(ErrorKind::config, origin + ":" + std::to_string(lineno) + ": expected key=value");
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), origin + ":" + std::to_string(lineno));
    }
    return c;
  }

  static RunConfig load(const std::filesystem::path& path) { return parse(read_file_bytes(path), path.string()); }

  void set(const std::string& key, const std::string& value, const std::string& where = "override") {
    if (!values_.count(key)) fail(ErrorKind::config, where + ": unknown key '" + key + "'");
    values_[key] = value;
  }

  // "key=value" form, as given on the command line.
  void apply_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) fail(ErrorKind::config, "override '" + kv + "' is not key=value");
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) fail(ErrorKind::config, "unknown key '" + key + "'");
    return it->second;
  }

  std::size_t size(const std::string& key) const {
    const auto& v = str(key);
    try {
      std::size_t pos = 0;
      const long long n = std::stoll(v, &pos);
      if (pos != v.size() || n < 0) throw std::invalid_argument(v);
      return std::size_t(n);
    } catch (const std::logic_error&) {
      fail(ErrorKind::config, key + " must be a non-negative integer, got '" + v + "'");
    }
  }

  double real(const std::string& key) const {
    const auto& v = str(key);
    try {
      std::size_t pos = 0;
      const double d = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::logic_error&) {
      fail(ErrorKind::config, key + " must be a number, got '" + v + "'");
    }
  }

  bool flag(const std::string& key) const {
    const auto& v = str(key);
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    fail(ErrorKind::config, key + " must be true|false, got '" + v + "'");
  }

  // Fully resolved config in the input format, keys in default order.
  std::string resolved() const {
    std::string out = "# resolved configuration\n";
    for (const auto& [k, v] : config_defaults()) out += k + "=" + values_.at(k) + "\n";
    return out;
  }

  void write_snapshot(const std::filesystem::path& dir) const { write_file_bytes(dir / "config.resolved", resolved()); }

 private:
  static std::string trim(const std::string& s) {
    auto b = s.begin(), e = s.end();
    while (b != e && std::isspace(static_cast<unsigned char>(*b))) ++b;
    while (e != b && std::isspace(static_cast<unsigned char>(*(e - 1)))) --e;
    return std::string(b, e);
  }

  std::map<std::string, std::string> values_;
};

}  // namespace acdmsr

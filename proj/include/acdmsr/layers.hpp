#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "acdmsr/autodiff.hpp"
#include "acdmsr/rng.hpp"

namespace acdmsr {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

// Uniform(-bound, bound) init keyed by (seed, parameter name).
template <typename T>
BasicTensor<T> init_uniform(std::uint64_t seed, const std::string& name, Shape shape, double bound) {
  BasicTensor<T> t(std::move(shape));
  const CounterRng rng = CounterRng(seed).stream({fnv1a(name)});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = T((2.0 * rng.uniform(i) - 1.0) * bound);
  return t;
}

// Adds "<prefix>.w" (c_out x c_in x k x k) and "<prefix>.b" (c_out) with a
// fan-in scaled uniform init.
template <typename T>
void add_conv_params(ParameterSet<T>& p, std::uint64_t seed, const std::string& prefix, std::size_t c_in,
                     std::size_t c_out, std::size_t k, double gain = 1.0) {
  const double bound = gain * std::sqrt(3.0 / double(c_in * k * k));
  p.emplace(prefix + ".w", init_uniform<T>(seed, prefix + ".w", {c_out, c_in, k, k}, bound));
  p.emplace(prefix + ".b", BasicTensor<T>({c_out}));
}

template <typename T>
void add_linear_params(ParameterSet<T>& p, std::uint64_t seed, const std::string& prefix, std::size_t in,
                       std::size_t out, double gain = 1.0) {
  const double bound = gain * std::sqrt(3.0 / double(in));
  p.emplace(prefix + ".w", init_uniform<T>(seed, prefix + ".w", {out, in}, bound));
  p.emplace(prefix + ".b", BasicTensor<T>({out}));
}

// Binds parameters into a graph either as trainable leaves or as constants.
template <typename T>
class Binder {
 public:
  Binder(Graph<T>& g, const ParameterSet<T>& params, bool trainable) : g_(g), params_(params), trainable_(trainable) {}

  typename Graph<T>::Var operator()(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) fail(ErrorKind::shape, "missing parameter '" + name + "'");
    return trainable_ ? g_.parameter(name, it->second) : g_.constant(it->second);
  }

  Graph<T>& graph() const { return g_; }

 private:
  Graph<T>& g_;
  const ParameterSet<T>& params_;
  bool trainable_;
};

template <typename T>
typename Graph<T>::Var conv_bias(const Binder<T>& bind, typename Graph<T>::Var x, const std::string& prefix,
                                 std::size_t stride = 1) {
  auto& g = bind.graph();
  auto y = ops::conv2d(g, x, bind(prefix + ".w"), stride, Padding::reflect);
  return ops::add_channel(g, y, bind(prefix + ".b"));
}

template <typename T>
typename Graph<T>::Var linear_bias(const Binder<T>& bind, typename Graph<T>::Var x, const std::string& prefix) {
  auto& g = bind.graph();
  return ops::add(g, ops::linear(g, bind(prefix + ".w"), x), bind(prefix + ".b"));
}

inline std::size_t param_count(const auto& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

}  // namespace acdmsr

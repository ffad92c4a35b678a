#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "acdmsr/autodiff.hpp"

namespace acdmsr {

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamHyper hyper;
  ParameterSet<T> m;  // first moment
  ParameterSet<T> v;  // second moment
  std::uint64_t step = 0;
};

// One bias-corrected Adam update. Parameters without a gradient entry are left
// untouched. Throws before modifying anything if a gradient is non-finite.
template <typename T>
void adam_step(ParameterSet<T>& params, const ParameterSet<T>& grads, AdamState<T>& state) {
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) fail(ErrorKind::shape, "gradient for unknown parameter '" + name + "'");
    require_same_shape(it->second.shape(), g.shape(), ("gradient of '" + name + "'").c_str());
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!std::isfinite(g[i]))
        fail(ErrorKind::non_finite, "gradient of '" + name + "' has non-finite element " + std::to_string(i));
  }
  state.step += 1;
  const auto& h = state.hyper;
  const double bc1 = 1.0 - std::pow(h.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(h.beta2, double(state.step));
  for (const auto& [name, g] : grads) {
    BasicTensor<T>& p = params.at(name);
    auto [mit, mnew] = state.m.try_emplace(name, g.shape());
    auto [vit, vnew] = state.v.try_emplace(name, g.shape());
    BasicTensor<T>& m = mit->second;
    BasicTensor<T>& v = vit->second;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = double(g[i]);
      const double mi = h.beta1 * double(m[i]) + (1.0 - h.beta1) * gi;
      const double vi = h.beta2 * double(v[i]) + (1.0 - h.beta2) * gi * gi;
      m[i] = T(mi);
      v[i] = T(vi);
      const double update = h.lr * (mi / bc1) / (std::sqrt(vi / bc2) + h.eps);
      p[i] = T(double(p[i]) - update);
    }
  }
}

}  // namespace acdmsr

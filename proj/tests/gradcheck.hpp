#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "acdmsr/autodiff.hpp"

namespace testing_util {

struct GradReport {
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::string worst;
};

// Central finite differences in double against reverse-mode gradients.
// loss_fn(graph, params, trainable) must return the scalar loss node.
// Relative error is |ad - fd| / max(|ad|, |fd|, floor).
template <typename LossFn>
GradReport check_gradients(const acdmsr::ParameterSet<double>& params, LossFn&& loss_fn, double h = 1e-3,
                           double floor = 1e-6) {
  acdmsr::Graph<double> g;
  auto loss = loss_fn(g, params, true);
  const auto grads = g.reverse_gradients(loss);
  GradReport r;
  acdmsr::ParameterSet<double> work = params;
  auto eval = [&] {
    acdmsr::Graph<double> g2;
    return g2.value(loss_fn(g2, work, false))[0];
  };
  for (auto& [name, t] : work) {
    auto git = grads.find(name);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double orig = t[i];
      t[i] = orig + h;
      const double up = eval();
      t[i] = orig - h;
      const double down = eval();
      t[i] = orig;
      const double fd = (up - down) / (2 * h);
      const double ad = git == grads.end() ? 0.0 : git->second[i];
      const double rel = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), floor});
      ++r.checked;
      if (rel > r.max_rel_error) {
        r.max_rel_error = rel;
        std::ostringstream os;
        os << name << "[" << i << "] ad=" << ad << " fd=" << fd;
        r.worst = os.str();
      }
    }
  }
  return r;
}

}  // namespace testing_util

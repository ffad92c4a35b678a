#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

#include "acdmsr/tensor.hpp"

namespace acdmsr {

// Counter-based generator: every draw is a pure function of (key, counter), so
// results do not depend on how work is split across threads.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : key_(mix(seed ^ 0x243f6a8885a308d3ULL)) {}

  // Derive an independent stream, e.g. rng.stream({sample_index, timestep}).
  CounterRng stream(std::initializer_list<std::uint64_t> ids) const {
    CounterRng r = *this;
    for (auto id : ids) r.key_ = mix(r.key_ ^ mix(id + 0x9e3779b97f4a7c15ULL));
    return r;
  }

  std::uint64_t bits(std::uint64_t counter) const { return mix(key_ ^ mix(counter * 0xd1b54a32d192ed03ULL + 1)); }

  // Uniform in [0, 1).
  double uniform(std::uint64_t counter) const { return double(bits(counter) >> 11) * 0x1.0p-53; }

  // Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::uint64_t counter, std::int64_t lo, std::int64_t hi) const {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(uniform(counter) * double(span));
  }

  // Standard normal via Box-Muller on counters (2i, 2i+1).
  double normal(std::uint64_t counter) const {
    const double u1 = 1.0 - uniform(2 * counter);  // (0, 1]
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  template <typename T>
  BasicTensor<T> normal_tensor(const Shape& shape) const {
    BasicTensor<T> out(shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(normal(i));
    return out;
  }

 private:
  // splitmix64 finalizer
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
};

}  // namespace acdmsr

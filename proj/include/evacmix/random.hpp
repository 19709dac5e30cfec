#pragma once

#include <cstdint>
#include <random>

#include "evacmix/normal.hpp"

namespace evacmix {

// SplitMix64 finalizer; decorrelates (seed, stream) pairs before they seed an engine.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream = 0) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seeded generator whose derived distributions are defined here rather than
/// by <random>, so draws are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : engine_(mix_seed(seed, stream)) {}

  // Uniform on the open interval (0,1).
  double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() { return standard_normal_from_uniform(uniform()); }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const auto k = static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
    return k < n ? k : n - 1;
  }

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace evacmix

#pragma once

// Halton standard-normal draws shared by every likelihood evaluation.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evacmix/errors.hpp"
#include "evacmix/normal.hpp"
#include "evacmix/random.hpp"

namespace evacmix {

inline constexpr double kUniformClamp = 1e-12;

inline bool is_prime(std::uint64_t n) {
  if (n < 2) return false;
  if (n % 2 == 0) return n == 2;
  for (std::uint64_t d = 3; d * d <= n; d += 2)
    if (n % d == 0) return false;
  return true;
}

// Primes available for automatic assignment to random dimensions.
inline const std::vector<unsigned>& halton_prime_table() {
  static const std::vector<unsigned> table = [] {
    std::vector<unsigned> p;
    for (unsigned n = 2; p.size() < 100; ++n)
      if (is_prime(n)) p.push_back(n);
    return p;
  }();
  return table;
}

/// Radical inverse of `index` (>= 1) in `base`, formed as an integer ratio so
/// the result is the correctly rounded closed form.
inline double radical_inverse(std::uint64_t index, unsigned base) {
  constexpr std::uint64_t exact_limit = std::uint64_t{1} << 53;
  std::uint64_t num = 0, den = 1;
  std::uint64_t i = index;
  while (i > 0 && den <= exact_limit / base) {
    num = num * base + i % base;
    den *= base;
    i /= base;
  }
  double value = static_cast<double>(num) / static_cast<double>(den);
  // Digits beyond 2^53 resolution; only reached for astronomically long sequences.
  double scale = 1.0 / static_cast<double>(den);
  while (i > 0) {
    scale /= base;
    value += static_cast<double>(i % base) * scale;
    i /= base;
  }
  return value;
}

/// Elements burn_in+1 .. burn_in+count of the Halton sequence in `base`.
inline std::vector<double> radical_inverse_sequence(unsigned base, std::size_t count, std::size_t burn_in = 0) {
  if (!is_prime(base)) throw ConfigurationError("Halton base " + std::to_string(base) + " is not prime");
  std::vector<double> out(count);
  for (std::size_t n = 0; n < count; ++n) out[n] = radical_inverse(burn_in + n + 1, base);
  return out;
}

struct DrawPlan {
  std::size_t n_draws = 1000;
  std::vector<unsigned> primes;  // one per random dimension
  std::size_t burn_in = 10;
  std::optional<std::uint64_t> shuffle_seed;

  std::size_t dimensions() const { return primes.size(); }

  static DrawPlan with_default_primes(std::size_t dimensions, std::size_t n_draws = 1000, std::size_t burn_in = 10) {
    const auto& table = halton_prime_table();
    if (dimensions > table.size())
      throw ConfigurationError(std::to_string(dimensions) + " random dimensions exceed the " +
                               std::to_string(table.size()) + "-prime Halton table");
    DrawPlan p;
    p.n_draws = n_draws;
    p.burn_in = burn_in;
    p.primes.assign(table.begin(), table.begin() + static_cast<std::ptrdiff_t>(dimensions));
    return p;
  }

  void validate() const {
    if (n_draws < 1) throw ConfigurationError("draw plan needs at least one draw");
    for (std::size_t k = 0; k < primes.size(); ++k) {
      if (!is_prime(primes[k])) throw ConfigurationError("Halton base " + std::to_string(primes[k]) + " is not prime");
      if (k > 0 && primes[k] <= primes[k - 1])
        throw ConfigurationError("Halton primes must be distinct and ascending");
    }
  }

  bool operator==(const DrawPlan&) const = default;
};

/// N x R x K standard normals; individual n owns sequence points
/// burn_in + n*R + 1 .. burn_in + (n+1)*R of every dimension.
class DrawTensor {
 public:
  DrawTensor() = default;
  DrawTensor(DrawPlan plan, std::size_t n_individuals, std::vector<double> values)
      : plan_(std::move(plan)), n_(n_individuals), values_(std::move(values)) {}

  const DrawPlan& plan() const { return plan_; }
  std::size_t n_individuals() const { return n_; }
  std::size_t n_draws() const { return plan_.n_draws; }
  std::size_t dimensions() const { return plan_.dimensions(); }

  double at(std::size_t n, std::size_t r, std::size_t k) const {
    return values_[(n * plan_.n_draws + r) * dimensions() + k];
  }
  std::span<const double> row(std::size_t n, std::size_t r) const {
    return {values_.data() + (n * plan_.n_draws + r) * dimensions(), dimensions()};
  }
  const std::vector<double>& values() const { return values_; }

 private:
  DrawPlan plan_;
  std::size_t n_ = 0;
  std::vector<double> values_;
};

inline DrawTensor build_draw_tensor(const DrawPlan& plan, std::size_t n_individuals) {
  plan.validate();
  const std::size_t R = plan.n_draws;
  const std::size_t K = plan.dimensions();
  const std::size_t total = n_individuals * R;
  std::vector<double> values(total * K);
  std::vector<double> seq;
  for (std::size_t k = 0; k < K; ++k) {
    seq = radical_inverse_sequence(plan.primes[k], total, plan.burn_in);
    if (plan.shuffle_seed) {
      Rng rng(*plan.shuffle_seed, k);
      for (std::size_t i = total; i > 1; --i) std::swap(seq[i - 1], seq[rng.below(i)]);
    }
    for (std::size_t i = 0; i < total; ++i) {
      const double u = std::clamp(seq[i], kUniformClamp, 1.0 - kUniformClamp);
      values[i * K + k] = standard_normal_from_uniform(u);
    }
  }
  return DrawTensor(plan, n_individuals, std::move(values));
}

}  // namespace evacmix

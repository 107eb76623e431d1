#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string_view>

#include "deepinv/core/tensor.hpp"

namespace deepinv {

/// Seeded random source. The engine is std::mt19937_64, whose output sequence
/// is fixed by the C++ standard, so draws are reproducible across toolchains.
/// Uniforms take the top 53 bits of each draw; normals use the Box–Muller
/// transform and cache the second value of each pair.
class RandomSource {
 public:
  static constexpr std::string_view kAlgorithm = "mt19937_64+box-muller";

  explicit RandomSource(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  Real uniform();
  Real uniform(Real lo, Real hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  Real normal();

  /// Independent stream derived from this one; does not perturb it beyond one draw.
  RandomSource fork() { return RandomSource(next_u64()); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::optional<Real> spare_;
};

/// i.i.d. standard normal tensor.
Tensor normal(RandomSource& rng, Tensor::Shape shape);

}  // namespace deepinv

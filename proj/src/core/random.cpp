#include "deepinv/core/random.hpp"

#include <cmath>
#include <numbers>

namespace deepinv {

Real RandomSource::uniform() {
  return static_cast<Real>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t RandomSource::below(std::size_t n) {
  // rejection sampling; no modulo bias
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

Real RandomSource::normal() {
  if (spare_) {
    const Real v = *spare_;
    spare_.reset();
    return v;
  }
  const Real u1 = 1.0 - uniform();  // (0, 1]
  const Real u2 = uniform();
  const Real r = std::sqrt(-2.0 * std::log(u1));
  const Real theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  return r * std::cos(theta);
}

Tensor normal(RandomSource& rng, Tensor::Shape shape) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

}  // namespace deepinv

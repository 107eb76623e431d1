#pragma once

#include <memory>
#include <string>
#include <vector>

#include "deepinv/core/autodiff.hpp"
#include "deepinv/core/random.hpp"

namespace deepinv {

/// Owns a model's parameters at stable addresses, in registration order.
class ParameterSet {
 public:
  Parameter& add(std::string name, Tensor value);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

/// Normal(0, scale^2) initializer.
Tensor init_normal(RandomSource& rng, Tensor::Shape shape, Real scale);

/// Affine map x . W + b with W stored [in x out].
struct Linear {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;

  static Linear create(ParameterSet& set, const std::string& name, std::size_t in, std::size_t out,
                       RandomSource& rng, Real scale);
  static Linear zeros(ParameterSet& set, const std::string& name, std::size_t in, std::size_t out);

  Var operator()(Tape& tape, Var x) const;
  std::size_t in_features() const { return weight->value.shape()[0]; }
  std::size_t out_features() const { return weight->value.shape()[1]; }
};

/// Sinusoidal timestep features, one row per timestep: the first half holds
/// sin(t * f_i), the second half cos(t * f_i), with f_i = 10000^(-i / half).
Tensor sinusoidal_embedding(std::span<const int> timesteps, std::size_t width);

}  // namespace deepinv

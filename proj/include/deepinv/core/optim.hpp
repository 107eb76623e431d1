#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "deepinv/core/autodiff.hpp"

namespace deepinv {

struct AdamHyper {
  Real learning_rate = 1e-3;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real epsilon = 1e-8;
};

/// Per-parameter moment accumulators of bias-corrected Adam. Accumulators are
/// bound positionally to the parameter list given at construction.
struct OptimizerState {
  AdamHyper hyper;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step_count = 0;
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamHyper hyper = {});

  /// One update of every trainable parameter. Frozen parameters are left
  /// untouched and their moments do not advance.
  void step(const Gradients& grads);

  const OptimizerState& state() const noexcept { return state_; }
  std::span<Parameter* const> params() const noexcept { return params_; }
  void set_learning_rate(Real lr) { state_.hyper.learning_rate = lr; }

 private:
  std::vector<Parameter*> params_;
  OptimizerState state_;
};

/// Stateless form: updates `param` in place from `grad` using slot `slot` of `state`.
/// `state.step_count` must already reflect the current step (1-based).
void adam_update(Parameter& param, const Tensor& grad, OptimizerState& state, std::size_t slot);

}  // namespace deepinv

#include "deepinv/core/optim.hpp"

#include <cmath>

#include "deepinv/core/errors.hpp"

namespace deepinv {

Adam::Adam(std::vector<Parameter*> params, AdamHyper hyper) : params_(std::move(params)) {
  state_.hyper = hyper;
  for (const Parameter* p : params_) {
    state_.first_moment.push_back(Tensor::zeros(p->value.shape()));
    state_.second_moment.push_back(Tensor::zeros(p->value.shape()));
  }
}

void Adam::step(const Gradients& grads) {
  ++state_.step_count;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    if (!p.trainable) continue;
    const Tensor* g = grads.find(p);
    if (g == nullptr) {
      adam_update(p, Tensor::zeros(p.value.shape()), state_, i);
    } else {
      adam_update(p, *g, state_, i);
    }
  }
}

void adam_update(Parameter& param, const Tensor& grad, OptimizerState& state, std::size_t slot) {
  Tensor& m = state.first_moment.at(slot);
  Tensor& v = state.second_moment.at(slot);
  if (grad.shape() != param.value.shape() || m.shape() != param.value.shape()) {
    throw DimensionError("adam: parameter '" + param.name + "' " + shape_string(param.value.shape()) +
                         " vs gradient " + shape_string(grad.shape()));
  }
  const auto& h = state.hyper;
  const Real t = static_cast<Real>(state.step_count);
  const Real bc1 = 1.0 - std::pow(h.beta1, t);
  const Real bc2 = 1.0 - std::pow(h.beta2, t);
  auto pd = param.value.data();
  for (std::size_t i = 0; i < pd.size(); ++i) {
    m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * grad[i];
    v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * grad[i] * grad[i];
    const Real m_hat = m[i] / bc1;
    const Real v_hat = v[i] / bc2;
    pd[i] -= h.learning_rate * m_hat / (std::sqrt(v_hat) + h.epsilon);
  }
}

}  // namespace deepinv

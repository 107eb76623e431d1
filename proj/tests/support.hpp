// Shared helpers for the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "deepinv/core/autodiff.hpp"
#include "deepinv/core/random.hpp"
#include "deepinv/diffusion/denoiser.hpp"
#include "deepinv/solver/solver.hpp"

namespace deepinv::testing {

inline constexpr Real kFdStep = 1e-6;
inline constexpr Real kFdRelTol = 1e-3;

/// Builds a scalar loss on a fresh tape from leaf inputs.
using ScalarFn = std::function<Var(Tape&, std::vector<Var>&)>;

/// Norm-wise relative error between analytic and central-difference
/// gradients, maximised over inputs.
inline Real gradient_error(const ScalarFn& fn, std::vector<Tensor> inputs) {
  Tape tape;
  std::vector<Var> leaves;
  for (const auto& x : inputs) leaves.push_back(tape.input(x));
  Var loss = fn(tape, leaves);
  tape.backward(loss);
  std::vector<Tensor> analytic;
  for (Var v : leaves) analytic.push_back(tape.grad(v));

  auto eval = [&](const std::vector<Tensor>& xs) {
    Tape t;
    std::vector<Var> ls;
    for (const auto& x : xs) ls.push_back(t.constant(x));
    return fn(t, ls).value().item();
  };
  Real worst = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Real diff2 = 0, a2 = 0, n2 = 0;
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
      const Real saved = inputs[k][i];
      inputs[k][i] = saved + kFdStep;
      const Real up = eval(inputs);
      inputs[k][i] = saved - kFdStep;
      const Real down = eval(inputs);
      inputs[k][i] = saved;
      const Real numeric = (up - down) / (2 * kFdStep);
      const Real a = analytic[k][i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
    }
    const Real scale = std::max({std::sqrt(a2), std::sqrt(n2), 1e-10});
    worst = std::max(worst, std::sqrt(diff2) / scale);
  }
  return worst;
}

/// Same check against model parameters instead of input leaves.
inline Real parameter_gradient_error(const std::function<Var(Tape&)>& fn, std::vector<Parameter*> params) {
  Tape tape;
  const Gradients grads = tape.backward(fn(tape));
  auto eval = [&] {
    Tape t;
    return fn(t).value().item();
  };
  Real worst = 0;
  for (Parameter* p : params) {
    const Tensor analytic = grads.of(*p);
    Real diff2 = 0, a2 = 0, n2 = 0;
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      const Real saved = p->value[i];
      p->value[i] = saved + kFdStep;
      const Real up = eval();
      p->value[i] = saved - kFdStep;
      const Real down = eval();
      p->value[i] = saved;
      const Real numeric = (up - down) / (2 * kFdStep);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
    const Real scale = std::max({std::sqrt(a2), std::sqrt(n2), 1e-10});
    worst = std::max(worst, std::sqrt(diff2) / scale);
  }
  return worst;
}

/// Contracts a non-scalar op output against a fixed random tensor.
inline Var project(Tape& tape, Var y, RandomSource& rng) {
  return sum(mul(y, tape.constant(normal(rng, y.shape()))));
}

inline Tensor positive(RandomSource& rng, Tensor::Shape shape) {
  Tensor t = normal(rng, std::move(shape));
  for (Real& v : t.data()) v = 0.5 + std::abs(v);
  return t;
}

inline Tensor gaussian_batch(RandomSource& rng, std::size_t n, const Tensor& mu, Real sigma) {
  Tensor z({n, mu.numel()});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < mu.numel(); ++c) z.at(i, c) = mu[c] + sigma * rng.normal();
  }
  return z;
}

inline Real max_abs_diff(const Tensor& a, const Tensor& b) {
  Real m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Fixed point of eps = eps_theta(add_noise_step(z, eps), t + 1) for the
/// Gaussian oracle. The map is affine in eps, eps = g (A - B eps), so the
/// solution is g A / (1 + g B), evaluated per coordinate.
inline Tensor closed_form_fixed_point(const LatentState& z, const NoiseSchedule& s, const Tensor& mu, Real sigma) {
  const Real a0 = s.alpha_bar(z.t), a1 = s.alpha_bar(z.t + 1);
  const Real g = std::sqrt(1 - a1) / (a1 * sigma * sigma + 1 - a1);
  const Real ratio = std::sqrt(a1 / a0);
  const Real b = ratio * std::sqrt(1 - a0) - std::sqrt(1 - a1);
  Tensor out(z.z.shape());
  for (std::size_t r = 0; r < z.z.rows(); ++r) {
    for (std::size_t c = 0; c < z.z.cols(); ++c) {
      const Real a = ratio * z.z.at(r, c) - std::sqrt(a1) * mu[c];
      out.at(r, c) = g * a / (1 + g * b);
    }
  }
  return out;
}

/// Randomises every solver parameter so no branch sits at its zero init.
inline void scramble(DualBranchSolver& solver, RandomSource& rng, Real scale = 0.3) {
  for (Parameter* p : solver.parameters().all()) {
    for (Real& v : p->value.data()) v = scale * rng.normal();
  }
}

/// Predictor that always returns a fixed noise, whatever the input.
class PinnedPredictor final : public NoisePredictor {
 public:
  PinnedPredictor(NoiseSchedule schedule, Tensor eps) : schedule_(std::move(schedule)), eps_(std::move(eps)) {}
  const NoiseSchedule& schedule() const override { return schedule_; }
  Tensor predict(const Tensor&, std::span<const int>, std::span<const Condition>) const override { return eps_; }

 private:
  NoiseSchedule schedule_;
  Tensor eps_;
};

}  // namespace deepinv::testing

#include "deepinv/diffusion/sampler.hpp"

#include <cmath>

#include "deepinv/core/errors.hpp"

namespace deepinv {

Tensor ddim_transport(const Tensor& z, const Tensor& eps, Real from, Real to) {
  if (z.shape() != eps.shape()) {
    throw DimensionError("ddim transport: latent " + shape_string(z.shape()) + " vs noise " +
                         shape_string(eps.shape()));
  }
  const Real sf = std::sqrt(from), nf = std::sqrt(1.0 - from);
  const Real st = std::sqrt(to), nt = std::sqrt(1.0 - to);
  Tensor out(z.shape());
  for (std::size_t i = 0; i < z.numel(); ++i) {
    const Real z0_hat = (z[i] - nf * eps[i]) / sf;
    out[i] = st * z0_hat + nt * eps[i];
  }
  return out;
}

LatentState forward_noise(const NoiseSchedule& schedule, const LatentState& z0, int t, const Tensor& eps) {
  if (z0.t != 0) throw ContractError("forward_noise expects a clean latent (t = 0)");
  if (z0.z.shape() != eps.shape()) throw DimensionError("forward_noise: noise shape mismatch");
  const Real a = schedule.alpha_bar(t);
  const Real sa = std::sqrt(a), sn = std::sqrt(1.0 - a);
  Tensor out(z0.z.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = sa * z0.z[i] + sn * eps[i];
  return {std::move(out), t};
}

LatentState add_noise_step(const NoiseSchedule& schedule, const LatentState& z, const Tensor& eps, int t_next) {
  if (z.t >= schedule.steps()) throw DomainError("add_noise_step from the final timestep");
  if (t_next <= z.t) throw ContractError("add_noise_step must increase t");
  return {ddim_transport(z.z, eps, schedule.alpha_bar(z.t), schedule.alpha_bar(t_next)), t_next};
}

LatentState add_noise_step(const NoiseSchedule& schedule, const LatentState& z, const Tensor& eps) {
  return add_noise_step(schedule, z, eps, z.t + 1);
}

DenoiseResult denoise_step(const NoisePredictor& model, const LatentState& z, const Condition& cond, int t_prev) {
  if (z.t <= 0) throw DomainError("denoise_step from the clean latent");
  if (t_prev >= z.t || t_prev < 0) throw ContractError("denoise_step must decrease t");
  const NoiseSchedule& s = model.schedule();
  Tensor eps_bar = predict_noise(model, z, cond);
  Tensor prev = ddim_transport(z.z, eps_bar, s.alpha_bar(z.t), s.alpha_bar(t_prev));
  return {std::move(eps_bar), {std::move(prev), t_prev}};
}

DenoiseResult denoise_step(const NoisePredictor& model, const LatentState& z, const Condition& cond) {
  return denoise_step(model, z, cond, z.t - 1);
}

}  // namespace deepinv

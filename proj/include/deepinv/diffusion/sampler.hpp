#pragma once

#include "deepinv/diffusion/denoiser.hpp"

namespace deepinv {

/// Deterministic DDIM transport of `z` from alpha_bar `from` to alpha_bar `to`
/// along noise `eps`:
///   z0_hat = (z - sqrt(1 - from) eps) / sqrt(from)
///   z'     = sqrt(to) z0_hat + sqrt(1 - to) eps
/// The map with (from, to) swapped and the same eps is its exact inverse.
Tensor ddim_transport(const Tensor& z, const Tensor& eps, Real from, Real to);

/// z_t = sqrt(a_t) z0 + sqrt(1 - a_t) eps.
LatentState forward_noise(const NoiseSchedule& schedule, const LatentState& z0, int t, const Tensor& eps);

/// Add-noise sampler step from `z.t` to `t_next` (default z.t + 1).
LatentState add_noise_step(const NoiseSchedule& schedule, const LatentState& z, const Tensor& eps, int t_next);
LatentState add_noise_step(const NoiseSchedule& schedule, const LatentState& z, const Tensor& eps);

struct DenoiseResult {
  Tensor eps_bar;
  LatentState z_prev;
};

/// Deterministic DDIM denoise step from `z.t` to `t_prev` (default z.t - 1),
/// using the model's prediction at z.t.
DenoiseResult denoise_step(const NoisePredictor& model, const LatentState& z, const Condition& cond, int t_prev);
DenoiseResult denoise_step(const NoisePredictor& model, const LatentState& z, const Condition& cond);

}  // namespace deepinv

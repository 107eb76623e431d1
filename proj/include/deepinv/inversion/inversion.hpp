#pragma once

#include <string>
#include <vector>

#include "deepinv/diffusion/sampler.hpp"
#include "deepinv/solver/solver.hpp"

namespace deepinv {

enum class Method { kDdim, kFixedPoint, kDeepInv };

Method parse_method(const std::string& s);
std::string to_string(Method m);

/// Latents z_0..z_T and the per-step noises that move each to the next.
/// Invariant: latents[k + 1] == add_noise_step(latents[k], noises[k]) exactly.
struct InversionTrajectory {
  std::vector<LatentState> latents;
  std::vector<Tensor> noises;
  std::string method_tag;

  /// Replays every step and throws ContractError on any bitwise difference.
  void verify(const NoiseSchedule& schedule) const;
  const LatentState& terminal() const { return latents.back(); }
};

struct FixedPointOptions {
  int iterations = 3;
  Real damping = 1.0;

  void validate() const;
};

/// eps_tilde = eps_theta(z_t, t, c): the current-step prediction reused for the forward step.
Tensor ddim_invert_step(const NoisePredictor& model, const LatentState& z, const Condition& cond);

/// eps^(0) = ddim_invert_step(z);
/// eps^(i+1) = (1 - damping) eps^(i) + damping eps_theta(add_noise_step(z, eps^(i)), t_next).
Tensor fixed_point_invert_step(const NoisePredictor& model, const LatentState& z, const Condition& cond,
                               const FixedPointOptions& options, int t_next);
Tensor fixed_point_invert_step(const NoisePredictor& model, const LatentState& z, const Condition& cond,
                               const FixedPointOptions& options);

/// Mean squared defect of add-noise-then-denoise at one step:
/// ||z - denoise(add_noise(z, eps))||^2 / numel.
Real consistency_residual(const NoisePredictor& model, const LatentState& z, const Tensor& eps,
                          const Condition& cond, int t_next);
Real consistency_residual(const NoisePredictor& model, const LatentState& z, const Tensor& eps,
                          const Condition& cond);

/// Full-resolution timeline 0, 1, ..., T.
std::vector<int> full_timeline(const NoiseSchedule& schedule);

InversionTrajectory ddim_invert(const NoisePredictor& model, const Tensor& z0, const Condition& cond,
                                const std::vector<int>& timeline);
InversionTrajectory fixed_point_invert(const NoisePredictor& model, const Tensor& z0, const Condition& cond,
                                       const FixedPointOptions& options, const std::vector<int>& timeline);
/// Solver-driven inversion: eps*_t = solver(eps_tilde_t, z_t, t, cond, z0), z_{t+1} = add_noise_step(z_t, eps*_t).
InversionTrajectory deepinv_invert(const DualBranchSolver& solver, const NoisePredictor& model, const Tensor& z0,
                                   const Condition& cond, const std::vector<int>& timeline);

/// Denoises from the terminal latent down to t = 0 along `timeline` (reversed).
LatentState reconstruct(const NoisePredictor& model, const LatentState& terminal, const Condition& cond,
                        const std::vector<int>& timeline);

/// Mean of consistency_residual over the steps of a trajectory.
Real mean_consistency_residual(const NoisePredictor& model, const InversionTrajectory& trajectory,
                               const Condition& cond);

}  // namespace deepinv

#include "deepinv/inversion/inversion.hpp"

#include <functional>

#include "deepinv/core/errors.hpp"

namespace deepinv {

Method parse_method(const std::string& s) {
  if (s == "ddim") return Method::kDdim;
  if (s == "fixed_point") return Method::kFixedPoint;
  if (s == "deepinv") return Method::kDeepInv;
  throw ContractError("unknown inversion method '" + s + "'");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::kDdim: return "ddim";
    case Method::kFixedPoint: return "fixed_point";
    case Method::kDeepInv: return "deepinv";
  }
  return "unknown";
}

void InversionTrajectory::verify(const NoiseSchedule& schedule) const {
  if (latents.size() != noises.size() + 1) throw ContractError("trajectory: |latents| != |noises| + 1");
  for (std::size_t k = 0; k < noises.size(); ++k) {
    const LatentState next = add_noise_step(schedule, latents[k], noises[k], latents[k + 1].t);
    if (!(next.z == latents[k + 1].z)) {
      throw ContractError("trajectory replay mismatch at step " + std::to_string(k));
    }
  }
}

void FixedPointOptions::validate() const {
  if (iterations < 1) throw ContractError("fixed-point inversion needs at least one iteration");
  if (!(damping > 0.0 && damping <= 1.0)) throw ContractError("fixed-point damping must lie in (0, 1]");
}

Tensor ddim_invert_step(const NoisePredictor& model, const LatentState& z, const Condition& cond) {
  if (z.t >= model.schedule().steps()) throw DomainError("ddim_invert_step from the final timestep");
  return predict_noise(model, z, cond);
}

Tensor fixed_point_invert_step(const NoisePredictor& model, const LatentState& z, const Condition& cond,
                               const FixedPointOptions& options, int t_next) {
  options.validate();
  Tensor eps = ddim_invert_step(model, z, cond);
  const Real g = options.damping;
  for (int i = 0; i < options.iterations; ++i) {
    const LatentState next = add_noise_step(model.schedule(), z, eps, t_next);
    const Tensor pred = predict_noise(model, next, cond);
    for (std::size_t k = 0; k < eps.numel(); ++k) eps[k] = (1.0 - g) * eps[k] + g * pred[k];
  }
  return eps;
}

Tensor fixed_point_invert_step(const NoisePredictor& model, const LatentState& z, const Condition& cond,
                               const FixedPointOptions& options) {
  return fixed_point_invert_step(model, z, cond, options, z.t + 1);
}

Real consistency_residual(const NoisePredictor& model, const LatentState& z, const Tensor& eps,
                          const Condition& cond, int t_next) {
  const LatentState up = add_noise_step(model.schedule(), z, eps, t_next);
  const DenoiseResult down = denoise_step(model, up, cond, z.t);
  Real acc = 0;
  for (std::size_t i = 0; i < z.z.numel(); ++i) {
    const Real d = z.z[i] - down.z_prev.z[i];
    acc += d * d;
  }
  return acc / static_cast<Real>(z.z.numel());
}

Real consistency_residual(const NoisePredictor& model, const LatentState& z, const Tensor& eps,
                          const Condition& cond) {
  return consistency_residual(model, z, eps, cond, z.t + 1);
}

std::vector<int> full_timeline(const NoiseSchedule& schedule) {
  std::vector<int> t(static_cast<std::size_t>(schedule.steps()) + 1);
  for (int i = 0; i <= schedule.steps(); ++i) t[i] = i;
  return t;
}

namespace {

using StepFn = std::function<Tensor(const LatentState&, int t_next)>;

InversionTrajectory run_inversion(const NoiseSchedule& schedule, const Tensor& z0, const std::vector<int>& timeline,
                                  std::string tag, const StepFn& step) {
  if (timeline.size() < 2 || timeline.front() != 0 || timeline.back() > schedule.steps()) {
    throw ContractError("inversion timeline must start at 0 and stay within the schedule");
  }
  InversionTrajectory traj;
  traj.method_tag = std::move(tag);
  traj.latents.push_back({z0, 0});
  for (std::size_t k = 0; k + 1 < timeline.size(); ++k) {
    const LatentState& cur = traj.latents.back();
    Tensor eps = step(cur, timeline[k + 1]);
    LatentState next = add_noise_step(schedule, cur, eps, timeline[k + 1]);
    traj.noises.push_back(std::move(eps));
    traj.latents.push_back(std::move(next));
  }
  return traj;
}

}  // namespace

InversionTrajectory ddim_invert(const NoisePredictor& model, const Tensor& z0, const Condition& cond,
                                const std::vector<int>& timeline) {
  return run_inversion(model.schedule(), z0, timeline, "ddim",
                       [&](const LatentState& z, int) { return ddim_invert_step(model, z, cond); });
}

InversionTrajectory fixed_point_invert(const NoisePredictor& model, const Tensor& z0, const Condition& cond,
                                       const FixedPointOptions& options, const std::vector<int>& timeline) {
  options.validate();
  return run_inversion(model.schedule(), z0, timeline, "fixed_point", [&](const LatentState& z, int t_next) {
    return fixed_point_invert_step(model, z, cond, options, t_next);
  });
}

InversionTrajectory deepinv_invert(const DualBranchSolver& solver, const NoisePredictor& model, const Tensor& z0,
                                   const Condition& cond, const std::vector<int>& timeline) {
  if (solver.config().schedule_steps != model.schedule().steps()) {
    throw ContractError("solver was built for a " + std::to_string(solver.config().schedule_steps) +
                        "-step schedule, backbone has " + std::to_string(model.schedule().steps()));
  }
  const Condition conds[] = {cond};
  return run_inversion(model.schedule(), z0, timeline, "deepinv", [&](const LatentState& z, int) {
    const Tensor eps_tilde = ddim_invert_step(model, z, cond);
    const int t[] = {z.t};
    return solver.forward(eps_tilde, z.z, t, conds, z0);
  });
}

LatentState reconstruct(const NoisePredictor& model, const LatentState& terminal, const Condition& cond,
                        const std::vector<int>& timeline) {
  if (timeline.empty() || timeline.back() != terminal.t) {
    throw ContractError("reconstruct: terminal latent does not sit at the end of the timeline");
  }
  LatentState z = terminal;
  for (std::size_t k = timeline.size() - 1; k > 0; --k) {
    z = denoise_step(model, z, cond, timeline[k - 1]).z_prev;
  }
  return z;
}

Real mean_consistency_residual(const NoisePredictor& model, const InversionTrajectory& trajectory,
                               const Condition& cond) {
  if (trajectory.noises.empty()) return 0.0;
  Real acc = 0;
  for (std::size_t k = 0; k < trajectory.noises.size(); ++k) {
    acc += consistency_residual(model, trajectory.latents[k], trajectory.noises[k], cond,
                                trajectory.latents[k + 1].t);
  }
  return acc / static_cast<Real>(trajectory.noises.size());
}

}  // namespace deepinv

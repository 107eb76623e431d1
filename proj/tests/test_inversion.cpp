#include <doctest.h>

#include <cmath>

#include "deepinv/core/errors.hpp"
#include "deepinv/eval/metrics.hpp"
#include "deepinv/inversion/inversion.hpp"
#include "support.hpp"

using namespace deepinv;
using deepinv::testing::closed_form_fixed_point;
using deepinv::testing::gaussian_batch;
using deepinv::testing::max_abs_diff;

TEST_CASE("DDIM inversion round trip is exact with the exact score") {
  const NoiseSchedule s = make_schedule(50, ScheduleKind::kLinear);
  const Tensor mu = Tensor::vector({0.5, -0.5});
  const AnalyticDenoiser model(mu, 1e-4, s);
  RandomSource rng(1);
  const Tensor z0 = gaussian_batch(rng, 64, mu, 1e-4);
  const auto timeline = full_timeline(s);
  const InversionTrajectory traj = ddim_invert(model, z0, Condition::null(), timeline);
  CHECK(traj.latents.size() == 51);
  CHECK(traj.noises.size() == 50);
  CHECK(traj.terminal().t == 50);
  const LatentState recon = reconstruct(model, traj.terminal(), Condition::null(), timeline);
  CHECK(recon.t == 0);
  CHECK(recon.z.shape() == z0.shape());
  CHECK(mse(recon.z, z0) < 1e-6);
  CHECK(reconstruct(model, traj.terminal(), Condition::null(), timeline).z == recon.z);

  // The DDIM defect scales with the data spread, so the elementwise bound needs a tighter Gaussian.
  const AnalyticDenoiser narrow(mu, 1e-5, s);
  const Tensor z0n = gaussian_batch(rng, 64, mu, 1e-5);
  const InversionTrajectory tn = ddim_invert(narrow, z0n, Condition::null(), timeline);
  CHECK(max_abs_diff(reconstruct(narrow, tn.terminal(), Condition::null(), timeline).z, z0n) < 1e-4);
}

TEST_CASE("trajectories replay bit-exactly and detect tampering") {
  const NoiseSchedule s = make_schedule(20, ScheduleKind::kCosine);
  const AnalyticDenoiser model(Tensor::vector({0.0, 1.0}), 0.5, s);
  RandomSource rng(2);
  InversionTrajectory traj =
      fixed_point_invert(model, normal(rng, {4, 2}), Condition::null(), FixedPointOptions{}, full_timeline(s));
  CHECK_NOTHROW(traj.verify(s));
  traj.noises[7][3] += 1e-12;
  CHECK_THROWS_AS(traj.verify(s), ContractError);
}

TEST_CASE("fixed-point steps never raise the consistency residual on Gaussian data") {
  const NoiseSchedule s = make_schedule(50, ScheduleKind::kLinear);
  const Tensor mu = Tensor::vector({0.5, -0.5});
  const Real sigma = 0.5;
  const AnalyticDenoiser model(mu, sigma, s);
  RandomSource rng(3);
  const Tensor z0 = gaussian_batch(rng, 32, mu, sigma);
  const FixedPointOptions fp{3, 1.0};
  for (int t = 0; t < 50; ++t) {
    const LatentState zt = forward_noise(s, {z0, 0}, t, normal(rng, z0.shape()));
    const Real ddim = consistency_residual(model, zt, ddim_invert_step(model, zt, Condition::null()), Condition::null());
    const Real fixed = consistency_residual(model, zt, fixed_point_invert_step(model, zt, Condition::null(), fp),
                                            Condition::null());
    CHECK(fixed <= ddim);
    CHECK(fixed >= 0.0);
  }
}

TEST_CASE("fixed-point iteration converges to the closed-form fixed point") {
  const NoiseSchedule s = make_schedule(50, ScheduleKind::kLinear);
  const Tensor mu = Tensor::vector({0.5, -0.5});
  const Real sigma = 0.5;
  const AnalyticDenoiser model(mu, sigma, s);
  RandomSource rng(4);
  for (int t : {0, 10, 30, 49}) {
    const LatentState zt = forward_noise(s, {gaussian_batch(rng, 8, mu, sigma), 0}, t, normal(rng, {8, 2}));
    const Tensor exact = closed_form_fixed_point(zt, s, mu, sigma);
    const Tensor e30 = fixed_point_invert_step(model, zt, Condition::null(), {30, 1.0});
    const Tensor e31 = fixed_point_invert_step(model, zt, Condition::null(), {31, 1.0});
    CHECK(max_abs_diff(e30, e31) < 1e-6);
    CHECK(max_abs_diff(e31, exact) < 1e-6);
    CHECK(consistency_residual(model, zt, exact, Condition::null()) < 1e-20);
  }
}

TEST_CASE("one undamped refinement equals a prediction at the DDIM-advanced latent") {
  const NoiseSchedule s = make_schedule(50, ScheduleKind::kLinear);
  const AnalyticDenoiser model(Tensor::vector({0.0, 0.0}), 1.0, s);
  RandomSource rng(5);
  const LatentState zt{normal(rng, {3, 2}), 12};
  const Tensor eps0 = ddim_invert_step(model, zt, Condition::null());
  const Tensor expected = predict_noise(model, add_noise_step(s, zt, eps0), Condition::null());
  CHECK(fixed_point_invert_step(model, zt, Condition::null(), {1, 1.0}) == expected);
  CHECK(consistency_residual(model, zt, expected, Condition::null()) <=
        consistency_residual(model, zt, eps0, Condition::null()));
}

TEST_CASE("fixed-point options are validated") {
  CHECK_THROWS_AS((FixedPointOptions{0, 1.0}.validate()), ContractError);
  CHECK_THROWS_AS((FixedPointOptions{3, 0.0}.validate()), ContractError);
  CHECK_THROWS_AS((FixedPointOptions{3, 1.5}.validate()), ContractError);
  CHECK_NOTHROW((FixedPointOptions{3, 0.5}.validate()));
}

TEST_CASE("consistency residual vanishes for a pinned prediction") {
  const NoiseSchedule s = make_schedule(50, ScheduleKind::kLinear);
  RandomSource rng(6);
  const Tensor eps = normal(rng, {4, 2});
  const deepinv::testing::PinnedPredictor pinned(s, eps);
  const LatentState z{normal(rng, {4, 2}), 20};
  CHECK(consistency_residual(pinned, z, eps, Condition::null()) < 1e-10);
  CHECK(consistency_residual(pinned, z, normal(rng, {4, 2}), Condition::null()) > 0.0);
  CHECK_THROWS_AS(ddim_invert_step(pinned, {z.z, 50}, Condition::null()), DomainError);
}

TEST_CASE("untrained solver inversion equals DDIM inversion") {
  const NoiseSchedule s = make_schedule(50, ScheduleKind::kLinear);
  RandomSource rng(7);
  const BaseDenoiser model(DenoiserConfig{}, s, rng);
  const DualBranchSolver solver(SolverConfig{}, rng);
  const Tensor z0 = normal(rng, {16, 2});
  const auto timeline = full_timeline(s);
  const InversionTrajectory a = ddim_invert(model, z0, Condition::null(), timeline);
  const InversionTrajectory b = deepinv_invert(solver, model, z0, Condition::null(), timeline);
  CHECK(b.method_tag == "deepinv");
  for (std::size_t k = 0; k < a.latents.size(); ++k) CHECK(max_abs_diff(a.latents[k].z, b.latents[k].z) < 1e-6);

  SolverConfig other;
  other.schedule_steps = 20;
  const DualBranchSolver mismatched(other, rng);
  CHECK_THROWS_AS(deepinv_invert(mismatched, model, z0, Condition::null(), timeline), ContractError);
}

TEST_CASE("method names round trip") {
  for (Method m : {Method::kDdim, Method::kFixedPoint, Method::kDeepInv}) CHECK(parse_method(to_string(m)) == m);
  CHECK_THROWS(parse_method("renoise"));
}

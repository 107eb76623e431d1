#include <doctest.h>

#include <cmath>
#include <numbers>

#include "deepinv/core/errors.hpp"
#include "deepinv/diffusion/sampler.hpp"
#include "support.hpp"

using namespace deepinv;

namespace {

/// E[eps | z] for z = sqrt(a) z0 + sqrt(1 - a) eps, z0 ~ N(mu, s^2), by
/// quadrature of the posterior over z0 on a fine grid.
Real posterior_noise_by_quadrature(Real z, Real a, Real mu, Real s) {
  const int n = 20001;
  const Real lo = mu - 12 * s, hi = mu + 12 * s;
  Real w_sum = 0, m_sum = 0;
  for (int i = 0; i < n; ++i) {
    const Real x0 = lo + (hi - lo) * i / (n - 1);
    const Real prior = std::exp(-0.5 * (x0 - mu) * (x0 - mu) / (s * s));
    const Real r = z - std::sqrt(a) * x0;
    const Real lik = std::exp(-0.5 * r * r / (1 - a));
    w_sum += prior * lik;
    m_sum += prior * lik * x0;
  }
  const Real post_mean = m_sum / w_sum;
  return (z - std::sqrt(a) * post_mean) / std::sqrt(1 - a);
}

Real cosine_oracle(int t, int T) {
  auto f = [&](int s) {
    const Real c = std::cos(((static_cast<Real>(s) / T) + 0.008) / 1.008 * std::numbers::pi / 2);
    return c * c;
  };
  return 0.01 + 0.99 * f(t) / f(0);
}

}  // namespace

TEST_CASE("schedules hit their endpoints and decrease strictly") {
  const NoiseSchedule one = make_schedule(1, ScheduleKind::kLinear);
  CHECK(one.alpha_bar(0) == 1.0);
  CHECK(one.alpha_bar(1) == doctest::Approx(0.01).epsilon(1e-15));
  for (ScheduleKind kind : {ScheduleKind::kLinear, ScheduleKind::kCosine}) {
    const NoiseSchedule s = make_schedule(50, kind);
    CHECK(s.alpha_bar(0) == 1.0);
    CHECK(s.alpha_bar(50) <= 0.01 + 1e-15);
    for (int t = 1; t <= 50; ++t) {
      CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
      CHECK(s.alpha_bar(t) > 0.0);
    }
  }
  CHECK_THROWS_AS(make_schedule(0, ScheduleKind::kLinear), ContractError);
  CHECK_THROWS_AS(make_schedule(10, ScheduleKind::kLinear).alpha_bar(11), DomainError);
}

TEST_CASE("cosine schedule matches the direct formula") {
  const NoiseSchedule s = make_schedule(50, ScheduleKind::kCosine);
  for (int t = 0; t <= 50; ++t) CHECK(s.alpha_bar(t) == doctest::Approx(cosine_oracle(t, 50)).epsilon(1e-14));
  const NoiseSchedule lin = make_schedule(50, ScheduleKind::kLinear);
  for (int t = 0; t <= 50; ++t) CHECK(lin.alpha_bar(t) == doctest::Approx(1.0 - 0.99 * t / 50.0).epsilon(1e-14));
}

TEST_CASE("timelines subsample the schedule evenly") {
  const NoiseSchedule s = make_schedule(50, ScheduleKind::kLinear);
  CHECK(make_timeline(s, 1) == std::vector<int>{0, 50});
  CHECK(make_timeline(s, 5) == std::vector<int>{0, 10, 20, 30, 40, 50});
  CHECK(make_timeline(s, 50).size() == 51);
}

TEST_CASE("forward noise matches a scalar loop") {
  RandomSource rng(1);
  const NoiseSchedule s = make_schedule(50, ScheduleKind::kCosine);
  const Tensor z0 = normal(rng, {4, 3}), eps = normal(rng, {4, 3});
  for (int t : {0, 1, 17, 50}) {
    const LatentState zt = forward_noise(s, {z0, 0}, t, eps);
    CHECK(zt.t == t);
    const Real a = s.alpha_bar(t);
    for (std::size_t i = 0; i < z0.numel(); ++i) CHECK(zt.z[i] == std::sqrt(a) * z0[i] + std::sqrt(1 - a) * eps[i]);
  }
  CHECK(forward_noise(s, {z0, 0}, 0, eps).z == z0);
  CHECK_THROWS_AS(forward_noise(s, {z0, 0}, 51, eps), DomainError);
  CHECK_THROWS_AS(forward_noise(s, {z0, 3}, 5, eps), ContractError);
}

TEST_CASE("add-noise and denoise steps mirror each other") {
  RandomSource rng(2);
  const NoiseSchedule s = make_schedule(50, ScheduleKind::kLinear);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor z = normal(rng, {3, 2}), eps = normal(rng, {3, 2});
    const int t = static_cast<int>(rng.below(50));
    const LatentState next = add_noise_step(s, {z, t}, eps);
    CHECK(next.t == t + 1);
    const Real a0 = s.alpha_bar(t), a1 = s.alpha_bar(t + 1);
    for (std::size_t i = 0; i < z.numel(); ++i) {
      const Real x0 = (z[i] - std::sqrt(1 - a0) * eps[i]) / std::sqrt(a0);
      CHECK(next.z[i] == doctest::Approx(std::sqrt(a1) * x0 + std::sqrt(1 - a1) * eps[i]).epsilon(1e-14));
    }
    const deepinv::testing::PinnedPredictor pinned(s, eps);
    const DenoiseResult back = denoise_step(pinned, next, Condition::null());
    CHECK(back.z_prev.t == t);
    for (std::size_t i = 0; i < z.numel(); ++i) CHECK(std::abs(back.z_prev.z[i] - z[i]) < 1e-5);
  }
  const Tensor z = normal(rng, {1, 2});
  const LatentState first = add_noise_step(s, {z, 0}, Tensor::zeros({1, 2}));
  CHECK(first.z[0] == doctest::Approx(std::sqrt(s.alpha_bar(1)) * z[0]));
  CHECK_THROWS_AS(add_noise_step(s, {z, 50}, z), DomainError);
  const deepinv::testing::PinnedPredictor pinned(s, z);
  CHECK_THROWS_AS(denoise_step(pinned, {z, 0}, Condition::null()), DomainError);
}

TEST_CASE("denoising with the true noise recovers the previous forward latent") {
  RandomSource rng(3);
  const NoiseSchedule s = make_schedule(50, ScheduleKind::kLinear);
  const Tensor z0 = normal(rng, {2, 2}), eps = normal(rng, {2, 2});
  const LatentState z10 = forward_noise(s, {z0, 0}, 10, eps);
  const deepinv::testing::PinnedPredictor pinned(s, eps);
  const LatentState z9 = denoise_step(pinned, z10, Condition::null()).z_prev;
  const LatentState expected = forward_noise(s, {z0, 0}, 9, eps);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(z9.z[i] - expected.z[i]) < 1e-5);
}

TEST_CASE("analytic denoiser returns the posterior mean of the noise") {
  const NoiseSchedule s = make_schedule(50, ScheduleKind::kLinear);
  const Real mu0 = 0.5, mu1 = -0.5, sigma = 0.4;
  const AnalyticDenoiser model(Tensor::vector({mu0, mu1}), sigma, s);
  RandomSource rng(4);
  for (int t : {1, 5, 25, 50}) {
    const Tensor z0 = Tensor::matrix(1, 2, {mu0 + sigma * rng.normal(), mu1 + sigma * rng.normal()});
    const LatentState zt = forward_noise(s, {z0, 0}, t, normal(rng, {1, 2}));
    const Tensor pred = predict_noise(model, zt, Condition::null());
    const Real a = s.alpha_bar(t);
    CHECK(std::abs(pred[0] - posterior_noise_by_quadrature(zt.z[0], a, mu0, sigma)) < 1e-5);
    CHECK(std::abs(pred[1] - posterior_noise_by_quadrature(zt.z[1], a, mu1, sigma)) < 1e-5);
  }
}

TEST_CASE("analytic sampling from noise lands near the data mean") {
  const NoiseSchedule s = make_schedule(50, ScheduleKind::kLinear);
  const Real sigma = 0.3;
  const AnalyticDenoiser model(Tensor::vector({1.0, -2.0}), sigma, s);
  RandomSource rng(5);
  LatentState z{normal(rng, {200, 2}), 50};
  while (z.t > 0) z = denoise_step(model, z, Condition::null()).z_prev;
  Real m0 = 0, m1 = 0;
  for (std::size_t i = 0; i < 200; ++i) {
    m0 += z.z.at(i, 0) / 200;
    m1 += z.z.at(i, 1) / 200;
  }
  CHECK(std::abs(m0 - 1.0) < 3 * sigma);
  CHECK(std::abs(m1 + 2.0) < 3 * sigma);
}

TEST_CASE("base denoiser output keeps the latent shape and is deterministic") {
  RandomSource rng(6);
  const BaseDenoiser model(DenoiserConfig{}, make_schedule(50, ScheduleKind::kLinear), rng);
  const Tensor z = normal(rng, {5, 2});
  const std::vector<int> t{3};
  const std::vector<Condition> c{Condition::null()};
  const Tensor a = model.predict(z, t, c), b = model.predict(z, t, c);
  CHECK(a.shape() == z.shape());
  CHECK(a == b);
}

TEST_CASE("base training approaches the irreducible loss on single-Gaussian data") {
  RandomSource data_rng(7);
  const Real mu0 = 0.5, mu1 = -0.5, sigma = 0.5;
  Tensor latents({2000, 2});
  for (std::size_t i = 0; i < 2000; ++i) {
    latents.at(i, 0) = mu0 + sigma * data_rng.normal();
    latents.at(i, 1) = mu1 + sigma * data_rng.normal();
  }
  const std::vector<Condition> conds(2000, Condition::null());
  const NoiseSchedule s = make_schedule(50, ScheduleKind::kLinear);
  BaseTrainOptions opts;
  opts.epochs = 60;
  RandomSource rng_a(8), rng_b(8);
  const BaseTrainResult a = train_base(latents, conds, s, DenoiserConfig{}, opts, rng_a);
  const Real floor = AnalyticDenoiser(Tensor::vector({mu0, mu1}), sigma, s).irreducible_loss();
  Real tail = 0;
  for (std::size_t e = a.epoch_loss.size() - 10; e < a.epoch_loss.size(); ++e) tail += a.epoch_loss[e] / 10;
  MESSAGE("final loss " << tail << " vs irreducible " << floor);
  CHECK(std::abs(tail - floor) <= 0.15 * floor);
  CHECK(a.epoch_loss.back() <= a.epoch_loss.front());

  opts.epochs = 3;
  RandomSource rng_c(9), rng_d(9);
  const BaseTrainResult c = train_base(latents, conds, s, DenoiserConfig{}, opts, rng_c);
  const BaseTrainResult d = train_base(latents, conds, s, DenoiserConfig{}, opts, rng_d);
  const auto pc = c.model.parameters().all(), pd = d.model.parameters().all();
  for (std::size_t i = 0; i < pc.size(); ++i) CHECK(pc[i]->value == pd[i]->value);
  CHECK_THROWS_AS(train_base(Tensor({0, 2}), {}, s, DenoiserConfig{}, opts, rng_c), ContractError);
}

#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "deepinv/core/errors.hpp"
#include "deepinv/eval/harness.hpp"
#include "deepinv/eval/metrics.hpp"
#include "support.hpp"

using namespace deepinv;

namespace {

/// Straight-line SSIM over one window, in long double, two-pass statistics.
long double window_oracle(const Tensor& a, const Tensor& b, std::size_t r0, std::size_t c0, std::size_t h,
                          std::size_t w, long double L) {
  const std::size_t W = a.shape()[1];
  long double ma = 0, mb = 0;
  for (std::size_t r = r0; r < r0 + h; ++r)
    for (std::size_t c = c0; c < c0 + w; ++c) ma += a[r * W + c], mb += b[r * W + c];
  const long double n = static_cast<long double>(h * w);
  ma /= n, mb /= n;
  long double va = 0, vb = 0, cov = 0;
  for (std::size_t r = r0; r < r0 + h; ++r)
    for (std::size_t c = c0; c < c0 + w; ++c) {
      const long double da = a[r * W + c] - ma, db = b[r * W + c] - mb;
      va += da * da, vb += db * db, cov += da * db;
    }
  va /= n, vb /= n, cov /= n;
  const long double c1 = (0.01L * L) * (0.01L * L), c2 = (0.03L * L) * (0.03L * L);
  return ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

long double ssim_oracle(const Tensor& a, const Tensor& b, long double L) {
  const std::size_t H = a.shape()[0], W = a.shape()[1];
  if (H < 16 || W < 16) return window_oracle(a, b, 0, 0, H, W, L);
  long double acc = 0;
  std::size_t count = 0;
  for (std::size_t r = 0; r + 8 <= H; ++r)
    for (std::size_t c = 0; c + 8 <= W; ++c, ++count) acc += window_oracle(a, b, r, c, 8, 8, L);
  return acc / static_cast<long double>(count);
}

Tensor uniform_image(RandomSource& rng, std::size_t h, std::size_t w) {
  Tensor t({h, w});
  for (Real& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("mse and psnr closed forms") {
  const Tensor a = Tensor::matrix(1, 4, {0, 0, 0, 0});
  const Tensor b = Tensor::matrix(1, 4, {0.2, -0.2, 0.2, -0.2});
  CHECK(mse(a, b) == doctest::Approx(0.04).epsilon(1e-14));
  // 10 log10(4 / 0.04) = 20 dB
  CHECK(psnr(a, b, 2.0) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(psnr_from_mse(4.0, 2.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::isinf(psnr(a, a, 2.0)));
  CHECK(psnr(a, a, 2.0) > 0);
  CHECK_THROWS_AS(mse(a, Tensor({4, 1})), DimensionError);
}

TEST_CASE("psnr is monotone decreasing in mse") {
  Real prev = std::numeric_limits<Real>::infinity();
  for (Real m = 1e-6; m < 10; m *= 1.7) {
    const Real p = psnr_from_mse(m, 2.0);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("ssim matches an independent oracle") {
  RandomSource rng(11);
  for (std::size_t side : {4u, 8u, 15u, 16u, 20u}) {
    for (int trial = 0; trial < 5; ++trial) {
      const Tensor a = uniform_image(rng, side, side);
      Tensor b = a;
      for (Real& v : b.data()) v += 0.2 * rng.normal();
      const Real got = ssim(a, b, 2.0);
      CHECK(std::abs(got - static_cast<Real>(ssim_oracle(a, b, 2.0L))) < 1e-12);
      CHECK(got <= 1.0 + 1e-15);
      CHECK(got >= -1.0 - 1e-15);
    }
  }
  const Tensor a = uniform_image(rng, 8, 8);
  CHECK(ssim(a, a, 2.0) == doctest::Approx(1.0).epsilon(1e-15));
  Real prev = 1.0;
  for (Real level : {0.05, 0.2, 0.8}) {
    Tensor noisy = a;
    RandomSource local(99);
    for (Real& v : noisy.data()) v += level * local.normal();
    const Real s = ssim(a, noisy, 2.0);
    CHECK(s < prev);
    prev = s;
  }
  CHECK_THROWS_AS(ssim(a, Tensor({8, 7}), 2.0), DimensionError);
  CHECK_THROWS_AS(ssim(Tensor::vector({1, 2}), Tensor::vector({1, 2}), 2.0), DimensionError);
}

TEST_CASE("ssim is symmetric") {
  RandomSource rng(12);
  const Tensor a = uniform_image(rng, 16, 16), b = uniform_image(rng, 16, 16);
  CHECK(ssim(a, b, 2.0) == doctest::Approx(ssim(b, a, 2.0)).epsilon(1e-14));
}

TEST_CASE("reports round trip and render") {
  EvalReport r;
  r.dataset = "gaussian_mixture_2d";
  r.seed = 42;
  r.rows.push_back({"ddim", 0.1234567890123, 12.1, 0.8, 1e-3, 0.5, 298, 42});
  r.rows.push_back({"fixed_point", 0.0, std::numeric_limits<Real>::infinity(), 1.0, 1e-9, 0.0, 298, 42});
  std::stringstream ss;
  r.write_csv(ss);
  CHECK(ss.str().rfind(std::string(EvalReport::kHeader) + "\n", 0) == 0);
  const EvalReport back = EvalReport::read_csv(ss);
  REQUIRE(back.rows.size() == 2);
  CHECK(back.rows[0].mse == r.rows[0].mse);
  CHECK(std::isinf(back.rows[1].psnr_db));
  CHECK(back.find("fixed_point") != nullptr);
  CHECK(back.find("deepinv") == nullptr);
  const std::string table = r.table();
  CHECK(table.find("psnr_max_range=2") != std::string::npos);
  CHECK(table.find("fixed_point") != std::string::npos);
}

TEST_CASE("harness: untrained solver scores exactly like DDIM, threads do not change results") {
  const NoiseSchedule s = make_schedule(50, ScheduleKind::kLinear);
  const AnalyticDenoiser model(Tensor::vector({0.5, -0.5}), 0.5, s);
  RandomSource rng(13);
  const DualBranchSolver solver(SolverConfig{}, rng);
  const Tensor latents = normal(rng, {20, 2});
  EvalContext ctx;
  ctx.model = &model;
  ctx.solver = &solver;
  ctx.record_wall_time = false;
  const std::vector<Method> methods{Method::kDdim, Method::kFixedPoint, Method::kDeepInv};
  std::vector<Tensor> recon;
  const EvalReport one = compare_methods(methods, ctx, latents, "gaussian_2d", 1, &recon);
  const EvalReport four = compare_methods(methods, ctx, latents, "gaussian_2d", 4);
  REQUIRE(one.rows.size() == 3);
  CHECK(one.rows[0].method == "ddim");
  CHECK(one.rows[2].mse == one.rows[0].mse);
  CHECK(recon[2] == recon[0]);
  CHECK(one.rows[1].mse < one.rows[0].mse);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(one.rows[i].mse == four.rows[i].mse);
    CHECK(one.rows[i].ssim == four.rows[i].ssim);
    CHECK(one.rows[i].wall_time_s == 0.0);
    CHECK(one.rows[i].n_items == 20u);
    CHECK(one.rows[i].psnr_db == psnr_from_mse(one.rows[i].mse, 2.0));
    CHECK(one.rows[i].mse == doctest::Approx(mse(recon[i], latents)).epsilon(1e-14));
  }
  std::stringstream a, b;
  one.write_csv(a);
  four.write_csv(b);
  CHECK(a.str() == b.str());

  EvalContext no_solver = ctx;
  no_solver.solver = nullptr;
  CHECK_THROWS(evaluate_method(Method::kDeepInv, no_solver, latents));
}

TEST_CASE("harness scores images with per-image ssim") {
  const NoiseSchedule s = make_schedule(10, ScheduleKind::kLinear);
  Tensor mu({64});
  const AnalyticDenoiser model(mu, 0.5, s);
  RandomSource rng(14);
  const Tensor latents = normal(rng, {3, 64});
  EvalContext ctx;
  ctx.model = &model;
  ctx.image_side = 8;
  Tensor recon;
  const EvalRow row = evaluate_method(Method::kDdim, ctx, latents, &recon);
  Real expected = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    Tensor x({8, 8}), y({8, 8});
    for (std::size_t j = 0; j < 64; ++j) x[j] = recon[i * 64 + j], y[j] = latents[i * 64 + j];
    expected += ssim(x, y, 2.0) / 3;
  }
  CHECK(row.ssim == doctest::Approx(expected).epsilon(1e-12));
  CHECK(row.wall_time_s >= 0);
}

#include "deepinv/eval/metrics.hpp"

#include <cmath>
#include <limits>

#include "deepinv/core/errors.hpp"

namespace deepinv {

Real mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mse: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  if (a.empty()) throw DomainError("mse of empty tensors");
  Real acc = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const Real d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<Real>(a.numel());
}

Real psnr_from_mse(Real mse_value, Real max_range) {
  if (mse_value == 0.0) return std::numeric_limits<Real>::infinity();
  return 10.0 * std::log10(max_range * max_range / mse_value);
}

Real psnr(const Tensor& a, const Tensor& b, Real max_range) { return psnr_from_mse(mse(a, b), max_range); }

namespace {

Real window_ssim(const Tensor& a, const Tensor& b, std::size_t r0, std::size_t c0, std::size_t h, std::size_t w,
                 Real c1, Real c2) {
  const Real n = static_cast<Real>(h * w);
  Real ma = 0, mb = 0;
  for (std::size_t r = r0; r < r0 + h; ++r) {
    for (std::size_t c = c0; c < c0 + w; ++c) {
      ma += a.at(r, c);
      mb += b.at(r, c);
    }
  }
  ma /= n;
  mb /= n;
  Real va = 0, vb = 0, cov = 0;
  for (std::size_t r = r0; r < r0 + h; ++r) {
    for (std::size_t c = c0; c < c0 + w; ++c) {
      const Real da = a.at(r, c) - ma, db = b.at(r, c) - mb;
      va += da * da;
      vb += db * db;
      cov += da * db;
    }
  }
  va /= n;
  vb /= n;
  cov /= n;
  return ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

}  // namespace

Real ssim(const Tensor& a, const Tensor& b, Real max_range) {
  if (a.shape() != b.shape()) {
    throw DimensionError("ssim: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  if (a.rank() != 2 || a.empty()) throw DimensionError("ssim expects a non-empty 2-D image");
  const Real c1 = (0.01 * max_range) * (0.01 * max_range);
  const Real c2 = (0.03 * max_range) * (0.03 * max_range);
  const std::size_t h = a.rows(), w = a.cols();
  if (h < kSsimSlidingMinSide || w < kSsimSlidingMinSide) return window_ssim(a, b, 0, 0, h, w, c1, c2);
  Real acc = 0;
  std::size_t count = 0;
  for (std::size_t r = 0; r + kSsimWindow <= h; ++r) {
    for (std::size_t c = 0; c + kSsimWindow <= w; ++c) {
      acc += window_ssim(a, b, r, c, kSsimWindow, kSsimWindow, c1, c2);
      ++count;
    }
  }
  return acc / static_cast<Real>(count);
}

}  // namespace deepinv

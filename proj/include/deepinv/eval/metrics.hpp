#pragma once

#include "deepinv/core/tensor.hpp"

namespace deepinv {

/// Mean squared element difference.
Real mse(const Tensor& a, const Tensor& b);

/// 10 log10(max_range^2 / mse); +infinity when mse == 0.
Real psnr_from_mse(Real mse_value, Real max_range);
Real psnr(const Tensor& a, const Tensor& b, Real max_range);

inline constexpr std::size_t kSsimWindow = 8;
inline constexpr std::size_t kSsimSlidingMinSide = 16;

/// Structural similarity of two single-channel images [H x W] with
/// C1 = (0.01 L)^2, C2 = (0.03 L)^2, L = max_range and population statistics.
/// Images smaller than 16 px on a side use one global window; larger ones
/// average uniform 8 x 8 windows at stride 1.
Real ssim(const Tensor& a, const Tensor& b, Real max_range);

}  // namespace deepinv

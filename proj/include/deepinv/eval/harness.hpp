#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deepinv/inversion/inversion.hpp"

namespace deepinv {

struct EvalRow {
  std::string method;
  Real mse = 0;
  Real psnr_db = 0;
  Real ssim = 0;
  Real consistency_residual = 0;
  Real wall_time_s = 0;
  std::size_t n_items = 0;
  std::uint64_t seed = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::string dataset;
  std::uint64_t seed = 0;
  Real max_range = 2.0;

  static constexpr const char* kHeader = "method,mse,psnr_db,ssim,consistency_residual,wall_time_s,n_items,seed";

  const EvalRow* find(const std::string& method) const;
  void write_csv(std::ostream& out) const;
  static EvalReport read_csv(std::istream& in);
  /// Fixed-width table preceded by the metric conventions.
  std::string table() const;
};

struct EvalContext {
  const NoisePredictor* model = nullptr;
  const DualBranchSolver* solver = nullptr;  ///< required for Method::kDeepInv
  FixedPointOptions fixed_point;
  Condition cond = Condition::null();
  /// Side of square images; unset for point data.
  std::optional<std::size_t> image_side;
  Real max_range = 2.0;
  std::uint64_t seed = 0;
  /// When false wall_time_s is reported as 0 so that reports are byte-reproducible.
  bool record_wall_time = true;
};

/// Inverts every test latent to t = T with `method`, reconstructs to t = 0 and
/// scores the reconstruction. PSNR is computed from the set-level MSE. SSIM is
/// the per-image mean for images; for point data it is the global-window SSIM
/// of the stacked [N x d] latents. Wall time covers inversion + reconstruction.
/// `reconstruction`, when given, receives the reconstructed latents.
EvalRow evaluate_method(Method method, const EvalContext& ctx, const Tensor& test_latents,
                        Tensor* reconstruction = nullptr);

/// One row per method, in the order given. `threads` > 1 evaluates methods concurrently.
EvalReport compare_methods(std::span<const Method> methods, const EvalContext& ctx, const Tensor& test_latents,
                           std::string dataset_name, unsigned threads = 1,
                           std::vector<Tensor>* reconstructions = nullptr);

}  // namespace deepinv

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "deepinv/diffusion/denoiser.hpp"

namespace deepinv {

enum class DatasetKind { kGaussianMixture2d, kSpiral2d, kShapes8x8, kGaussian2d };

DatasetKind parse_dataset_kind(const std::string& s);
std::string to_string(DatasetKind kind);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::kGaussianMixture2d;
  std::size_t n_train = 2000;
  std::size_t n_test = 298;
  std::size_t n_classes = 3;
  std::uint64_t seed = 0;
  /// Image side for shapes; 8 by default, 16 for the stretch mode.
  std::size_t image_side = 8;
  /// Fraction of items emitted with the null token instead of their class.
  Real null_fraction = 0.1;
  /// gaussian_2d only: N(mean, sigma^2 I), one class.
  Real gaussian_mean_x = 0.5;
  Real gaussian_mean_y = -0.5;
  Real gaussian_sigma = 0.5;

  void validate() const;
  std::size_t latent_dim() const;
};

inline constexpr Real kMixtureRadius = 4.0;
inline constexpr Real kMixtureSigma = 0.3;
inline constexpr Real kSpiralNoise = 0.05;

struct Dataset {
  DatasetSpec spec;
  Tensor latents;                  ///< [N x latent_dim]
  std::vector<Condition> conditions;

  std::size_t size() const { return conditions.size(); }
  bool operator==(const Dataset& other) const {
    return latents == other.latents && conditions == other.conditions;
  }
};

struct DatasetSplit {
  Dataset train;
  Dataset test;
};

/// Deterministic per seed. Train and test are consecutive, disjoint slices of
/// one generated stream.
///   gaussian_mixture_2d: n_classes equally weighted N(c_j, 0.3^2 I), c_j on the radius-4 circle at angle 2 pi j / n_classes
///   spiral_2d:           n_classes interleaved arms, radial noise 0.05
///   shapes_8x8:          anti-aliased rectangle / circle / cross on a [-1, 1] canvas, class = shape kind
///   gaussian_2d:         single isotropic Gaussian, matching an AnalyticDenoiser backbone
DatasetSplit generate(const DatasetSpec& spec);

/// Center of mixture component `j`.
std::pair<Real, Real> mixture_center(std::size_t j, std::size_t n_classes);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace deepinv

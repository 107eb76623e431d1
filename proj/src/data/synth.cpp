#include "deepinv/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "deepinv/core/errors.hpp"
#include "deepinv/io/archive.hpp"

namespace deepinv {

DatasetKind parse_dataset_kind(const std::string& s) {
  if (s == "gaussian_mixture_2d") return DatasetKind::kGaussianMixture2d;
  if (s == "spiral_2d") return DatasetKind::kSpiral2d;
  if (s == "shapes_8x8") return DatasetKind::kShapes8x8;
  if (s == "gaussian_2d") return DatasetKind::kGaussian2d;
  throw ContractError("unknown dataset kind '" + s + "'");
}

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::kGaussianMixture2d: return "gaussian_mixture_2d";
    case DatasetKind::kSpiral2d: return "spiral_2d";
    case DatasetKind::kShapes8x8: return "shapes_8x8";
    case DatasetKind::kGaussian2d: return "gaussian_2d";
  }
  return "unknown";
}

void DatasetSpec::validate() const {
  if (n_train < 1 || n_test < 1) throw ContractError("dataset needs n_train, n_test >= 1");
  if (n_classes < 1) throw ContractError("dataset needs at least one class");
  if (kind == DatasetKind::kShapes8x8 && n_classes != 3) throw ContractError("shapes_8x8 has exactly 3 classes");
  if (kind == DatasetKind::kShapes8x8 && image_side != 8 && image_side != 16) {
    throw ContractError("shapes image side must be 8 or 16");
  }
  if (kind == DatasetKind::kGaussian2d && n_classes != 1) throw ContractError("gaussian_2d has exactly 1 class");
  if (kind == DatasetKind::kGaussian2d && !(gaussian_sigma > 0.0)) throw ContractError("gaussian sigma must be positive");
  if (null_fraction < 0.0 || null_fraction > 1.0) throw ContractError("null fraction must lie in [0, 1]");
}

std::size_t DatasetSpec::latent_dim() const {
  return kind == DatasetKind::kShapes8x8 ? image_side * image_side : 2;
}

std::pair<Real, Real> mixture_center(std::size_t j, std::size_t n_classes) {
  const Real angle = 2.0 * std::numbers::pi * static_cast<Real>(j) / static_cast<Real>(n_classes);
  return {kMixtureRadius * std::cos(angle), kMixtureRadius * std::sin(angle)};
}

namespace {

/// Standard normal truncated at 6 sigma by redrawing.
Real bounded_normal(RandomSource& rng) {
  for (;;) {
    const Real v = rng.normal();
    if (std::abs(v) <= 6.0) return v;
  }
}

void mixture_item(RandomSource& rng, std::size_t cls, std::size_t n_classes, Real* out) {
  const auto [cx, cy] = mixture_center(cls, n_classes);
  out[0] = cx + kMixtureSigma * bounded_normal(rng);
  out[1] = cy + kMixtureSigma * bounded_normal(rng);
}

void spiral_item(RandomSource& rng, std::size_t arm, std::size_t n_arms, Real* out) {
  const Real s = rng.uniform();
  const Real theta = 3.0 * std::numbers::pi * s + 2.0 * std::numbers::pi * static_cast<Real>(arm) / n_arms;
  const Real r = 0.5 + 3.5 * s + kSpiralNoise * bounded_normal(rng);
  out[0] = r * std::cos(theta);
  out[1] = r * std::sin(theta);
}

// Shape coverage tests in continuous pixel coordinates.
struct ShapeParams {
  std::size_t kind;
  Real cx, cy, a, b;
};

bool inside(const ShapeParams& s, Real x, Real y) {
  switch (s.kind) {
    case 0:  // rectangle, half extents a, b
      return std::abs(x - s.cx) <= s.a && std::abs(y - s.cy) <= s.b;
    case 1:  // circle, radius a
      return (x - s.cx) * (x - s.cx) + (y - s.cy) * (y - s.cy) <= s.a * s.a;
    default:  // cross, arm half length a, half thickness b
      return (std::abs(x - s.cx) <= s.a && std::abs(y - s.cy) <= s.b) ||
             (std::abs(x - s.cx) <= s.b && std::abs(y - s.cy) <= s.a);
  }
}

void shape_item(RandomSource& rng, std::size_t kind, std::size_t side, Real* out) {
  const Real n = static_cast<Real>(side);
  ShapeParams s{kind, 0, 0, 0, 0};
  switch (kind) {
    case 0:
      s.a = rng.uniform(0.15, 0.35) * n;
      s.b = rng.uniform(0.15, 0.35) * n;
      break;
    case 1:
      s.a = rng.uniform(0.2, 0.38) * n;
      break;
    default:
      s.a = rng.uniform(0.25, 0.4) * n;
      s.b = rng.uniform(0.08, 0.14) * n;
      break;
  }
  const Real margin = std::max(s.a, s.b);
  s.cx = rng.uniform(margin, n - margin);
  s.cy = rng.uniform(margin, n - margin);
  constexpr int kSuper = 4;
  for (std::size_t py = 0; py < side; ++py) {
    for (std::size_t px = 0; px < side; ++px) {
      int hits = 0;
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const Real x = static_cast<Real>(px) + (sx + 0.5) / kSuper;
          const Real y = static_cast<Real>(py) + (sy + 0.5) / kSuper;
          hits += inside(s, x, y) ? 1 : 0;
        }
      }
      const Real coverage = static_cast<Real>(hits) / (kSuper * kSuper);
      out[py * side + px] = 2.0 * coverage - 1.0;
    }
  }
}

std::string real_text(Real v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Dataset slice(const DatasetSpec& spec, const Tensor& latents, const std::vector<Condition>& conds, std::size_t begin,
              std::size_t end) {
  Dataset d;
  d.spec = spec;
  d.latents = latents.row_slice(begin, end);
  d.conditions.assign(conds.begin() + static_cast<std::ptrdiff_t>(begin),
                      conds.begin() + static_cast<std::ptrdiff_t>(end));
  return d;
}

}  // namespace

DatasetSplit generate(const DatasetSpec& spec) {
  spec.validate();
  RandomSource rng(spec.seed);
  const std::size_t total = spec.n_train + spec.n_test;
  const std::size_t dim = spec.latent_dim();
  Tensor latents({total, dim});
  std::vector<Condition> conds(total);
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t cls = rng.below(spec.n_classes);
    Real* row = latents.data().data() + i * dim;
    switch (spec.kind) {
      case DatasetKind::kGaussianMixture2d: mixture_item(rng, cls, spec.n_classes, row); break;
      case DatasetKind::kSpiral2d: spiral_item(rng, cls, spec.n_classes, row); break;
      case DatasetKind::kShapes8x8: shape_item(rng, cls, spec.image_side, row); break;
      case DatasetKind::kGaussian2d:
        row[0] = spec.gaussian_mean_x + spec.gaussian_sigma * rng.normal();
        row[1] = spec.gaussian_mean_y + spec.gaussian_sigma * rng.normal();
        break;
    }
    const bool unconditioned = rng.uniform() < spec.null_fraction;
    conds[i] = unconditioned ? Condition::null() : Condition::cls(static_cast<int>(cls));
  }
  return {slice(spec, latents, conds, 0, spec.n_train), slice(spec, latents, conds, spec.n_train, total)};
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  Archive a;
  a.kind = "dataset";
  a.set_meta("dataset.kind", to_string(dataset.spec.kind));
  a.set_meta("dataset.n_train", std::to_string(dataset.spec.n_train));
  a.set_meta("dataset.n_test", std::to_string(dataset.spec.n_test));
  a.set_meta("dataset.n_classes", std::to_string(dataset.spec.n_classes));
  a.set_meta("dataset.seed", std::to_string(dataset.spec.seed));
  a.set_meta("dataset.image_side", std::to_string(dataset.spec.image_side));
  a.set_meta("dataset.null_fraction", real_text(dataset.spec.null_fraction));
  a.set_meta("dataset.gaussian_mean_x", real_text(dataset.spec.gaussian_mean_x));
  a.set_meta("dataset.gaussian_mean_y", real_text(dataset.spec.gaussian_mean_y));
  a.set_meta("dataset.gaussian_sigma", real_text(dataset.spec.gaussian_sigma));
  a.add_tensor("latents", dataset.latents);
  Tensor labels({dataset.size()});
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    labels[i] = dataset.conditions[i].is_null() ? -1.0 : static_cast<Real>(*dataset.conditions[i].label);
  }
  a.add_tensor("labels", std::move(labels));
  write_archive(path, a);
}

Dataset load_dataset(const std::filesystem::path& path) {
  const Archive a = read_archive(path, "dataset");
  Dataset d;
  d.spec.kind = parse_dataset_kind(a.meta_value("dataset.kind"));
  d.spec.n_train = std::stoull(a.meta_value("dataset.n_train"));
  d.spec.n_test = std::stoull(a.meta_value("dataset.n_test"));
  d.spec.n_classes = std::stoull(a.meta_value("dataset.n_classes"));
  d.spec.seed = std::stoull(a.meta_value("dataset.seed"));
  d.spec.image_side = std::stoull(a.meta_value("dataset.image_side"));
  d.spec.null_fraction = std::stod(a.meta_value("dataset.null_fraction"));
  d.spec.gaussian_mean_x = std::stod(a.meta_value("dataset.gaussian_mean_x"));
  d.spec.gaussian_mean_y = std::stod(a.meta_value("dataset.gaussian_mean_y"));
  d.spec.gaussian_sigma = std::stod(a.meta_value("dataset.gaussian_sigma"));
  d.latents = a.tensor("latents");
  const Tensor& labels = a.tensor("labels");
  if (d.latents.rank() != 2 || labels.numel() != d.latents.rows()) {
    throw IntegrityError("dataset latents and labels disagree in length");
  }
  for (Real v : labels.data()) {
    d.conditions.push_back(v < 0 ? Condition::null() : Condition::cls(static_cast<int>(v)));
  }
  return d;
}

}  // namespace deepinv

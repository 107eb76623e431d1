#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "deepinv/data/synth.hpp"
#include "deepinv/eval/harness.hpp"
#include "deepinv/train/trainer.hpp"

namespace deepinv {

/// Bad key, bad value or a violated invariant in a run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class BackboneKind { kTrained, kAnalytic };

struct DiffusionSection {
  int steps = 50;
  ScheduleKind schedule = ScheduleKind::kLinear;
  BackboneKind backbone = BackboneKind::kTrained;
  /// 0 = automatic: 128 for 2-D data, 256 for images.
  std::size_t hidden = 0;
  std::size_t time_width = 64;
  std::size_t cond_width = 32;
  int epochs = 200;
  std::size_t batch_size = 128;
  Real learning_rate = 1e-3;
  bool class_conditional = false;
};

struct InversionSection {
  FixedPointOptions fixed_point;
  /// Invert with class labels (true) or the null token (false).
  bool use_class_condition = false;
};

struct EvalSection {
  std::vector<Method> methods{Method::kDdim, Method::kFixedPoint, Method::kDeepInv};
  Real max_range = 2.0;
  /// "test" or "train".
  std::string split = "test";
  bool record_wall_time = true;
};

/// Every tunable of a run. Loaded from an INI file with sections
/// [run] [data] [diffusion] [solver] [trainer] [inversion] [eval].
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs/default";
  unsigned threads = 1;

  DatasetSpec data;
  DiffusionSection diffusion;
  SolverConfig solver;
  StageSchedule trainer;
  InversionSection inversion;
  EvalSection eval;

  /// Throws ConfigError on any violated invariant of any section.
  void validate() const;

  /// Data spec with the run seed applied.
  DatasetSpec dataset_spec() const;
  DenoiserConfig denoiser_config() const;
  /// Solver config with latent_dim, n_classes and schedule_steps filled from the other sections.
  SolverConfig resolved_solver() const;
  NoiseSchedule make_noise_schedule() const;
};

/// Unknown sections or keys and malformed values raise ConfigError. The
/// result is validated.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Fully resolved INI text; parse_config(render_config(c)) reproduces c.
std::string render_config(const RunConfig& config);

}  // namespace deepinv

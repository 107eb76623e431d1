#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "deepinv/io/config.hpp"

namespace deepinv::cli {

enum ExitCode : int { kOk = 0, kOther = 1, kConfigError = 2, kMissingArtifact = 3, kIntegrityFailure = 4 };

/// A required upstream file does not exist.
class MissingArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommandOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::string> method;
  std::optional<Real> scale_epochs;
  bool full_paper_budgets = false;
  std::optional<std::size_t> index;
  std::optional<std::filesystem::path> input;
};

/// Loads the config (defaults when none is given), applies flag overrides and
/// the DEEPINV_THREADS cap, and validates. Throws ConfigError.
RunConfig resolve_config(const CommandOptions& options);

/// Output layout below the run directory.
struct RunPaths {
  std::filesystem::path root;
  std::filesystem::path config() const { return root / "config.ini"; }
  std::filesystem::path run_info() const { return root / "run_info.txt"; }
  std::filesystem::path train_data() const { return root / "data" / "train.bin"; }
  std::filesystem::path test_data() const { return root / "data" / "test.bin"; }
  std::filesystem::path base() const { return root / "models" / "base.bin"; }
  std::filesystem::path base_loss() const { return root / "models" / "base_loss.csv"; }
  std::filesystem::path solver() const { return root / "models" / "solver.bin"; }
  std::filesystem::path training_log() const { return root / "models" / "training_log.csv"; }
  std::filesystem::path invert_dir() const { return root / "invert"; }
  std::filesystem::path reconstruct_dir() const { return root / "reconstruct"; }
  std::filesystem::path eval_dir() const { return root / "eval"; }
  std::filesystem::path report_csv() const { return eval_dir() / "report.csv"; }
  std::filesystem::path figures_dir() const { return root / "figures"; }
};

int cmd_gen_data(const RunConfig& config);
int cmd_train_base(const RunConfig& config);
int cmd_train_solver(const RunConfig& config);
int cmd_invert(const RunConfig& config, Method method, std::size_t index,
               const std::optional<std::filesystem::path>& input);
int cmd_reconstruct(const RunConfig& config, const std::filesystem::path& input);
int cmd_eval(const RunConfig& config);
int cmd_report(const RunConfig& config);

/// Parses argv, dispatches and maps exceptions to exit codes.
int run_cli(int argc, char** argv);

}  // namespace deepinv::cli

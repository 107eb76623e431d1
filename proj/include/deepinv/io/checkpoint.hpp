#pragma once

#include <filesystem>
#include <memory>

#include "deepinv/inversion/inversion.hpp"
#include "deepinv/io/archive.hpp"

namespace deepinv {

/// Archive kinds: "base", "analytic", "solver", "trajectory", "latent".
/// Parameters are stored as tensors under their names; frozen flags of
/// solver parameters as meta keys "frozen.<name>".

void save_base(const BaseDenoiser& model, const std::filesystem::path& path);
BaseDenoiser load_base(const std::filesystem::path& path);

void save_analytic(const AnalyticDenoiser& model, const std::filesystem::path& path);
AnalyticDenoiser load_analytic(const std::filesystem::path& path);

/// Loads either backbone kind.
std::unique_ptr<NoisePredictor> load_backbone(const std::filesystem::path& path);

/// `log_rows` is the number of training-log rows this state corresponds to.
void save_solver(const DualBranchSolver& solver, const std::filesystem::path& path, std::size_t log_rows = 0);
DualBranchSolver load_solver(const std::filesystem::path& path, std::size_t* log_rows = nullptr);

void save_trajectory(const InversionTrajectory& trajectory, const std::filesystem::path& path);
/// Replays the stored steps and raises IntegrityError when they do not reproduce.
InversionTrajectory load_trajectory(const std::filesystem::path& path, const NoiseSchedule& schedule);

void save_latent(const LatentState& latent, const std::filesystem::path& path);
LatentState load_latent(const std::filesystem::path& path);

}  // namespace deepinv

#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "deepinv/core/optim.hpp"
#include "deepinv/inversion/inversion.hpp"

namespace deepinv {

enum class LossKind { kSelf, kHyb, kStable };

LossKind parse_loss_kind(const std::string& s);
std::string to_string(LossKind kind);

/// The complete solver training plan: outer iterations x timestep configs x 2 rounds.
struct StageSchedule {
  int outer_iterations = 4;
  std::vector<Real> k_per_iteration{0.8, 0.6, 0.5, 0.5};
  std::vector<int> timestep_configs{1, 5, 10, 25, 50};
  /// Unscaled epoch budget per timestep config.
  std::vector<int> epochs_per_config{300, 300, 250, 200, 100};
  /// Multiplier applied to every budget (floored). 1.0 runs the full budgets.
  Real epoch_scale = 0.05;

  Real alpha = 0.5;
  Real lambda1 = 0.5;
  Real lambda2 = 0.5;
  Real learning_rate = 1e-3;
  Real lr_finetune_factor = 0.1;

  /// Outer iteration (1-based) that starts by appending blocks and trains only them.
  int extend_at_iteration = 3;
  std::size_t extension_blocks = 4;

  /// Loss for (round 1, round 2) of each outer iteration.
  std::vector<std::array<LossKind, 2>> round_losses{{LossKind::kSelf, LossKind::kHyb},
                                                    {LossKind::kSelf, LossKind::kHyb},
                                                    {LossKind::kSelf, LossKind::kHyb},
                                                    {LossKind::kStable, LossKind::kStable}};

  /// Rebuild the pseudo-label set every epoch with the current solver (true)
  /// or once per round (false).
  bool refresh_each_epoch = true;
  /// Training items sampled per epoch (0 = the whole training set).
  std::size_t items_per_epoch = 256;
  std::size_t batch_size = 256;
  /// Condition the backbone and solver with class labels instead of the null token.
  bool use_class_condition = false;

  /// Throws ContractError on any violated invariant.
  void validate() const;
  int scaled_epochs(std::size_t config_index) const;
  Real learning_rate_for(int iteration) const;
};

/// True when step t of a T-step discretization lies in the fusion window ((1 - k) T, T].
bool in_fusion_window(int t, int T, Real k);

/// lambda1 eps_bar + lambda2 eps_star inside the window, eps_bar otherwise.
Tensor fuse_pseudo_noise(const Tensor& eps_bar, const Tensor& eps_star, int t, int T, Real k, Real lambda1,
                         Real lambda2);

/// ||eps_star - eps_bar||^2 averaged over elements. The target carries no gradient.
Var loss_self(Var eps_star, const Tensor& eps_bar);
/// ||eps_star - fused||^2 averaged over elements, fused treated as constant.
Var loss_hyb(Var eps_star, const Tensor& eps_fused);
/// alpha l_self + (1 - alpha) l_hyb.
Var loss_stable(Var l_self, Var l_hyb, Real alpha);
Real loss_stable(Real l_self, Real l_hyb, Real alpha);

struct ReferenceNoise {
  Tensor eps_tilde;  ///< DDIM-inversion noise at z_t
  Tensor eps_star;   ///< solver output
  Tensor eps_bar;    ///< backbone prediction at add_noise_step(z_t, eps_star)
};

/// eps*_t = solver(...); z_next = add_noise_step(z_t, eps*_t); eps_bar = eps_theta(z_next, t_next).
ReferenceNoise reference_noise(const NoisePredictor& model, const DualBranchSolver& solver, const LatentState& z_t,
                               const Condition& cond, const Tensor& z0, int t_next);

enum class Provenance { kPlain, kFused };

struct PseudoSample {
  Tensor z_t;
  int t = 0;     ///< backbone schedule index
  int step = 0;  ///< position in the active discretization
  Tensor eps_tilde;
  Tensor z0;
  Condition cond;
  Tensor eps_star;      ///< solver output when the set was built
  Tensor eps_bar;       ///< plain reference noise
  Tensor target_noise;  ///< fused or plain, per provenance
  Provenance provenance = Provenance::kPlain;
};

/// Column-stored pseudo-label set: row i of every matrix belongs to sample i.
struct PseudoDataset {
  Tensor z_t, eps_tilde, z0, eps_star, eps_bar, target;
  std::vector<int> t, step;
  std::vector<Condition> cond;
  std::vector<Provenance> provenance;
  int config_steps = 0;

  std::size_t size() const { return t.size(); }
  PseudoSample sample(std::size_t i) const;
};

/// Rolls every item along `timeline` with the current solver and records the
/// reference and fused noises at each step.
PseudoDataset build_pseudo_dataset(const NoisePredictor& model, const DualBranchSolver& solver, const Tensor& latents,
                                   std::span<const Condition> conds, const std::vector<int>& timeline, Real k,
                                   Real lambda1, Real lambda2);

struct TrainingLogRow {
  int iteration = 0;
  int config = 0;
  int round = 0;
  int epoch = 0;
  LossKind loss_kind = LossKind::kSelf;
  Real loss = 0;
  Real learning_rate = 0;
  std::size_t blocks = 0;
};

struct TrainingLog {
  std::vector<TrainingLogRow> rows;

  static constexpr const char* kHeader = "iteration,config,round,epoch,loss_kind,loss_value,lr,blocks";
  void write_csv(std::ostream& out) const;
  static TrainingLog read_csv(std::istream& in);
};

struct TrainHooks {
  /// Called after each outer iteration (1-based) completes.
  std::function<void(int iteration, const DualBranchSolver&)> on_iteration_end;
  /// Called with every appended log row.
  std::function<void(const TrainingLogRow&)> on_row;
};

/// Runs the full schedule. The backbone is only read.
TrainingLog train_solver(const NoisePredictor& model, DualBranchSolver& solver, const Tensor& latents,
                         std::span<const Condition> conds, const StageSchedule& schedule, RandomSource& rng,
                         const TrainHooks& hooks = {});

/// Mean L_self over the full-resolution trajectories of `latents`.
Real evaluate_self_loss(const NoisePredictor& model, const DualBranchSolver& solver, const Tensor& latents,
                        const Condition& cond);

}  // namespace deepinv

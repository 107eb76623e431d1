#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deepinv/core/nn.hpp"
#include "deepinv/diffusion/denoiser.hpp"

namespace deepinv {

struct SolverConfig {
  std::size_t left_blocks = 2;
  std::size_t right_blocks = 2;
  std::size_t hidden_width = 64;
  std::size_t cond_width = 32;
  std::size_t latent_dim = 2;
  std::size_t time_width = 64;
  std::size_t n_classes = 3;
  /// Steps of the backbone schedule the solver is trained against.
  int schedule_steps = 50;

  void validate() const;
  /// Left + right + the aggregation block.
  std::size_t total_blocks() const { return left_blocks + right_blocks + 1; }
};

/// Residual MLP block with condition modulation:
///   h   = fc1(layer_norm(x))
///   h   = silu(h * (1 + scale(c)) + shift(c))
///   out = x + fc2(h)
/// fc2 starts at zero, so a fresh block is the identity.
class ConditionedBlock {
 public:
  ConditionedBlock(ParameterSet& set, const std::string& name, std::size_t width, std::size_t cond_width,
                   RandomSource& rng, Real init_scale);

  Var operator()(Tape& tape, Var x, Var cond) const;

  std::size_t width() const noexcept { return width_; }
  const std::vector<Parameter*>& parameters() const noexcept { return params_; }
  static std::size_t parameter_count(std::size_t width, std::size_t cond_width);

 private:
  std::size_t width_;
  Parameter* ln_gain_;
  Parameter* ln_bias_;
  Linear fc1_, modulation_, fc2_;
  std::vector<Parameter*> params_;
};

struct TimestepEmbeddingPair {
  Tensor t1;  ///< from (t, condition): conditions the left branch
  Tensor t2;  ///< from (t, z0): conditions the right branch
};

/// Intermediate values of one forward pass, exposed for tests and probes.
struct SolverTrace {
  Var t1, t2;
  Var left, right;
  Var correction;
  Var output;
};

enum class TrainableSelector { kAll, kNewOnly, kNone };
TrainableSelector parse_selector(const std::string& s);

/// Dual-branch inversion solver. Given the DDIM-inversion noise eps_tilde, the
/// current latent z_t, the timestep, the condition and the clean latent z0,
/// predicts the inversion noise
///   eps* = eps_tilde + final(aggregate(left(eps_tilde; t1) ++ right(in(eps_tilde ++ z_t); t2); t1 + t2)).
/// The final projection starts at zero so a fresh solver returns eps_tilde.
class DualBranchSolver {
 public:
  static constexpr Real kInitScale = 0.02;

  DualBranchSolver(SolverConfig config, RandomSource& rng);

  DualBranchSolver(DualBranchSolver&&) = default;
  DualBranchSolver& operator=(DualBranchSolver&&) = default;

  const SolverConfig& config() const noexcept { return config_; }
  std::size_t total_blocks() const noexcept { return left_.size() + right_.size() + 1; }
  const std::vector<std::size_t>& extension_history() const noexcept { return extensions_; }

  SolverTrace trace(Tape& tape, Var eps_tilde, Var z_t, std::span<const int> t, std::span<const Condition> cond,
                    Var z0) const;
  Var forward(Tape& tape, Var eps_tilde, Var z_t, std::span<const int> t, std::span<const Condition> cond,
              Var z0) const;
  Tensor forward(const Tensor& eps_tilde, const Tensor& z_t, std::span<const int> t,
                 std::span<const Condition> cond, const Tensor& z0) const;

  TimestepEmbeddingPair embed_timesteps(std::span<const int> t, std::span<const Condition> cond,
                                        const Tensor& z0) const;

  /// Appends `n_new` identity-initialized blocks to the right branch. Outputs are unchanged.
  void extend_layers(std::size_t n_new, RandomSource& rng);
  void set_trainable(TrainableSelector selector);

  ParameterSet& parameters() noexcept { return params_; }
  const ParameterSet& parameters() const noexcept { return params_; }
  /// Parameters of the blocks added by the most recent extension.
  std::vector<Parameter*> newest_parameters() const;

  /// Closed-form parameter count for a config with `extra_right` appended blocks.
  static std::size_t parameter_count(const SolverConfig& config, std::size_t extra_right = 0);

 private:
  std::pair<Var, Var> embed(Tape& tape, std::span<const int> t, std::span<const Condition> cond, Var z0) const;

  SolverConfig config_;
  ParameterSet params_;
  Parameter* cond_table_ = nullptr;
  Linear t1_proj_, z0_pool_, t2_proj_, left_in_, right_in_, final_;
  std::vector<ConditionedBlock> left_, right_;
  std::optional<ConditionedBlock> aggregate_;
  std::vector<std::size_t> extensions_;
};

}  // namespace deepinv

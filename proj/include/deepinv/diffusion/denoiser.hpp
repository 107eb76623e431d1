#pragma once

#include <optional>
#include <span>
#include <vector>

#include "deepinv/core/nn.hpp"
#include "deepinv/diffusion/schedule.hpp"

namespace deepinv {

/// Prompt analogue: either the shared null token or a class label.
struct Condition {
  std::optional<int> label;

  static Condition null() { return {}; }
  static Condition cls(int label) { return Condition{label}; }

  bool is_null() const noexcept { return !label.has_value(); }
  /// Row of a condition-embedding table; row 0 is the null token.
  std::size_t embedding_index() const noexcept { return label ? static_cast<std::size_t>(*label) + 1 : 0; }

  bool operator==(const Condition&) const = default;
};

/// A batch of latents [B x n] sharing timestep index t.
struct LatentState {
  Tensor z;
  int t = 0;
};

/// Anything that predicts the noise in a noisy latent: the trained backbone,
/// the closed-form Gaussian oracle, or test doubles.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;

  virtual const NoiseSchedule& schedule() const = 0;

  /// One row of `z` per sample; `t` and `cond` hold one entry per row, or a
  /// single entry shared by all rows.
  virtual Tensor predict(const Tensor& z, std::span<const int> t, std::span<const Condition> cond) const = 0;
};

/// Noise prediction for a uniformly timed batch.
Tensor predict_noise(const NoisePredictor& model, const LatentState& state, const Condition& cond);

struct DenoiserConfig {
  std::size_t latent_dim = 2;
  std::size_t hidden = 128;
  std::size_t time_width = 64;
  std::size_t cond_width = 32;
  std::size_t n_classes = 3;
};

/// Epsilon-prediction MLP: latent -> hidden x3 -> latent, with the sinusoidal
/// timestep features and the condition embedding projected into the first
/// hidden layer.
class BaseDenoiser final : public NoisePredictor {
 public:
  BaseDenoiser(DenoiserConfig config, NoiseSchedule schedule, RandomSource& rng);

  BaseDenoiser(BaseDenoiser&&) = default;
  BaseDenoiser& operator=(BaseDenoiser&&) = default;

  const NoiseSchedule& schedule() const override { return schedule_; }
  const DenoiserConfig& config() const noexcept { return config_; }

  Tensor predict(const Tensor& z, std::span<const int> t, std::span<const Condition> cond) const override;

  /// Differentiable forward used for training.
  Var forward(Tape& tape, Var z, std::span<const int> t, std::span<const Condition> cond) const;

  ParameterSet& parameters() noexcept { return params_; }
  const ParameterSet& parameters() const noexcept { return params_; }

 private:
  DenoiserConfig config_;
  NoiseSchedule schedule_;
  ParameterSet params_;
  Linear in_, time_, cond_, hidden2_, hidden3_, out_;
  Parameter* cond_table_ = nullptr;
};

/// Exact posterior-mean noise for data distributed as N(mean, sigma0^2 I):
///   E[eps | z_t] = sqrt(1 - a) (z_t - sqrt(a) mean) / (a sigma0^2 + 1 - a).
class AnalyticDenoiser final : public NoisePredictor {
 public:
  AnalyticDenoiser(Tensor mean, Real sigma0, NoiseSchedule schedule);

  const NoiseSchedule& schedule() const override { return schedule_; }
  Tensor predict(const Tensor& z, std::span<const int> t, std::span<const Condition> cond) const override;

  const Tensor& mean() const noexcept { return mean_; }
  Real sigma0() const noexcept { return sigma0_; }

  /// Irreducible epsilon-prediction loss per element, averaged over t in [1, T].
  Real irreducible_loss() const;

 private:
  Tensor mean_;
  Real sigma0_;
  NoiseSchedule schedule_;
};

struct BaseTrainOptions {
  int epochs = 200;
  std::size_t batch_size = 128;
  Real learning_rate = 1e-3;
  /// Train on class labels (true) or always on the null token (false).
  bool class_conditional = false;
};

struct BaseTrainResult {
  BaseDenoiser model;
  std::vector<Real> epoch_loss;
};

/// Epsilon-prediction training: per sample draw t ~ U{1..T} and eps ~ N(0, I),
/// minimize mean_squared(eps_theta(z_t, t, c) - eps).
BaseTrainResult train_base(const Tensor& latents, std::span<const Condition> conds, NoiseSchedule schedule,
                           DenoiserConfig config, const BaseTrainOptions& options, RandomSource& rng);

}  // namespace deepinv

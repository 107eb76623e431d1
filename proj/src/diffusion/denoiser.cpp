#include "deepinv/diffusion/denoiser.hpp"

#include <cmath>
#include <numeric>

#include "deepinv/core/errors.hpp"
#include "deepinv/core/optim.hpp"

namespace deepinv {

namespace {

template <typename T>
const T& pick(std::span<const T> values, std::size_t row) {
  return values.size() == 1 ? values[0] : values[row];
}

void check_batch(const Tensor& z, std::span<const int> t, std::span<const Condition> cond) {
  const std::size_t b = z.rows();
  if ((t.size() != 1 && t.size() != b) || (cond.size() != 1 && cond.size() != b)) {
    throw DimensionError("noise prediction: " + std::to_string(b) + " rows but " + std::to_string(t.size()) +
                         " timesteps and " + std::to_string(cond.size()) + " conditions");
  }
}

}  // namespace

Tensor predict_noise(const NoisePredictor& model, const LatentState& state, const Condition& cond) {
  const int t[] = {state.t};
  const Condition c[] = {cond};
  return model.predict(state.z, t, c);
}

// ---------------------------------------------------------------------------

BaseDenoiser::BaseDenoiser(DenoiserConfig config, NoiseSchedule schedule, RandomSource& rng)
    : config_(config), schedule_(std::move(schedule)) {
  const auto n = config_.latent_dim, h = config_.hidden;
  auto scaled = [](std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<Real>(fan_in)); };
  in_ = Linear::create(params_, "base.in", n, h, rng, scaled(n));
  time_ = Linear::create(params_, "base.time", config_.time_width, h, rng, scaled(config_.time_width));
  cond_table_ = &params_.add("base.cond_table", init_normal(rng, {config_.n_classes + 1, config_.cond_width}, 1.0));
  cond_ = Linear::create(params_, "base.cond", config_.cond_width, h, rng, scaled(config_.cond_width));
  hidden2_ = Linear::create(params_, "base.hidden2", h, h, rng, scaled(h));
  hidden3_ = Linear::create(params_, "base.hidden3", h, h, rng, scaled(h));
  out_ = Linear::create(params_, "base.out", h, n, rng, scaled(h));
}

Var BaseDenoiser::forward(Tape& tape, Var z, std::span<const int> t, std::span<const Condition> cond) const {
  const Tensor& zv = z.value();
  check_batch(zv, t, cond);
  if (zv.cols() != config_.latent_dim) {
    throw DimensionError("denoiser expects latent width " + std::to_string(config_.latent_dim) + ", got " +
                         shape_string(zv.shape()));
  }
  const std::size_t b = zv.rows();
  std::vector<int> steps(b);
  std::vector<std::size_t> rows(b);
  for (std::size_t r = 0; r < b; ++r) {
    steps[r] = pick(t, r);
    rows[r] = pick(cond, r).embedding_index();
    if (rows[r] > config_.n_classes) throw DomainError("condition label outside the embedding table");
  }
  Var temb = tape.constant(sinusoidal_embedding(steps, config_.time_width));
  Var cemb = gather_rows(tape.param(*cond_table_), std::move(rows));
  Var h = silu(in_(tape, z) + time_(tape, temb) + cond_(tape, cemb));
  h = silu(hidden2_(tape, h));
  h = silu(hidden3_(tape, h));
  return out_(tape, h);
}

Tensor BaseDenoiser::predict(const Tensor& z, std::span<const int> t, std::span<const Condition> cond) const {
  Tape tape;
  return forward(tape, tape.constant(z), t, cond).value();
}

// ---------------------------------------------------------------------------

AnalyticDenoiser::AnalyticDenoiser(Tensor mean, Real sigma0, NoiseSchedule schedule)
    : mean_(std::move(mean)), sigma0_(sigma0), schedule_(std::move(schedule)) {
  if (!(sigma0_ > 0)) throw ContractError("analytic denoiser needs sigma0 > 0");
}

Tensor AnalyticDenoiser::predict(const Tensor& z, std::span<const int> t, std::span<const Condition> cond) const {
  check_batch(z, t, cond);
  if (z.cols() != mean_.numel()) throw DimensionError("analytic denoiser: latent width mismatch");
  Tensor out(z.shape());
  const std::size_t n = z.cols();
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const Real a = schedule_.alpha_bar(pick(t, r));
    const Real gain = std::sqrt(1.0 - a) / (a * sigma0_ * sigma0_ + 1.0 - a);
    const Real sa = std::sqrt(a);
    for (std::size_t c = 0; c < n; ++c) out.at(r, c) = gain * (z.at(r, c) - sa * mean_[c]);
  }
  return out;
}

Real AnalyticDenoiser::irreducible_loss() const {
  Real acc = 0;
  const int T = schedule_.steps();
  for (int t = 1; t <= T; ++t) {
    const Real a = schedule_.alpha_bar(t);
    const Real s2 = sigma0_ * sigma0_;
    acc += a * s2 / (a * s2 + 1.0 - a);
  }
  return acc / static_cast<Real>(T);
}

// ---------------------------------------------------------------------------

BaseTrainResult train_base(const Tensor& latents, std::span<const Condition> conds, NoiseSchedule schedule,
                           DenoiserConfig config, const BaseTrainOptions& options, RandomSource& rng) {
  if (latents.rank() != 2 || latents.rows() == 0) throw ContractError("train_base: empty dataset");
  if (conds.size() != latents.rows()) throw DimensionError("train_base: one condition per latent required");
  if (options.batch_size == 0) throw ContractError("train_base: batch size must be positive");
  config.latent_dim = latents.cols();

  BaseTrainResult result{BaseDenoiser(config, schedule, rng), {}};
  BaseDenoiser& model = result.model;
  Adam adam(model.parameters().all(), AdamHyper{options.learning_rate});

  const std::size_t n = latents.rows(), width = latents.cols();
  const int T = schedule.steps();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    Real loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += options.batch_size) {
      const std::size_t b = std::min(options.batch_size, n - start);
      Tensor zt({b, width});
      Tensor eps({b, width});
      std::vector<int> steps(b);
      std::vector<Condition> batch_conds(b);
      for (std::size_t r = 0; r < b; ++r) {
        const std::size_t idx = order[start + r];
        steps[r] = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(T)));
        batch_conds[r] = options.class_conditional ? conds[idx] : Condition::null();
        const Real a = schedule.alpha_bar(steps[r]);
        for (std::size_t c = 0; c < width; ++c) {
          eps.at(r, c) = rng.normal();
          zt.at(r, c) = std::sqrt(a) * latents.at(idx, c) + std::sqrt(1.0 - a) * eps.at(r, c);
        }
      }
      Tape tape;
      Var pred = model.forward(tape, tape.constant(std::move(zt)), steps, batch_conds);
      Var loss = mean_squared(pred - tape.constant(std::move(eps)));
      adam.step(tape.backward(loss));
      loss_sum += loss.value().item();
      ++batches;
    }
    result.epoch_loss.push_back(loss_sum / static_cast<Real>(batches));
  }
  return result;
}

}  // namespace deepinv

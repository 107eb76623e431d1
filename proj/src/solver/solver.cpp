#include "deepinv/solver/solver.hpp"

#include "deepinv/core/errors.hpp"

namespace deepinv {

namespace {

template <typename T>
const T& pick(std::span<const T> values, std::size_t row) {
  return values.size() == 1 ? values[0] : values[row];
}

}  // namespace

void SolverConfig::validate() const {
  if (left_blocks < 1 || right_blocks < 1) throw ContractError("solver needs at least one block per branch");
  if (hidden_width == 0 || cond_width == 0 || latent_dim == 0) throw ContractError("solver widths must be positive");
  if (time_width < 2 || time_width % 2 != 0) throw ContractError("solver time width must be even");
}

TrainableSelector parse_selector(const std::string& s) {
  if (s == "all") return TrainableSelector::kAll;
  if (s == "new_only") return TrainableSelector::kNewOnly;
  if (s == "none") return TrainableSelector::kNone;
  throw ContractError("unknown trainable selector '" + s + "'");
}

// ---------------------------------------------------------------------------

ConditionedBlock::ConditionedBlock(ParameterSet& set, const std::string& name, std::size_t width,
                                   std::size_t cond_width, RandomSource& rng, Real init_scale)
    : width_(width) {
  ln_gain_ = &set.add(name + ".ln.gain", Tensor::full({width}, 1.0));
  ln_bias_ = &set.add(name + ".ln.bias", Tensor::zeros({width}));
  fc1_ = Linear::create(set, name + ".fc1", width, width, rng, init_scale);
  modulation_ = Linear::create(set, name + ".mod", cond_width, 2 * width, rng, init_scale);
  fc2_ = Linear::zeros(set, name + ".fc2", width, width);
  params_ = {ln_gain_, ln_bias_, fc1_.weight, fc1_.bias, modulation_.weight, modulation_.bias, fc2_.weight, fc2_.bias};
}

Var ConditionedBlock::operator()(Tape& tape, Var x, Var cond) const {
  Var h = fc1_(tape, layer_norm(x, tape.param(*ln_gain_), tape.param(*ln_bias_)));
  Var mod = modulation_(tape, silu(cond));
  Var scale = slice_cols(mod, 0, width_);
  Var shift = slice_cols(mod, width_, 2 * width_);
  h = silu(h * (scale + 1.0) + shift);
  return x + fc2_(tape, h);
}

std::size_t ConditionedBlock::parameter_count(std::size_t w, std::size_t c) {
  return 2 * w            // layer norm
         + w * w + w      // fc1
         + c * 2 * w + 2 * w  // modulation
         + w * w + w;     // fc2
}

// ---------------------------------------------------------------------------

DualBranchSolver::DualBranchSolver(SolverConfig config, RandomSource& rng) : config_(config) {
  config_.validate();
  const auto n = config_.latent_dim, d = config_.hidden_width, c = config_.cond_width, tw = config_.time_width;
  const Real s = kInitScale;
  cond_table_ = &params_.add("solver.cond_table", init_normal(rng, {config_.n_classes + 1, c}, s));
  t1_proj_ = Linear::create(params_, "solver.t1", tw + c, c, rng, s);
  z0_pool_ = Linear::create(params_, "solver.z0_pool", n, c, rng, s);
  t2_proj_ = Linear::create(params_, "solver.t2", tw + c, c, rng, s);
  left_in_ = Linear::create(params_, "solver.left.in", n, d, rng, s);
  right_in_ = Linear::create(params_, "solver.right.in", 2 * n, d, rng, s);
  for (std::size_t i = 0; i < config_.left_blocks; ++i) {
    left_.emplace_back(params_, "solver.left." + std::to_string(i), d, c, rng, s);
  }
  for (std::size_t i = 0; i < config_.right_blocks; ++i) {
    right_.emplace_back(params_, "solver.right." + std::to_string(i), d, c, rng, s);
  }
  aggregate_.emplace(params_, "solver.aggregate", 2 * d, c, rng, s);
  final_ = Linear::zeros(params_, "solver.final", 2 * d, n);
}

std::pair<Var, Var> DualBranchSolver::embed(Tape& tape, std::span<const int> t, std::span<const Condition> cond,
                                            Var z0) const {
  const std::size_t b = z0.value().rows();
  if ((t.size() != 1 && t.size() != b) || (cond.size() != 1 && cond.size() != b)) {
    throw DimensionError("solver: per-row timesteps/conditions do not match batch of " + std::to_string(b));
  }
  std::vector<int> steps(b);
  std::vector<std::size_t> rows(b);
  for (std::size_t r = 0; r < b; ++r) {
    steps[r] = pick(t, r);
    rows[r] = pick(cond, r).embedding_index();
    if (rows[r] > config_.n_classes) throw DomainError("condition label outside the embedding table");
  }
  Var temb = tape.constant(sinusoidal_embedding(steps, config_.time_width));
  Var omega = gather_rows(tape.param(*cond_table_), std::move(rows));
  Var t1 = t1_proj_(tape, concat_cols(temb, omega));
  Var t2 = t2_proj_(tape, concat_cols(temb, z0_pool_(tape, z0)));
  return {t1, t2};
}

SolverTrace DualBranchSolver::trace(Tape& tape, Var eps_tilde, Var z_t, std::span<const int> t,
                                    std::span<const Condition> cond, Var z0) const {
  const auto& shape = eps_tilde.value().shape();
  if (shape.size() != 2 || shape[1] != config_.latent_dim || z_t.value().shape() != shape ||
      z0.value().shape() != shape) {
    throw DimensionError("solver: expected three [B x " + std::to_string(config_.latent_dim) + "] inputs, got " +
                         shape_string(shape) + ", " + shape_string(z_t.value().shape()) + ", " +
                         shape_string(z0.value().shape()));
  }
  SolverTrace tr;
  std::tie(tr.t1, tr.t2) = embed(tape, t, cond, z0);

  Var left = left_in_(tape, eps_tilde);
  for (const auto& block : left_) left = block(tape, left, tr.t1);
  Var right = right_in_(tape, concat_cols(eps_tilde, z_t));
  for (const auto& block : right_) right = block(tape, right, tr.t2);
  tr.left = left;
  tr.right = right;

  Var fused = (*aggregate_)(tape, concat_cols(left, right), tr.t1 + tr.t2);
  tr.correction = final_(tape, fused);
  tr.output = eps_tilde + tr.correction;
  return tr;
}

Var DualBranchSolver::forward(Tape& tape, Var eps_tilde, Var z_t, std::span<const int> t,
                              std::span<const Condition> cond, Var z0) const {
  return trace(tape, eps_tilde, z_t, t, cond, z0).output;
}

Tensor DualBranchSolver::forward(const Tensor& eps_tilde, const Tensor& z_t, std::span<const int> t,
                                 std::span<const Condition> cond, const Tensor& z0) const {
  Tape tape;
  return forward(tape, tape.constant(eps_tilde), tape.constant(z_t), t, cond, tape.constant(z0)).value();
}

TimestepEmbeddingPair DualBranchSolver::embed_timesteps(std::span<const int> t, std::span<const Condition> cond,
                                                        const Tensor& z0) const {
  Tape tape;
  auto [t1, t2] = embed(tape, t, cond, tape.constant(z0));
  return {t1.value(), t2.value()};
}

void DualBranchSolver::extend_layers(std::size_t n_new, RandomSource& rng) {
  if (n_new < 1) throw ContractError("extend_layers needs at least one new block");
  const std::size_t first = right_.size();
  for (std::size_t i = 0; i < n_new; ++i) {
    right_.emplace_back(params_, "solver.right." + std::to_string(first + i), config_.hidden_width,
                        config_.cond_width, rng, kInitScale);
  }
  extensions_.push_back(n_new);
}

std::vector<Parameter*> DualBranchSolver::newest_parameters() const {
  std::vector<Parameter*> out;
  if (extensions_.empty()) return out;
  for (std::size_t i = right_.size() - extensions_.back(); i < right_.size(); ++i) {
    const auto& p = right_[i].parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

void DualBranchSolver::set_trainable(TrainableSelector selector) {
  if (selector == TrainableSelector::kNewOnly && extensions_.empty()) {
    throw ContractError("set_trainable(new_only) before any extension");
  }
  for (Parameter* p : params_.all()) p->trainable = selector == TrainableSelector::kAll;
  if (selector == TrainableSelector::kNewOnly) {
    for (Parameter* p : newest_parameters()) p->trainable = true;
  }
}

std::size_t DualBranchSolver::parameter_count(const SolverConfig& cfg, std::size_t extra_right) {
  const auto n = cfg.latent_dim, d = cfg.hidden_width, c = cfg.cond_width, tw = cfg.time_width;
  return (cfg.n_classes + 1) * c          // condition table
         + (tw + c) * c + c               // t1 projection
         + n * c + c                      // z0 pooling
         + (tw + c) * c + c               // t2 projection
         + n * d + d                      // left input
         + 2 * n * d + d                  // right input
         + (cfg.left_blocks + cfg.right_blocks + extra_right) * ConditionedBlock::parameter_count(d, c) +
         ConditionedBlock::parameter_count(2 * d, c)  // aggregation
         + 2 * d * n + n;                 // final projection
}

}  // namespace deepinv

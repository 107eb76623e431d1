#include "deepinv/train/trainer.hpp"

#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "deepinv/core/errors.hpp"

namespace deepinv {

LossKind parse_loss_kind(const std::string& s) {
  if (s == "self") return LossKind::kSelf;
  if (s == "hyb") return LossKind::kHyb;
  if (s == "stable") return LossKind::kStable;
  throw ContractError("unknown loss kind '" + s + "'");
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kSelf: return "self";
    case LossKind::kHyb: return "hyb";
    case LossKind::kStable: return "stable";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Schedule

void StageSchedule::validate() const {
  if (outer_iterations < 1) throw ContractError("schedule needs at least one outer iteration");
  if (k_per_iteration.size() != static_cast<std::size_t>(outer_iterations)) {
    throw ContractError("schedule: one k per outer iteration required");
  }
  for (Real k : k_per_iteration) {
    if (!(k > 0.0 && k <= 1.0)) throw ContractError("schedule: k must lie in (0, 1]");
  }
  if (timestep_configs.empty() || epochs_per_config.size() != timestep_configs.size()) {
    throw ContractError("schedule: one epoch budget per timestep config required");
  }
  for (std::size_t i = 0; i < timestep_configs.size(); ++i) {
    if (timestep_configs[i] < 1) throw ContractError("schedule: timestep configs must be positive");
    if (i > 0 && timestep_configs[i] <= timestep_configs[i - 1]) {
      throw ContractError("schedule: timestep configs must be strictly increasing");
    }
  }
  for (int e : epochs_per_config) {
    if (e < 0) throw ContractError("schedule: epoch budgets must be nonnegative");
  }
  if (!(epoch_scale >= 0.0)) throw ContractError("schedule: epoch scale must be nonnegative");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractError("schedule: alpha must lie in [0, 1]");
  if (lambda1 < 0.0 || lambda2 < 0.0) throw ContractError("schedule: fusion weights must be nonnegative");
  if (!(learning_rate > 0.0) || !(lr_finetune_factor > 0.0)) {
    throw ContractError("schedule: learning rates must be positive");
  }
  if (round_losses.size() != static_cast<std::size_t>(outer_iterations)) {
    throw ContractError("schedule: one round-loss pair per outer iteration required");
  }
  if (extend_at_iteration < 0 || extend_at_iteration > outer_iterations) {
    throw ContractError("schedule: extension iteration outside the schedule");
  }
  if (extend_at_iteration > 0 && extension_blocks < 1) throw ContractError("schedule: extension needs blocks");
  if (batch_size < 1) throw ContractError("schedule: batch size must be positive");
}

int StageSchedule::scaled_epochs(std::size_t config_index) const {
  const Real e = static_cast<Real>(epochs_per_config.at(config_index)) * epoch_scale;
  return static_cast<int>(std::floor(e + 1e-9));
}

Real StageSchedule::learning_rate_for(int iteration) const {
  return iteration == outer_iterations && outer_iterations > 1 ? learning_rate * lr_finetune_factor : learning_rate;
}

// ---------------------------------------------------------------------------
// Fusion and losses

bool in_fusion_window(int t, int T, Real k) {
  // (1 - k) T is compared with a relative tolerance so that products such as
  // (1 - 0.8) * 5 that are mathematically integral do not round below it.
  const Real threshold = (1.0 - k) * static_cast<Real>(T);
  const Real tol = 1e-9 * std::max<Real>(1.0, static_cast<Real>(T));
  return static_cast<Real>(t) > threshold + tol && t <= T;
}

Tensor fuse_pseudo_noise(const Tensor& eps_bar, const Tensor& eps_star, int t, int T, Real k, Real lambda1,
                         Real lambda2) {
  if (t < 0 || t > T) throw DomainError("fusion timestep outside [0, T]");
  if (eps_bar.shape() != eps_star.shape()) throw DimensionError("fusion: noise shapes differ");
  if (!in_fusion_window(t, T, k)) return eps_bar;
  Tensor out(eps_bar.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = lambda1 * eps_bar[i] + lambda2 * eps_star[i];
  return out;
}

Var loss_self(Var eps_star, const Tensor& eps_bar) {
  if (eps_star.value().shape() != eps_bar.shape()) throw DimensionError("loss_self: shape mismatch");
  return mean_squared(eps_star - eps_star.tape()->constant(eps_bar));
}

Var loss_hyb(Var eps_star, const Tensor& eps_fused) {
  if (eps_star.value().shape() != eps_fused.shape()) throw DimensionError("loss_hyb: shape mismatch");
  return mean_squared(eps_star - eps_star.tape()->constant(eps_fused));
}

Var loss_stable(Var l_self, Var l_hyb, Real alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractError("loss_stable: alpha must lie in [0, 1]");
  return l_self * alpha + l_hyb * (1.0 - alpha);
}

Real loss_stable(Real l_self, Real l_hyb, Real alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractError("loss_stable: alpha must lie in [0, 1]");
  return alpha * l_self + (1.0 - alpha) * l_hyb;
}

// ---------------------------------------------------------------------------
// Pseudo labels

ReferenceNoise reference_noise(const NoisePredictor& model, const DualBranchSolver& solver, const LatentState& z_t,
                               const Condition& cond, const Tensor& z0, int t_next) {
  if (z_t.t >= model.schedule().steps()) throw DomainError("reference_noise from the final timestep");
  ReferenceNoise r;
  r.eps_tilde = ddim_invert_step(model, z_t, cond);
  const int t[] = {z_t.t};
  const Condition c[] = {cond};
  r.eps_star = solver.forward(r.eps_tilde, z_t.z, t, c, z0);
  const LatentState next = add_noise_step(model.schedule(), z_t, r.eps_star, t_next);
  r.eps_bar = predict_noise(model, next, cond);
  return r;
}

PseudoSample PseudoDataset::sample(std::size_t i) const {
  PseudoSample s;
  s.z_t = z_t.row_slice(i, i + 1);
  s.t = t[i];
  s.step = step[i];
  s.eps_tilde = eps_tilde.row_slice(i, i + 1);
  s.z0 = z0.row_slice(i, i + 1);
  s.cond = cond[i];
  s.eps_star = eps_star.row_slice(i, i + 1);
  s.eps_bar = eps_bar.row_slice(i, i + 1);
  s.target_noise = target.row_slice(i, i + 1);
  s.provenance = provenance[i];
  return s;
}

namespace {

void append_rows(std::vector<Real>& dst, const Tensor& src) {
  dst.insert(dst.end(), src.data().begin(), src.data().end());
}

Tensor gather(const Tensor& src, std::span<const std::size_t> rows) {
  const std::size_t n = src.cols();
  Tensor out({rows.size(), n});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < n; ++c) out.at(r, c) = src.at(rows[r], c);
  }
  return out;
}

}  // namespace

PseudoDataset build_pseudo_dataset(const NoisePredictor& model, const DualBranchSolver& solver, const Tensor& latents,
                                   std::span<const Condition> conds, const std::vector<int>& timeline, Real k,
                                   Real lambda1, Real lambda2) {
  const NoiseSchedule& schedule = model.schedule();
  const std::size_t b = latents.rows(), n = latents.cols();
  const int steps = static_cast<int>(timeline.size()) - 1;
  PseudoDataset out;
  out.config_steps = steps;
  std::vector<Real> zt, et, z0, es, eb, tg;
  const std::size_t total = b * static_cast<std::size_t>(steps);
  for (auto* v : {&zt, &et, &z0, &es, &eb, &tg}) v->reserve(total * n);

  Tensor z = latents;
  for (int j = 0; j < steps; ++j) {
    const int t[] = {timeline[j]};
    const int t_next[] = {timeline[j + 1]};
    Tensor eps_tilde = model.predict(z, t, conds);
    Tensor eps_star = solver.forward(eps_tilde, z, t, conds, latents);
    Tensor z_next = ddim_transport(z, eps_star, schedule.alpha_bar(t[0]), schedule.alpha_bar(t_next[0]));
    Tensor eps_bar = model.predict(z_next, t_next, conds);
    Tensor target = fuse_pseudo_noise(eps_bar, eps_star, j, steps, k, lambda1, lambda2);
    const Provenance prov = in_fusion_window(j, steps, k) ? Provenance::kFused : Provenance::kPlain;

    append_rows(zt, z);
    append_rows(et, eps_tilde);
    append_rows(z0, latents);
    append_rows(es, eps_star);
    append_rows(eb, eps_bar);
    append_rows(tg, target);
    for (std::size_t r = 0; r < b; ++r) {
      out.t.push_back(t[0]);
      out.step.push_back(j);
      out.cond.push_back(conds.size() == 1 ? conds[0] : conds[r]);
      out.provenance.push_back(prov);
    }
    z = std::move(z_next);
  }
  out.z_t = Tensor({total, n}, std::move(zt));
  out.eps_tilde = Tensor({total, n}, std::move(et));
  out.z0 = Tensor({total, n}, std::move(z0));
  out.eps_star = Tensor({total, n}, std::move(es));
  out.eps_bar = Tensor({total, n}, std::move(eb));
  out.target = Tensor({total, n}, std::move(tg));
  return out;
}

// ---------------------------------------------------------------------------
// Log

void TrainingLog::write_csv(std::ostream& out) const {
  out << kHeader << '\n';
  char buf[64];
  for (const auto& r : rows) {
    out << r.iteration << ',' << r.config << ',' << r.round << ',' << r.epoch << ',' << to_string(r.loss_kind) << ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.loss);
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.learning_rate);
    out << buf << ',' << r.blocks << '\n';
  }
}

TrainingLog TrainingLog::read_csv(std::istream& in) {
  TrainingLog log;
  std::string line;
  if (!std::getline(in, line) || line != kHeader) throw ContractError("training log: unexpected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 8) throw ContractError("training log: malformed row '" + line + "'");
    TrainingLogRow r;
    r.iteration = std::stoi(f[0]);
    r.config = std::stoi(f[1]);
    r.round = std::stoi(f[2]);
    r.epoch = std::stoi(f[3]);
    r.loss_kind = parse_loss_kind(f[4]);
    r.loss = std::stod(f[5]);
    r.learning_rate = std::stod(f[6]);
    r.blocks = std::stoull(f[7]);
    log.rows.push_back(r);
  }
  return log;
}

// ---------------------------------------------------------------------------
// Training

namespace {

std::vector<std::size_t> sample_items(std::size_t n, std::size_t want, RandomSource& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (want == 0 || want >= n) return idx;
  for (std::size_t i = 0; i < want; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(want);
  return idx;
}

Real train_epoch(DualBranchSolver& solver, Adam& adam, const PseudoDataset& data, LossKind kind, Real alpha,
                 std::size_t batch_size, RandomSource& rng) {
  const std::size_t m = data.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = m; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  Real loss_sum = 0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < m; start += batch_size) {
    const std::span<const std::size_t> rows(order.data() + start, std::min(batch_size, m - start));
    std::vector<int> t(rows.size());
    std::vector<Condition> cond(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      t[r] = data.t[rows[r]];
      cond[r] = data.cond[rows[r]];
    }
    Tape tape;
    Var eps_star = solver.forward(tape, tape.constant(gather(data.eps_tilde, rows)),
                                  tape.constant(gather(data.z_t, rows)), t, cond,
                                  tape.constant(gather(data.z0, rows)));
    Var loss;
    switch (kind) {
      case LossKind::kSelf: loss = loss_self(eps_star, gather(data.eps_bar, rows)); break;
      case LossKind::kHyb: loss = loss_hyb(eps_star, gather(data.target, rows)); break;
      case LossKind::kStable:
        loss = loss_stable(loss_self(eps_star, gather(data.eps_bar, rows)),
                           loss_hyb(eps_star, gather(data.target, rows)), alpha);
        break;
    }
    adam.step(tape.backward(loss));
    loss_sum += loss.value().item();
    ++batches;
  }
  return batches ? loss_sum / static_cast<Real>(batches) : 0.0;
}

}  // namespace

TrainingLog train_solver(const NoisePredictor& model, DualBranchSolver& solver, const Tensor& latents,
                         std::span<const Condition> conds, const StageSchedule& schedule, RandomSource& rng,
                         const TrainHooks& hooks) {
  schedule.validate();
  if (latents.rank() != 2 || latents.rows() == 0) throw ContractError("train_solver: empty dataset");
  if (conds.size() != latents.rows()) throw DimensionError("train_solver: one condition per latent required");
  if (solver.config().schedule_steps != model.schedule().steps()) {
    throw ContractError("train_solver: solver and backbone schedules differ");
  }
  for (int tc : schedule.timestep_configs) {
    if (tc > model.schedule().steps()) throw ContractError("train_solver: timestep config exceeds the schedule");
  }

  TrainingLog log;
  for (int it = 1; it <= schedule.outer_iterations; ++it) {
    const Real k = schedule.k_per_iteration[static_cast<std::size_t>(it - 1)];
    if (it == schedule.extend_at_iteration) {
      solver.extend_layers(schedule.extension_blocks, rng);
      solver.set_trainable(TrainableSelector::kNewOnly);
    } else {
      solver.set_trainable(TrainableSelector::kAll);
    }
    const Real lr = schedule.learning_rate_for(it);
    Adam adam(solver.parameters().all(), AdamHyper{lr});

    for (std::size_t c = 0; c < schedule.timestep_configs.size(); ++c) {
      const int config = schedule.timestep_configs[c];
      const std::vector<int> timeline = make_timeline(model.schedule(), config);
      const int epochs = schedule.scaled_epochs(c);
      for (int round = 1; round <= 2; ++round) {
        const LossKind kind = schedule.round_losses[static_cast<std::size_t>(it - 1)][round - 1];
        PseudoDataset pseudo;
        for (int epoch = 1; epoch <= epochs; ++epoch) {
          if (schedule.refresh_each_epoch || epoch == 1) {
            const auto items = sample_items(latents.rows(), schedule.items_per_epoch, rng);
            const Tensor subset = gather(latents, items);
            std::vector<Condition> subset_conds;
            for (auto i : items) {
              subset_conds.push_back(schedule.use_class_condition ? conds[i] : Condition::null());
            }
            pseudo = build_pseudo_dataset(model, solver, subset, subset_conds, timeline, k, schedule.lambda1,
                                          schedule.lambda2);
          }
          TrainingLogRow row;
          row.iteration = it;
          row.config = config;
          row.round = round;
          row.epoch = epoch;
          row.loss_kind = kind;
          row.loss = train_epoch(solver, adam, pseudo, kind, schedule.alpha, schedule.batch_size, rng);
          row.learning_rate = lr;
          row.blocks = solver.total_blocks();
          log.rows.push_back(row);
          if (hooks.on_row) hooks.on_row(row);
        }
      }
    }
    if (hooks.on_iteration_end) hooks.on_iteration_end(it, solver);
  }
  solver.set_trainable(TrainableSelector::kAll);
  return log;
}

Real evaluate_self_loss(const NoisePredictor& model, const DualBranchSolver& solver, const Tensor& latents,
                        const Condition& cond) {
  const std::vector<int> timeline = full_timeline(model.schedule());
  const PseudoDataset pseudo = build_pseudo_dataset(model, solver, latents, std::span(&cond, 1), timeline, 1.0, 1.0, 0.0);
  Real acc = 0;
  for (std::size_t i = 0; i < pseudo.eps_bar.numel(); ++i) {
    const Real d = pseudo.eps_star[i] - pseudo.eps_bar[i];
    acc += d * d;
  }
  return acc / static_cast<Real>(pseudo.eps_bar.numel());
}

}  // namespace deepinv

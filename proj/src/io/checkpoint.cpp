#include "deepinv/io/checkpoint.hpp"

#include <cstdio>

#include "deepinv/core/errors.hpp"

namespace deepinv {

namespace {

std::string real_text(Real v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t meta_size(const Archive& a, const std::string& key) { return std::stoull(a.meta_value(key)); }

void put_schedule(Archive& a, const NoiseSchedule& s) {
  a.set_meta("schedule.kind", to_string(s.kind()));
  a.add_tensor("schedule.alpha_bar", Tensor({s.alpha_bars().size()}, {s.alpha_bars().begin(), s.alpha_bars().end()}));
}

NoiseSchedule get_schedule(const Archive& a) {
  const Tensor& ab = a.tensor("schedule.alpha_bar");
  return NoiseSchedule(parse_schedule_kind(a.meta_value("schedule.kind")), ab.storage());
}

void put_parameters(Archive& a, const ParameterSet& params) {
  for (const Parameter* p : params.all()) {
    a.add_tensor(p->name, p->value);
    if (!p->trainable) a.set_meta("frozen." + p->name, "1");
  }
}

/// Overwrites every parameter of `params` from the archive; shapes and the
/// name set must agree exactly.
void get_parameters(const Archive& a, ParameterSet& params, std::size_t non_parameter_tensors) {
  std::size_t matched = 0;
  for (Parameter* p : params.all()) {
    const Tensor& stored = a.tensor(p->name);
    if (stored.shape() != p->value.shape()) {
      throw IntegrityError("parameter " + p->name + ": stored shape " + shape_string(stored.shape()) +
                           " does not match " + shape_string(p->value.shape()));
    }
    p->value = stored;
    p->trainable = !a.has_meta("frozen." + p->name);
    ++matched;
  }
  if (matched + non_parameter_tensors != a.tensors.size()) {
    throw IntegrityError("checkpoint holds tensors the model does not know");
  }
}

}  // namespace

void save_base(const BaseDenoiser& model, const std::filesystem::path& path) {
  Archive a;
  a.kind = "base";
  const DenoiserConfig& c = model.config();
  a.set_meta("base.latent_dim", std::to_string(c.latent_dim));
  a.set_meta("base.hidden", std::to_string(c.hidden));
  a.set_meta("base.time_width", std::to_string(c.time_width));
  a.set_meta("base.cond_width", std::to_string(c.cond_width));
  a.set_meta("base.n_classes", std::to_string(c.n_classes));
  put_schedule(a, model.schedule());
  put_parameters(a, model.parameters());
  write_archive(path, a);
}

BaseDenoiser load_base(const std::filesystem::path& path) {
  const Archive a = read_archive(path, "base");
  DenoiserConfig c;
  c.latent_dim = meta_size(a, "base.latent_dim");
  c.hidden = meta_size(a, "base.hidden");
  c.time_width = meta_size(a, "base.time_width");
  c.cond_width = meta_size(a, "base.cond_width");
  c.n_classes = meta_size(a, "base.n_classes");
  RandomSource scratch(0);
  BaseDenoiser model(c, get_schedule(a), scratch);
  get_parameters(a, model.parameters(), 1);
  return model;
}

void save_analytic(const AnalyticDenoiser& model, const std::filesystem::path& path) {
  Archive a;
  a.kind = "analytic";
  a.set_meta("analytic.sigma0", real_text(model.sigma0()));
  put_schedule(a, model.schedule());
  a.add_tensor("analytic.mean", model.mean());
  write_archive(path, a);
}

AnalyticDenoiser load_analytic(const std::filesystem::path& path) {
  const Archive a = read_archive(path, "analytic");
  return AnalyticDenoiser(a.tensor("analytic.mean"), std::stod(a.meta_value("analytic.sigma0")), get_schedule(a));
}

std::unique_ptr<NoisePredictor> load_backbone(const std::filesystem::path& path) {
  const Archive a = read_archive(path);
  if (a.kind == "base") return std::make_unique<BaseDenoiser>(load_base(path));
  if (a.kind == "analytic") return std::make_unique<AnalyticDenoiser>(load_analytic(path));
  throw IntegrityError(path.string() + " is a '" + a.kind + "' file, not a backbone");
}

void save_solver(const DualBranchSolver& solver, const std::filesystem::path& path, std::size_t log_rows) {
  Archive a;
  a.kind = "solver";
  const SolverConfig& c = solver.config();
  a.set_meta("solver.left_blocks", std::to_string(c.left_blocks));
  a.set_meta("solver.right_blocks", std::to_string(c.right_blocks));
  a.set_meta("solver.hidden_width", std::to_string(c.hidden_width));
  a.set_meta("solver.cond_width", std::to_string(c.cond_width));
  a.set_meta("solver.latent_dim", std::to_string(c.latent_dim));
  a.set_meta("solver.time_width", std::to_string(c.time_width));
  a.set_meta("solver.n_classes", std::to_string(c.n_classes));
  a.set_meta("solver.schedule_steps", std::to_string(c.schedule_steps));
  std::string history;
  for (std::size_t n : solver.extension_history()) history += (history.empty() ? "" : ",") + std::to_string(n);
  a.set_meta("solver.extensions", history);
  a.set_meta("solver.log_rows", std::to_string(log_rows));
  put_parameters(a, solver.parameters());
  write_archive(path, a);
}

DualBranchSolver load_solver(const std::filesystem::path& path, std::size_t* log_rows) {
  const Archive a = read_archive(path, "solver");
  SolverConfig c;
  c.left_blocks = meta_size(a, "solver.left_blocks");
  c.right_blocks = meta_size(a, "solver.right_blocks");
  c.hidden_width = meta_size(a, "solver.hidden_width");
  c.cond_width = meta_size(a, "solver.cond_width");
  c.latent_dim = meta_size(a, "solver.latent_dim");
  c.time_width = meta_size(a, "solver.time_width");
  c.n_classes = meta_size(a, "solver.n_classes");
  c.schedule_steps = std::stoi(a.meta_value("solver.schedule_steps"));
  RandomSource scratch(0);
  DualBranchSolver solver(c, scratch);
  const std::string& history = a.meta_value("solver.extensions");
  std::size_t pos = 0;
  while (pos < history.size()) {
    const std::size_t comma = std::min(history.find(',', pos), history.size());
    solver.extend_layers(std::stoull(history.substr(pos, comma - pos)), scratch);
    pos = comma + 1;
  }
  get_parameters(a, solver.parameters(), 0);
  if (log_rows != nullptr) *log_rows = meta_size(a, "solver.log_rows");
  return solver;
}

void save_trajectory(const InversionTrajectory& trajectory, const std::filesystem::path& path) {
  Archive a;
  a.kind = "trajectory";
  a.set_meta("trajectory.method", trajectory.method_tag);
  a.set_meta("trajectory.length", std::to_string(trajectory.latents.size()));
  for (std::size_t k = 0; k < trajectory.latents.size(); ++k) {
    a.set_meta("trajectory.t." + std::to_string(k), std::to_string(trajectory.latents[k].t));
    a.add_tensor("z." + std::to_string(k), trajectory.latents[k].z);
  }
  for (std::size_t k = 0; k < trajectory.noises.size(); ++k) a.add_tensor("eps." + std::to_string(k), trajectory.noises[k]);
  write_archive(path, a);
}

InversionTrajectory load_trajectory(const std::filesystem::path& path, const NoiseSchedule& schedule) {
  const Archive a = read_archive(path, "trajectory");
  InversionTrajectory traj;
  traj.method_tag = a.meta_value("trajectory.method");
  const std::size_t n = meta_size(a, "trajectory.length");
  if (n < 1) throw IntegrityError("empty trajectory");
  for (std::size_t k = 0; k < n; ++k) {
    traj.latents.push_back({a.tensor("z." + std::to_string(k)), std::stoi(a.meta_value("trajectory.t." + std::to_string(k)))});
  }
  for (std::size_t k = 0; k + 1 < n; ++k) traj.noises.push_back(a.tensor("eps." + std::to_string(k)));
  try {
    traj.verify(schedule);
  } catch (const std::exception& e) {
    throw IntegrityError(path.string() + ": trajectory does not replay: " + e.what());
  }
  return traj;
}

void save_latent(const LatentState& latent, const std::filesystem::path& path) {
  Archive a;
  a.kind = "latent";
  a.set_meta("latent.t", std::to_string(latent.t));
  a.add_tensor("z", latent.z);
  write_archive(path, a);
}

LatentState load_latent(const std::filesystem::path& path) {
  const Archive a = read_archive(path, "latent");
  return {a.tensor("z"), std::stoi(a.meta_value("latent.t"))};
}

}  // namespace deepinv

#include "deepinv/eval/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>

#include "deepinv/core/errors.hpp"
#include "deepinv/eval/metrics.hpp"

namespace deepinv {

namespace {

std::string fmt(Real v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Real parse_real(const std::string& s) {
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  return std::stod(s);
}

Tensor image_row(const Tensor& batch, std::size_t row, std::size_t side) {
  Tensor img({side, side});
  for (std::size_t i = 0; i < side * side; ++i) img[i] = batch.at(row, i);
  return img;
}

}  // namespace

const EvalRow* EvalReport::find(const std::string& method) const {
  for (const auto& r : rows) {
    if (r.method == method) return &r;
  }
  return nullptr;
}

void EvalReport::write_csv(std::ostream& out) const {
  out << kHeader << '\n';
  for (const auto& r : rows) {
    out << r.method << ',' << fmt(r.mse) << ',' << fmt(r.psnr_db) << ',' << fmt(r.ssim) << ','
        << fmt(r.consistency_residual) << ',' << fmt(r.wall_time_s) << ',' << r.n_items << ',' << r.seed << '\n';
  }
}

EvalReport EvalReport::read_csv(std::istream& in) {
  EvalReport rep;
  std::string line;
  if (!std::getline(in, line) || line != kHeader) throw ContractError("eval report: unexpected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> f;
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 8) throw ContractError("eval report: malformed row '" + line + "'");
    EvalRow r{f[0], parse_real(f[1]), parse_real(f[2]), parse_real(f[3]), parse_real(f[4]), parse_real(f[5]),
              std::stoull(f[6]), std::stoull(f[7])};
    rep.seed = r.seed;
    rep.rows.push_back(std::move(r));
  }
  return rep;
}

std::string EvalReport::table() const {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "# dataset=%s seed=%llu psnr_max_range=%g ssim_L=%g\n", dataset.c_str(),
                static_cast<unsigned long long>(seed), max_range, max_range);
  out << buf;
  std::snprintf(buf, sizeof buf, "%-12s %14s %10s %10s %14s %10s %7s\n", "method", "mse", "psnr_db", "ssim",
                "consistency", "time_s", "items");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-12s %14.6e %10.4f %10.6f %14.6e %10.4f %7zu\n", r.method.c_str(), r.mse,
                  r.psnr_db, r.ssim, r.consistency_residual, r.wall_time_s, r.n_items);
    out << buf;
  }
  return out.str();
}

EvalRow evaluate_method(Method method, const EvalContext& ctx, const Tensor& test_latents, Tensor* reconstruction) {
  if (ctx.model == nullptr) throw ContractError("evaluate_method: no backbone");
  if (method == Method::kDeepInv && ctx.solver == nullptr) throw ContractError("evaluate_method: deepinv needs a solver");
  const NoisePredictor& model = *ctx.model;
  const std::vector<int> timeline = full_timeline(model.schedule());

  const auto start = std::chrono::steady_clock::now();
  InversionTrajectory traj;
  switch (method) {
    case Method::kDdim: traj = ddim_invert(model, test_latents, ctx.cond, timeline); break;
    case Method::kFixedPoint: traj = fixed_point_invert(model, test_latents, ctx.cond, ctx.fixed_point, timeline); break;
    case Method::kDeepInv: traj = deepinv_invert(*ctx.solver, model, test_latents, ctx.cond, timeline); break;
  }
  const LatentState recon = reconstruct(model, traj.terminal(), ctx.cond, timeline);
  const auto stop = std::chrono::steady_clock::now();

  EvalRow row;
  row.method = to_string(method);
  row.n_items = test_latents.rows();
  row.seed = ctx.seed;
  row.mse = mse(recon.z, test_latents);
  row.psnr_db = psnr_from_mse(row.mse, ctx.max_range);
  if (ctx.image_side) {
    const std::size_t side = *ctx.image_side;
    if (side * side != test_latents.cols()) throw DimensionError("evaluate_method: image side does not match latents");
    Real acc = 0;
    for (std::size_t i = 0; i < test_latents.rows(); ++i) {
      acc += ssim(image_row(recon.z, i, side), image_row(test_latents, i, side), ctx.max_range);
    }
    row.ssim = acc / static_cast<Real>(test_latents.rows());
  } else {
    row.ssim = ssim(recon.z, test_latents, ctx.max_range);
  }
  row.consistency_residual = mean_consistency_residual(model, traj, ctx.cond);
  if (reconstruction != nullptr) *reconstruction = recon.z;
  row.wall_time_s = ctx.record_wall_time ? std::chrono::duration<Real>(stop - start).count() : 0.0;
  return row;
}

EvalReport compare_methods(std::span<const Method> methods, const EvalContext& ctx, const Tensor& test_latents,
                           std::string dataset_name, unsigned threads, std::vector<Tensor>* reconstructions) {
  EvalReport rep;
  rep.dataset = std::move(dataset_name);
  rep.seed = ctx.seed;
  rep.max_range = ctx.max_range;
  rep.rows.resize(methods.size());
  std::vector<Tensor> recon(methods.size());
  if (threads <= 1 || methods.size() <= 1) {
    for (std::size_t i = 0; i < methods.size(); ++i) {
      rep.rows[i] = evaluate_method(methods[i], ctx, test_latents, &recon[i]);
    }
    if (reconstructions != nullptr) *reconstructions = std::move(recon);
    return rep;
  }
  std::vector<std::exception_ptr> errors(methods.size());
  for (std::size_t begin = 0; begin < methods.size(); begin += threads) {
    std::vector<std::jthread> pool;
    for (std::size_t i = begin; i < std::min<std::size_t>(methods.size(), begin + threads); ++i) {
      pool.emplace_back([&, i] {
        try {
          rep.rows[i] = evaluate_method(methods[i], ctx, test_latents, &recon[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  if (reconstructions != nullptr) *reconstructions = std::move(recon);
  return rep;
}

}  // namespace deepinv

#include "commands.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include "deepinv/core/errors.hpp"
#include "deepinv/eval/harness.hpp"
#include "deepinv/eval/metrics.hpp"
#include "deepinv/io/checkpoint.hpp"
#include "deepinv/io/render.hpp"

namespace deepinv::cli {

namespace fs = std::filesystem;

namespace {

void require(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) throw MissingArtifact("missing " + path.string() + " (run '" + producer + "' first)");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

/// Writes the resolved config and, on scope exit, appends a timing line to the sidecar.
class RunScope {
 public:
  RunScope(const RunConfig& config, std::string command)
      : paths_{config.out_dir}, command_(std::move(command)), started_(utc_now()),
        start_(std::chrono::steady_clock::now()) {
    fs::create_directories(paths_.root);
    write_text(paths_.config(), render_config(config));
  }
  ~RunScope() {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::ofstream out(paths_.run_info(), std::ios::app);
    if (out) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.3f", secs);
      out << "command=" << command_ << " started=" << started_ << " finished=" << utc_now() << " elapsed_s=" << buf
          << '\n';
    }
  }
  const RunPaths& paths() const { return paths_; }

 private:
  RunPaths paths_;
  std::string command_;
  std::string started_;
  std::chrono::steady_clock::time_point start_;
};

std::vector<Condition> train_conditions(const Dataset& data, bool use_labels) {
  if (use_labels) return data.conditions;
  return std::vector<Condition>(data.size(), Condition::null());
}

Dataset load_split(const RunConfig& config, const RunPaths& paths) {
  const fs::path p = config.eval.split == "train" ? paths.train_data() : paths.test_data();
  require(p, "gen-data");
  return load_dataset(p);
}

std::optional<std::size_t> image_side(const RunConfig& config) {
  if (config.data.kind == DatasetKind::kShapes8x8) return config.data.image_side;
  return std::nullopt;
}

RandomSource stream(const RunConfig& config, std::uint64_t salt) { return RandomSource(config.seed * 1000003ULL + salt); }

/// Condition used for inversion of item i.
Condition inversion_condition(const RunConfig& config, const Dataset& data, std::size_t i) {
  return config.inversion.use_class_condition ? data.conditions.at(i) : Condition::null();
}

void render_pair(const RunConfig& config, const fs::path& stem, const Tensor& original, const Tensor& recon) {
  if (auto side = image_side(config)) {
    write_ppm_grid(stem.string() + ".ppm", stack_rows(std::vector<Tensor>{original, recon}), *side, 2);
  } else if (original.cols() == 2) {
    write_svg_scatter(stem.string() + ".svg", "original vs reconstruction",
                      {{"original", "#4c72b0", original}, {"reconstruction", "#c44e52", recon}});
  }
}

}  // namespace

RunConfig resolve_config(const CommandOptions& options) {
  RunConfig config = options.config ? load_config(*options.config) : RunConfig{};
  if (options.seed) config.seed = *options.seed;
  if (options.out) config.out_dir = *options.out;
  if (options.scale_epochs) config.trainer.epoch_scale = *options.scale_epochs;
  if (options.full_paper_budgets) config.trainer.epoch_scale = 1.0;
  if (const char* env = std::getenv("DEEPINV_THREADS")) {
    char* end = nullptr;
    const unsigned long cap = std::strtoul(env, &end, 10);
    if (end == env || *end != '\0' || cap < 1) throw ConfigError("DEEPINV_THREADS must be a positive integer");
    config.threads = std::min<unsigned>(config.threads, static_cast<unsigned>(cap));
  }
  config.validate();
  return config;
}

int cmd_gen_data(const RunConfig& config) {
  RunScope scope(config, "gen-data");
  const DatasetSplit split = generate(config.dataset_spec());
  save_dataset(split.train, scope.paths().train_data());
  save_dataset(split.test, scope.paths().test_data());
  std::cout << "wrote " << split.train.size() << " train and " << split.test.size() << " test items ("
            << to_string(config.data.kind) << ") to " << (scope.paths().root / "data").string() << '\n';
  return kOk;
}

int cmd_train_base(const RunConfig& config) {
  RunScope scope(config, "train-base");
  const RunPaths& paths = scope.paths();
  require(paths.train_data(), "gen-data");
  const Dataset train = load_dataset(paths.train_data());
  fs::create_directories(paths.base().parent_path());
  if (config.diffusion.backbone == BackboneKind::kAnalytic) {
    const AnalyticDenoiser model(Tensor::vector({config.data.gaussian_mean_x, config.data.gaussian_mean_y}),
                                 config.data.gaussian_sigma, config.make_noise_schedule());
    save_analytic(model, paths.base());
    write_text(paths.base_loss(), "epoch,loss\n");
    std::cout << "analytic backbone, irreducible loss " << model.irreducible_loss() << '\n';
    return kOk;
  }
  BaseTrainOptions opts;
  opts.epochs = config.diffusion.epochs;
  opts.batch_size = config.diffusion.batch_size;
  opts.learning_rate = config.diffusion.learning_rate;
  opts.class_conditional = config.diffusion.class_conditional;
  RandomSource rng = stream(config, 1);
  const auto conds = train_conditions(train, config.diffusion.class_conditional);
  BaseTrainResult result = train_base(train.latents, conds, config.make_noise_schedule(), config.denoiser_config(), opts, rng);
  save_base(result.model, paths.base());
  std::ostringstream csv;
  csv << "epoch,loss\n";
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", result.epoch_loss[e]);
    csv << e + 1 << ',' << buf << '\n';
  }
  write_text(paths.base_loss(), csv.str());
  if (!result.epoch_loss.empty()) {
    std::cout << "base denoiser trained for " << result.epoch_loss.size() << " epochs, final loss "
              << result.epoch_loss.back() << '\n';
  }
  return kOk;
}

int cmd_train_solver(const RunConfig& config) {
  RunScope scope(config, "train-solver");
  const RunPaths& paths = scope.paths();
  require(paths.train_data(), "gen-data");
  require(paths.base(), "train-base");
  const Dataset train = load_dataset(paths.train_data());
  const auto model = load_backbone(paths.base());
  RandomSource rng = stream(config, 2);
  DualBranchSolver solver(config.resolved_solver(), rng);
  const auto conds = train_conditions(train, config.trainer.use_class_condition);
  std::size_t rows = 0;
  TrainHooks hooks;
  hooks.on_row = [&](const TrainingLogRow&) { ++rows; };
  hooks.on_iteration_end = [&](int iteration, const DualBranchSolver& s) {
    save_solver(s, paths.root / "models" / ("solver_iter" + std::to_string(iteration) + ".bin"), rows);
    std::cout << "outer iteration " << iteration << " done, " << s.total_blocks() << " blocks" << std::endl;
  };
  const TrainingLog log = train_solver(*model, solver, train.latents, conds, config.trainer, rng, hooks);
  save_solver(solver, paths.solver(), log.rows.size());
  std::ostringstream csv;
  log.write_csv(csv);
  write_text(paths.training_log(), csv.str());
  std::cout << "solver trained: " << log.rows.size() << " log rows, " << solver.total_blocks() << " blocks\n";
  return kOk;
}

int cmd_invert(const RunConfig& config, Method method, std::size_t index, const std::optional<fs::path>& input) {
  RunScope scope(config, "invert");
  const RunPaths& paths = scope.paths();
  require(paths.base(), "train-base");
  const auto model = load_backbone(paths.base());
  Tensor z0;
  Condition cond = Condition::null();
  std::string stem;
  if (input) {
    require(*input, "a latent file");
    const LatentState state = load_latent(*input);
    if (state.t != 0) throw ContractError("invert input must be a latent at t = 0");
    z0 = state.z;
    stem = to_string(method) + "_" + input->stem().string();
  } else {
    const Dataset data = load_split(config, paths);
    if (index >= data.size()) {
      throw ConfigError("--index " + std::to_string(index) + " out of range (" + std::to_string(data.size()) + " items)");
    }
    z0 = data.latents.row_slice(index, index + 1);
    cond = inversion_condition(config, data, index);
    stem = to_string(method) + "_item" + std::to_string(index);
  }
  const auto timeline = full_timeline(model->schedule());
  InversionTrajectory traj;
  switch (method) {
    case Method::kDdim: traj = ddim_invert(*model, z0, cond, timeline); break;
    case Method::kFixedPoint: traj = fixed_point_invert(*model, z0, cond, config.inversion.fixed_point, timeline); break;
    case Method::kDeepInv: {
      require(paths.solver(), "train-solver");
      const DualBranchSolver solver = load_solver(paths.solver());
      traj = deepinv_invert(solver, *model, z0, cond, timeline);
      break;
    }
  }
  fs::create_directories(paths.invert_dir());
  save_trajectory(traj, paths.invert_dir() / (stem + ".traj.bin"));
  save_latent(traj.terminal(), paths.invert_dir() / (stem + ".zT.bin"));
  std::cout << "inverted with " << to_string(method) << " to t=" << traj.terminal().t << ": "
            << (paths.invert_dir() / (stem + ".traj.bin")).string() << '\n';
  return kOk;
}

int cmd_reconstruct(const RunConfig& config, const fs::path& input) {
  RunScope scope(config, "reconstruct");
  const RunPaths& paths = scope.paths();
  require(paths.base(), "train-base");
  require(input, "invert");
  const auto model = load_backbone(paths.base());
  const Archive probe = read_archive(input);
  std::optional<Tensor> original;
  LatentState terminal;
  if (probe.kind == "trajectory") {
    const InversionTrajectory traj = load_trajectory(input, model->schedule());
    original = traj.latents.front().z;
    terminal = traj.terminal();
  } else if (probe.kind == "latent") {
    terminal = load_latent(input);
  } else {
    throw IntegrityError(input.string() + " is a '" + probe.kind + "' file, expected a trajectory or latent");
  }
  if (terminal.t != model->schedule().steps()) throw ContractError("reconstruct input must be a latent at t = T");
  std::vector<int> timeline = full_timeline(model->schedule());
  const LatentState recon = reconstruct(*model, terminal, Condition::null(), timeline);
  std::string stem = input.filename().string();
  stem = stem.substr(0, stem.find('.'));
  fs::create_directories(paths.reconstruct_dir());
  save_latent(recon, paths.reconstruct_dir() / (stem + ".recon.bin"));
  if (original) {
    const Real err = mse(recon.z, *original);
    render_pair(config, paths.reconstruct_dir() / stem, *original, recon.z);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6e", err);
    std::cout << "reconstruction mse " << buf << '\n';
  }
  std::cout << "wrote " << (paths.reconstruct_dir() / (stem + ".recon.bin")).string() << '\n';
  return kOk;
}

int cmd_eval(const RunConfig& config) {
  RunScope scope(config, "eval");
  const RunPaths& paths = scope.paths();
  require(paths.base(), "train-base");
  const Dataset data = load_split(config, paths);
  const auto model = load_backbone(paths.base());
  std::optional<DualBranchSolver> solver;
  for (Method m : config.eval.methods) {
    if (m == Method::kDeepInv && !solver) {
      require(paths.solver(), "train-solver");
      solver.emplace(load_solver(paths.solver()));
    }
  }
  EvalContext ctx;
  ctx.model = model.get();
  ctx.solver = solver ? &*solver : nullptr;
  ctx.fixed_point = config.inversion.fixed_point;
  ctx.image_side = image_side(config);
  ctx.max_range = config.eval.max_range;
  ctx.seed = config.seed;
  ctx.record_wall_time = config.eval.record_wall_time;
  if (config.inversion.use_class_condition) {
    throw ConfigError("eval inverts the whole split with one condition; set [inversion] use_class_condition = false");
  }
  std::vector<Tensor> recons;
  const EvalReport report = compare_methods(config.eval.methods, ctx, data.latents,
                                            to_string(config.data.kind) + "/" + config.eval.split, config.threads, &recons);
  std::ostringstream csv;
  report.write_csv(csv);
  write_text(paths.report_csv(), csv.str());
  write_text(paths.eval_dir() / "report.txt", report.table());
  for (std::size_t i = 0; i < recons.size(); ++i) {
    save_latent({recons[i], 0}, paths.eval_dir() / ("recon_" + to_string(config.eval.methods[i]) + ".bin"));
  }
  std::cout << report.table();
  return kOk;
}

int cmd_report(const RunConfig& config) {
  RunScope scope(config, "report");
  const RunPaths& paths = scope.paths();
  require(paths.report_csv(), "eval");
  std::ifstream in(paths.report_csv());
  const EvalReport report = EvalReport::read_csv(in);
  const fs::path fig = paths.figures_dir();
  std::vector<std::pair<std::string, Real>> mse_bars, ssim_bars;
  for (const auto& r : report.rows) {
    mse_bars.emplace_back(r.method, r.mse);
    ssim_bars.emplace_back(r.method, r.ssim);
  }
  write_svg_bars(fig / "mse.svg", "reconstruction MSE by method", "mse (log)", mse_bars, true);
  write_svg_bars(fig / "ssim.svg", "SSIM by method", "ssim", ssim_bars, false);
  std::vector<std::string> written{"mse.svg", "ssim.svg"};

  if (fs::exists(paths.training_log())) {
    std::ifstream log_in(paths.training_log());
    const TrainingLog log = TrainingLog::read_csv(log_in);
    std::vector<LineSeries> series;
    const char* colors[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52"};
    for (const auto& row : log.rows) {
      if (series.size() < static_cast<std::size_t>(row.iteration)) {
        series.push_back({"iteration " + std::to_string(row.iteration), colors[(row.iteration - 1) % 4], {}});
      }
      series[row.iteration - 1].y.push_back(row.loss);
    }
    write_svg_lines(fig / "solver_loss.svg", "solver training loss per epoch", "loss (log)", series, true);
    written.push_back("solver_loss.svg");
  }
  if (fs::exists(paths.base_loss())) {
    std::ifstream base_in(paths.base_loss());
    std::string line;
    std::getline(base_in, line);
    LineSeries s{"base", "#4c72b0", {}};
    while (std::getline(base_in, line)) {
      const auto comma = line.find(',');
      if (comma != std::string::npos) s.y.push_back(std::stod(line.substr(comma + 1)));
    }
    if (!s.y.empty()) {
      write_svg_lines(fig / "base_loss.svg", "base denoiser loss per epoch", "loss", {s}, false);
      written.push_back("base_loss.svg");
    }
  }
  const Dataset data = load_split(config, paths);
  const std::size_t shown = std::min<std::size_t>(data.size(), image_side(config) ? 8 : data.size());
  if (auto side = image_side(config)) {
    std::vector<Tensor> rows{data.latents.row_slice(0, shown)};
    for (const auto& r : report.rows) {
      const fs::path p = paths.eval_dir() / ("recon_" + r.method + ".bin");
      if (fs::exists(p)) rows.push_back(load_latent(p).z.row_slice(0, shown));
    }
    write_ppm_grid(fig / "reconstructions.ppm", stack_rows(rows), *side, shown);
    written.push_back("reconstructions.ppm");
  } else if (data.latents.cols() == 2) {
    const char* colors[] = {"#dd8452", "#55a868", "#c44e52", "#8172b3"};
    std::vector<ScatterSeries> series{{"data", "#4c72b0", data.latents}};
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
      const fs::path p = paths.eval_dir() / ("recon_" + report.rows[i].method + ".bin");
      if (fs::exists(p)) series.push_back({report.rows[i].method, colors[i % 4], load_latent(p).z});
    }
    write_svg_scatter(fig / "reconstructions.svg", "test data and reconstructions", series);
    written.push_back("reconstructions.svg");
  }
  for (const auto& w : written) std::cout << "wrote " << (fig / w).string() << '\n';
  return kOk;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"deepinv: desk-scale diffusion inversion lab"};
  app.require_subcommand(1);
  CommandOptions opts;
  std::string config_path, out_path, input_path;
  std::uint64_t seed = 0;
  Real scale = 0;
  std::string method = "ddim";
  std::size_t index = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "INI run configuration");
    sub->add_option("--seed", seed, "override [run] seed");
    sub->add_option("--out", out_path, "override [run] out directory");
    sub->add_option("--scale-epochs", scale, "override [trainer] epoch_scale");
    sub->add_flag("--full-paper-budgets", opts.full_paper_budgets, "train with unscaled epoch budgets");
  };
  CLI::App* gen = app.add_subcommand("gen-data", "generate the train/test split");
  CLI::App* base = app.add_subcommand("train-base", "train (or build) the diffusion backbone");
  CLI::App* solver = app.add_subcommand("train-solver", "train the inversion solver");
  CLI::App* invert = app.add_subcommand("invert", "invert one item to t = T");
  CLI::App* recon = app.add_subcommand("reconstruct", "denoise a terminal latent back to t = 0");
  CLI::App* eval = app.add_subcommand("eval", "compare inversion methods on a split");
  CLI::App* report = app.add_subcommand("report", "render figures from the outputs");
  for (CLI::App* sub : {gen, base, solver, invert, recon, eval, report}) common(sub);
  invert->add_option("--method", method, "ddim | fixed_point | deepinv");
  invert->add_option("--index", index, "item of the evaluation split (default 0)");
  invert->add_option("--input", input_path, "latent file at t = 0 instead of --index");
  recon->add_option("--input", input_path, "trajectory or terminal-latent file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }
  try {
    for (CLI::App* sub : app.get_subcommands()) {
      if (sub->count("--config")) opts.config = config_path;
      if (sub->count("--seed")) opts.seed = seed;
      if (sub->count("--out")) opts.out = out_path;
      if (sub->count("--scale-epochs")) opts.scale_epochs = scale;
      if (sub->get_option_no_throw("--input") != nullptr && sub->count("--input")) opts.input = input_path;
    }
    const RunConfig config = resolve_config(opts);
    if (*gen) return cmd_gen_data(config);
    if (*base) return cmd_train_base(config);
    if (*solver) return cmd_train_solver(config);
    if (*invert) {
      Method m;
      try {
        m = parse_method(method);
      } catch (const std::exception& e) {
        throw ConfigError(e.what());
      }
      return cmd_invert(config, m, index, opts.input);
    }
    if (*recon) return cmd_reconstruct(config, *opts.input);
    if (*eval) return cmd_eval(config);
    if (*report) return cmd_report(config);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.what() << '\n';
    return kMissingArtifact;
  } catch (const IntegrityError& e) {
    std::cerr << "integrity failure: " << e.what() << '\n';
    return kIntegrityFailure;
  } catch (const VersionError& e) {
    std::cerr << "integrity failure: " << e.what() << '\n';
    return kIntegrityFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOther;
}

}  // namespace deepinv::cli

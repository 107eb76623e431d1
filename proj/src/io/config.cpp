#include "deepinv/io/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "deepinv/core/errors.hpp"

namespace deepinv {

namespace {

std::string real_text(Real v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  if (out.size() == 1 && out[0].empty()) out.clear();
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ConfigError("'" + key + "': cannot parse '" + text + "'");
  return value;
}

Real parse_real(const std::string& key, const std::string& text) { return parse_number<Real>(key, text); }
int parse_int(const std::string& key, const std::string& text) { return parse_number<int>(key, text); }
std::size_t parse_size(const std::string& key, const std::string& text) {
  return parse_number<std::size_t>(key, text);
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw ConfigError("'" + key + "': expected true or false, got '" + text + "'");
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

template <typename T, typename F>
std::string join(const std::vector<T>& v, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += fmt(v[i]);
  }
  return out;
}

template <typename T, typename F>
std::vector<T> parse_list(const std::string& key, const std::string& text, F&& parse) {
  std::vector<T> out;
  for (const auto& item : split_list(text)) out.push_back(parse(key, item));
  return out;
}

/// Rethrows library parse errors as ConfigError with the key attached.
template <typename F>
auto guarded(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("'" + key + "': " + e.what());
  }
}

struct Entry {
  const char* section;
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define DI_REAL(sec, name, field)                                                  \
  Entry {                                                                          \
    sec, name, [](const RunConfig& c) { return real_text(c.field); },              \
        [](RunConfig& c, const std::string& v) { c.field = parse_real(name, v); } \
  }
#define DI_INT(sec, name, field)                                                  \
  Entry {                                                                         \
    sec, name, [](const RunConfig& c) { return std::to_string(c.field); },        \
        [](RunConfig& c, const std::string& v) { c.field = parse_int(name, v); } \
  }
#define DI_SIZE(sec, name, field)                                                  \
  Entry {                                                                          \
    sec, name, [](const RunConfig& c) { return std::to_string(c.field); },         \
        [](RunConfig& c, const std::string& v) { c.field = parse_size(name, v); } \
  }
#define DI_BOOL(sec, name, field)                                                  \
  Entry {                                                                          \
    sec, name, [](const RunConfig& c) { return bool_text(c.field); },              \
        [](RunConfig& c, const std::string& v) { c.field = parse_bool(name, v); } \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      Entry{"run", "seed", [](const RunConfig& c) { return std::to_string(c.seed); },
            [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); }},
      Entry{"run", "out", [](const RunConfig& c) { return c.out_dir.string(); },
            [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
      Entry{"run", "threads", [](const RunConfig& c) { return std::to_string(c.threads); },
            [](RunConfig& c, const std::string& v) { c.threads = parse_number<unsigned>("threads", v); }},

      Entry{"data", "kind", [](const RunConfig& c) { return to_string(c.data.kind); },
            [](RunConfig& c, const std::string& v) { c.data.kind = guarded("kind", [&] { return parse_dataset_kind(v); }); }},
      DI_SIZE("data", "n_train", data.n_train),
      DI_SIZE("data", "n_test", data.n_test),
      DI_SIZE("data", "n_classes", data.n_classes),
      DI_SIZE("data", "image_side", data.image_side),
      DI_REAL("data", "null_fraction", data.null_fraction),
      DI_REAL("data", "gaussian_mean_x", data.gaussian_mean_x),
      DI_REAL("data", "gaussian_mean_y", data.gaussian_mean_y),
      DI_REAL("data", "gaussian_sigma", data.gaussian_sigma),

      DI_INT("diffusion", "steps", diffusion.steps),
      Entry{"diffusion", "schedule", [](const RunConfig& c) { return to_string(c.diffusion.schedule); },
            [](RunConfig& c, const std::string& v) {
              c.diffusion.schedule = guarded("schedule", [&] { return parse_schedule_kind(v); });
            }},
      Entry{"diffusion", "backbone",
            [](const RunConfig& c) {
              return std::string(c.diffusion.backbone == BackboneKind::kAnalytic ? "analytic" : "trained");
            },
            [](RunConfig& c, const std::string& v) {
              if (v == "trained") {
                c.diffusion.backbone = BackboneKind::kTrained;
              } else if (v == "analytic") {
                c.diffusion.backbone = BackboneKind::kAnalytic;
              } else {
                throw ConfigError("'backbone': expected trained or analytic, got '" + v + "'");
              }
            }},
      Entry{"diffusion", "hidden",
            [](const RunConfig& c) { return c.diffusion.hidden == 0 ? std::string("auto") : std::to_string(c.diffusion.hidden); },
            [](RunConfig& c, const std::string& v) { c.diffusion.hidden = v == "auto" ? 0 : parse_size("hidden", v); }},
      DI_SIZE("diffusion", "time_width", diffusion.time_width),
      DI_SIZE("diffusion", "cond_width", diffusion.cond_width),
      DI_INT("diffusion", "epochs", diffusion.epochs),
      DI_SIZE("diffusion", "batch_size", diffusion.batch_size),
      DI_REAL("diffusion", "lr", diffusion.learning_rate),
      DI_BOOL("diffusion", "class_conditional", diffusion.class_conditional),

      DI_SIZE("solver", "left_blocks", solver.left_blocks),
      DI_SIZE("solver", "right_blocks", solver.right_blocks),
      DI_SIZE("solver", "hidden_width", solver.hidden_width),
      DI_SIZE("solver", "cond_width", solver.cond_width),
      DI_SIZE("solver", "time_width", solver.time_width),

      DI_INT("trainer", "outer_iterations", trainer.outer_iterations),
      Entry{"trainer", "k_per_iteration",
            [](const RunConfig& c) { return join(c.trainer.k_per_iteration, real_text); },
            [](RunConfig& c, const std::string& v) { c.trainer.k_per_iteration = parse_list<Real>("k_per_iteration", v, parse_real); }},
      Entry{"trainer", "timestep_configs",
            [](const RunConfig& c) { return join(c.trainer.timestep_configs, [](int i) { return std::to_string(i); }); },
            [](RunConfig& c, const std::string& v) { c.trainer.timestep_configs = parse_list<int>("timestep_configs", v, parse_int); }},
      Entry{"trainer", "epochs_per_config",
            [](const RunConfig& c) { return join(c.trainer.epochs_per_config, [](int i) { return std::to_string(i); }); },
            [](RunConfig& c, const std::string& v) { c.trainer.epochs_per_config = parse_list<int>("epochs_per_config", v, parse_int); }},
      DI_REAL("trainer", "epoch_scale", trainer.epoch_scale),
      DI_REAL("trainer", "alpha", trainer.alpha),
      DI_REAL("trainer", "lambda1", trainer.lambda1),
      DI_REAL("trainer", "lambda2", trainer.lambda2),
      DI_REAL("trainer", "lr", trainer.learning_rate),
      DI_REAL("trainer", "lr_finetune_factor", trainer.lr_finetune_factor),
      DI_INT("trainer", "extend_at_iteration", trainer.extend_at_iteration),
      DI_SIZE("trainer", "extension_blocks", trainer.extension_blocks),
      Entry{"trainer", "round_losses",
            [](const RunConfig& c) {
              return join(c.trainer.round_losses, [](const std::array<LossKind, 2>& r) {
                return to_string(r[0]) + ":" + to_string(r[1]);
              });
            },
            [](RunConfig& c, const std::string& v) {
              c.trainer.round_losses.clear();
              for (const auto& pair : split_list(v)) {
                const auto parts = split_list(pair, ':');
                if (parts.size() != 2) throw ConfigError("'round_losses': expected loss:loss, got '" + pair + "'");
                c.trainer.round_losses.push_back({guarded("round_losses", [&] { return parse_loss_kind(parts[0]); }),
                                                  guarded("round_losses", [&] { return parse_loss_kind(parts[1]); })});
              }
            }},
      DI_BOOL("trainer", "refresh_each_epoch", trainer.refresh_each_epoch),
      DI_SIZE("trainer", "items_per_epoch", trainer.items_per_epoch),
      DI_SIZE("trainer", "batch_size", trainer.batch_size),
      DI_BOOL("trainer", "use_class_condition", trainer.use_class_condition),

      DI_INT("inversion", "fixed_point_iterations", inversion.fixed_point.iterations),
      DI_REAL("inversion", "fixed_point_damping", inversion.fixed_point.damping),
      DI_BOOL("inversion", "use_class_condition", inversion.use_class_condition),

      Entry{"eval", "methods",
            [](const RunConfig& c) { return join(c.eval.methods, [](Method m) { return to_string(m); }); },
            [](RunConfig& c, const std::string& v) {
              c.eval.methods.clear();
              for (const auto& m : split_list(v)) c.eval.methods.push_back(guarded("methods", [&] { return parse_method(m); }));
            }},
      DI_REAL("eval", "max_range", eval.max_range),
      Entry{"eval", "split", [](const RunConfig& c) { return c.eval.split; },
            [](RunConfig& c, const std::string& v) { c.eval.split = v; }},
      DI_BOOL("eval", "record_wall_time", eval.record_wall_time),
  };
  return table;
}

#undef DI_REAL
#undef DI_INT
#undef DI_SIZE
#undef DI_BOOL

const Entry* lookup(const std::string& section, const std::string& key) {
  for (const auto& e : entries()) {
    if (section == e.section && key == e.key) return &e;
  }
  return nullptr;
}

}  // namespace

void RunConfig::validate() const {
  auto check = [](auto&& f) {
    try {
      f();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  };
  check([&] { data.validate(); });
  check([&] { trainer.validate(); });
  check([&] { inversion.fixed_point.validate(); });
  check([&] { resolved_solver().validate(); });
  for (int e : trainer.epochs_per_config) {
    if (e < 1) throw ConfigError("trainer: epoch budgets must be positive");
  }
  if (diffusion.steps < 1) throw ConfigError("diffusion: steps must be >= 1");
  if (diffusion.epochs < 0) throw ConfigError("diffusion: epochs must be >= 0");
  if (diffusion.batch_size < 1) throw ConfigError("diffusion: batch_size must be >= 1");
  if (!(diffusion.learning_rate > 0.0)) throw ConfigError("diffusion: lr must be positive");
  if (diffusion.backbone == BackboneKind::kAnalytic && data.kind != DatasetKind::kGaussian2d) {
    throw ConfigError("diffusion: the analytic backbone requires data kind gaussian_2d");
  }
  if (trainer.timestep_configs.back() > diffusion.steps) {
    throw ConfigError("trainer: timestep configs exceed the diffusion steps");
  }
  for (int tc : trainer.timestep_configs) {
    if (diffusion.steps % tc != 0) throw ConfigError("trainer: every timestep config must divide the diffusion steps");
  }
  if (eval.methods.empty()) throw ConfigError("eval: methods must not be empty");
  if (!(eval.max_range > 0.0)) throw ConfigError("eval: max_range must be positive");
  if (eval.split != "test" && eval.split != "train") throw ConfigError("eval: split must be test or train");
  if (threads < 1) throw ConfigError("run: threads must be >= 1");
}

DatasetSpec RunConfig::dataset_spec() const {
  DatasetSpec spec = data;
  spec.seed = seed;
  return spec;
}

DenoiserConfig RunConfig::denoiser_config() const {
  DenoiserConfig c;
  c.latent_dim = data.latent_dim();
  c.hidden = diffusion.hidden != 0 ? diffusion.hidden : (data.kind == DatasetKind::kShapes8x8 ? 256 : 128);
  c.time_width = diffusion.time_width;
  c.cond_width = diffusion.cond_width;
  c.n_classes = data.n_classes;
  return c;
}

SolverConfig RunConfig::resolved_solver() const {
  SolverConfig c = solver;
  c.latent_dim = data.latent_dim();
  c.n_classes = data.n_classes;
  c.schedule_steps = diffusion.steps;
  return c;
}

NoiseSchedule RunConfig::make_noise_schedule() const { return make_schedule(diffusion.steps, diffusion.schedule); }

RunConfig parse_config(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  RunConfig config;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("key '" + section + "' outside any section");
    for (const auto& [key, value] : body) {
      const Entry* e = lookup(section, key);
      if (e == nullptr) throw ConfigError("unknown config key [" + section + "] " + key);
      e->set(config, trim(value.data()));
    }
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string render_config(const RunConfig& config) {
  std::string out;
  std::string current;
  for (const auto& e : entries()) {
    if (current != e.section) {
      if (!current.empty()) out += '\n';
      current = e.section;
      out += "[" + current + "]\n";
    }
    out += std::string(e.key) + " = " + e.get(config) + "\n";
  }
  return out;
}

}  // namespace deepinv

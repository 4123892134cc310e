// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <ostream>
#include <random>
#include <type_traits>

#include "altsim/baselines.hpp"
#include "altsim/checkpoint.hpp"
#include "altsim/dataset.hpp"
#include "altsim/gradcheck.hpp"
#include "altsim/plot.hpp"

namespace altsim::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---- config fields -----------------------------------------------------------

struct Field {
  std::string key;
  std::function<json()> get;
  std::function<void(const json&, const std::string&)> set;
};

template <class T>
void assign(T& ref, const json& j, const std::string& where) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!j.is_boolean()) throw ConfigError(where + ": expected true or false");
  } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
    if (!j.is_number_unsigned()) throw ConfigError(where + ": expected a non-negative integer");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!j.is_number()) throw ConfigError(where + ": expected a number");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!j.is_string()) throw ConfigError(where + ": expected a string");
  }
  try {
    ref = j.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

template <class T>
Field field(std::string key, T& ref) {
  return {std::move(key), [&ref] { return json(ref); },
          [&ref](const json& j, const std::string& where) { assign(ref, j, where); }};
}

using Sections = std::vector<std::pair<std::string, std::vector<Field>>>;

Sections sections(const RunConfig& config) {
  auto& c = const_cast<RunConfig&>(config);
  return {
      {"mesh",
       {field("kind", c.mesh.kind), field("nx", c.mesh.nx), field("ny", c.mesh.ny), field("spacing", c.mesh.spacing),
        field("ring_nodes", c.mesh.ring_nodes), field("radius", c.mesh.radius), field("path", c.mesh.path)}},
      {"sim",
       {field("frame_rate", c.sim.frame_rate), field("substeps", c.sim.substeps), field("node_mass", c.sim.node_mass),
        field("stiffness", c.sim.stiffness), field("damping", c.sim.damping),
        field("attachment_stiffness", c.sim.attachment_stiffness),
        field("attachment_damping", c.sim.attachment_damping), field("tissue_offset", c.sim.tissue_offset),
        field("material_jitter", c.sim.material_jitter), field("divergence_speed", c.sim.divergence_speed)}},
      {"data",
       {field("frames", c.data.frames), field("sequences", c.data.sequences), field("motions", c.data.motions),
        field("seed", c.data.seed)}},
      {"model", {field("kind", c.model.kind), field("schedule", c.model.schedule), field("skips", c.model.skips)}},
      {"train",
       {field("epochs", c.train.epochs), field("learning_rate", c.train.learning_rate),
        field("lr_decay", c.train.lr_decay), field("beta1", c.train.beta1), field("beta2", c.train.beta2),
        field("epsilon", c.train.epsilon), field("horizon", c.train.horizon), field("seed", c.train.seed),
        field("batch_size", c.train.batch_size), field("shuffle", c.train.shuffle), field("l2", c.train.l2),
        field("validate_every", c.train.validate_every), field("validation_horizon", c.train.validation_horizon)}},
      {"eval",
       {field("mode", c.eval.mode), field("horizons", c.eval.horizons), field("window_start", c.eval.window_start),
        field("split", c.eval.split)}},
  };
}

// ---- flags -------------------------------------------------------------------

/// A flag whose value lands in the config only when it was given.
struct Pending {
  CLI::Option* option;
  std::function<void(RunConfig&)> apply;
};

class Flags {
 public:
  explicit Flags(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* add(const std::string& name, std::function<T&(RunConfig&)> target, const std::string& help) {
    auto value = std::make_shared<T>();
    auto* opt = app_->add_option(name, *value, help);
    if constexpr (!std::is_same_v<T, std::string> && std::is_class_v<T>) opt->delimiter(',');
    pending_.push_back({opt, [value, target](RunConfig& c) { target(c) = *value; }});
    return opt;
  }

  CLI::Option* add_switch(const std::string& name, std::function<void(RunConfig&)> apply, const std::string& help) {
    auto* opt = app_->add_flag(name, help);
    pending_.push_back({opt, std::move(apply)});
    return opt;
  }

  /// Defaults, then the config file, then the flags that were given.
  RunConfig resolve(const std::string& config_path) const {
    RunConfig cfg;
    if (!config_path.empty()) {
      if (!fs::exists(config_path)) throw ConfigError("config file '" + config_path + "' does not exist");
      json doc;
      try {
        doc = json::parse(read_file_bytes(config_path));
      } catch (const json::exception& e) {
        throw ConfigError("config file '" + config_path + "': " + e.what());
      }
      cfg.merge(doc);
    }
    for (const auto& p : pending_)
      if (p.option->count() > 0) p.apply(cfg);
    return cfg;
  }

 private:
  CLI::App* app_;
  std::vector<Pending> pending_;
};

void add_mesh_flags(Flags& f) {
  f.add<std::string>("--mesh", [](RunConfig& c) -> std::string& { return c.mesh.kind; }, "grid, ring or file");
  f.add<std::size_t>("--nx", [](RunConfig& c) -> std::size_t& { return c.mesh.nx; }, "grid nodes along x");
  f.add<std::size_t>("--ny", [](RunConfig& c) -> std::size_t& { return c.mesh.ny; }, "grid nodes along y");
  f.add<double>("--spacing", [](RunConfig& c) -> double& { return c.mesh.spacing; }, "grid spacing, m");
  f.add<std::size_t>("--ring-nodes", [](RunConfig& c) -> std::size_t& { return c.mesh.ring_nodes; }, "ring size");
  f.add<double>("--radius", [](RunConfig& c) -> double& { return c.mesh.radius; }, "ring radius, m");
  f.add<std::string>("--mesh-file", [](RunConfig& c) -> std::string& { return c.mesh.path; }, "graph file for --mesh file");
}

void add_sim_flags(Flags& f) {
  f.add<double>("--fps", [](RunConfig& c) -> double& { return c.sim.frame_rate; }, "output frame rate");
  f.add<std::size_t>("--substeps", [](RunConfig& c) -> std::size_t& { return c.sim.substeps; }, "physics steps per frame");
  f.add<double>("--mass", [](RunConfig& c) -> double& { return c.sim.node_mass; }, "node mass, kg");
  f.add<double>("--stiffness", [](RunConfig& c) -> double& { return c.sim.stiffness; }, "tissue spring stiffness, N/m");
  f.add<double>("--damping", [](RunConfig& c) -> double& { return c.sim.damping; }, "tissue spring damping, N s/m");
  f.add<double>("--attachment-stiffness", [](RunConfig& c) -> double& { return c.sim.attachment_stiffness; },
                "tissue-to-driver stiffness, N/m");
  f.add<double>("--attachment-damping", [](RunConfig& c) -> double& { return c.sim.attachment_damping; },
                "tissue-to-driver damping, N s/m");
  f.add<double>("--tissue-offset", [](RunConfig& c) -> double& { return c.sim.tissue_offset; }, "tissue height, m");
  f.add<double>("--jitter", [](RunConfig& c) -> double& { return c.sim.material_jitter; }, "material perturbation");
}

void add_model_flags(Flags& f) {
  f.add<std::vector<std::size_t>>("--schedule", [](RunConfig& c) -> std::vector<std::size_t>& { return c.model.schedule; },
                                  "hidden widths, comma separated");
  f.add_switch("--no-skips", [](RunConfig& c) { c.model.skips.clear(); }, "drop the layer skip connections");
}

void add_train_flags(Flags& f) {
  f.add<std::size_t>("--epochs", [](RunConfig& c) -> std::size_t& { return c.train.epochs; }, "training epochs");
  f.add<double>("--lr", [](RunConfig& c) -> double& { return c.train.learning_rate; }, "initial learning rate");
  f.add<double>("--lr-decay", [](RunConfig& c) -> double& { return c.train.lr_decay; }, "per-epoch lr factor");
  f.add<std::size_t>("--horizon", [](RunConfig& c) -> std::size_t& { return c.train.horizon; }, "training frames");
  f.add<std::size_t>("--validation-horizon",
                     [](RunConfig& c) -> std::size_t& { return c.train.validation_horizon; },
                     "frames scored by validation (0: same as --horizon)");
  f.add<std::uint64_t>("--seed", [](RunConfig& c) -> std::uint64_t& { return c.train.seed; }, "run seed");
  f.add<std::size_t>("--batch-size", [](RunConfig& c) -> std::size_t& { return c.train.batch_size; }, "sequences per step");
  f.add<double>("--l2", [](RunConfig& c) -> double& { return c.train.l2; }, "L2 penalty on weights");
  f.add<std::size_t>("--validate-every", [](RunConfig& c) -> std::size_t& { return c.train.validate_every; },
                     "epochs between validation passes");
  f.add_switch("--no-shuffle", [](RunConfig& c) { c.train.shuffle = false; }, "keep the dataset order");
}

void add_eval_flags(Flags& f) {
  f.add<std::string>("--mode", [](RunConfig& c) -> std::string& { return c.eval.mode; }, "single-step, rollout or both");
  f.add<std::vector<std::size_t>>("--horizons", [](RunConfig& c) -> std::vector<std::size_t>& { return c.eval.horizons; },
                                  "comma separated horizons");
  f.add<std::size_t>("--window-start", [](RunConfig& c) -> std::size_t& { return c.eval.window_start; },
                     "evaluate from this frame on");
  f.add<std::string>("--split", [](RunConfig& c) -> std::string& { return c.eval.split; }, "label for the report");
}

// ---- io helpers ----------------------------------------------------------------

void write_text(const fs::path& path, const std::string& text) { write_file_bytes(path, text); }

void echo_config(const fs::path& dir, const std::string& command, const RunConfig& cfg) {
  json doc = cfg.to_json();
  doc["command"] = command;
  write_text(dir / "config.json", doc.dump(2) + "\n");
}

void make_output_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9e", v);
  return buf;
}

std::vector<PredictMode> parse_modes(const std::string& mode) {
  if (mode == "both") return {PredictMode::SingleStep, PredictMode::RollOut};
  try {
    return {parse_predict_mode(mode)};
  } catch (const ContractError&) {
    throw ConfigError("unknown mode '" + mode + "' (single-step, rollout or both)");
  }
}

ModelKind parse_kind(const std::string& name) {
  try {
    return parse_model_kind(name);
  } catch (const ContractError&) {
    throw ConfigError("unknown model '" + name +
                      "' (alt, convlstm-cp-y, convlstm-np-y, convlstm-cp-dy, convlstm-np-dy)");
  }
}

Checkpoint read_checkpoint(const std::string& path) {
  if (path.empty()) throw ConfigError("--model is required");
  if (!fs::exists(path)) throw ConfigError("checkpoint '" + path + "' does not exist");
  return load_checkpoint(path);
}

// ---- commands ------------------------------------------------------------------

int cmd_gen_data(const RunConfig& cfg, const fs::path& out_dir, std::ostream& out) {
  if (cfg.data.frames == 0) throw ConfigError("--frames must be at least 1");
  if (cfg.data.sequences == 0) throw ConfigError("--sequences must be at least 1");
  if (cfg.data.motions.empty()) throw ConfigError("--motions must name at least one motion");
  std::vector<MotionKind> kinds;
  for (const auto& m : cfg.data.motions) {
    try {
      kinds.push_back(parse_motion_kind(m));
    } catch (const ContractError& e) {
      throw ConfigError(e.what());
    }
  }
  cfg.sim.validate();
  const Mesh mesh = build_mesh(cfg.mesh);

  std::mt19937_64 rng(cfg.data.seed);
  const auto plans = plan_sequences(kinds, cfg.data.sequences, cfg.data.frames, cfg.sim.frame_rate, rng);
  // Everything is simulated before the first file is written.
  Dataset data = generate_dataset(cfg.sim, mesh, plans, cfg.data.frames);

  make_output_dir(out_dir);
  save_mesh(mesh, out_dir / "graph.json");
  json manifest;
  manifest["format"] = "altsim-dataset";
  manifest["version"] = 1;
  manifest["graph"] = "graph.json";
  manifest["num_nodes"] = mesh.num_nodes();
  manifest["frames"] = cfg.data.frames;
  manifest["fps"] = cfg.sim.frame_rate;
  manifest["seed"] = cfg.data.seed;
  manifest["sequences"] = json::array();
  for (std::size_t s = 0; s < data.sequences.size(); ++s) {
    char name[32];
    std::snprintf(name, sizeof name, "seq_%04zu.alttraj", s);
    auto& traj = data.sequences[s];
    traj.graph_ref = "graph.json";
    save_trajectory(traj, out_dir / name);
    manifest["sequences"].push_back({{"file", name},
                                     {"script", plans[s].script.name()},
                                     {"motion", to_string(plans[s].script.kind)},
                                     {"seed", plans[s].seed}});
  }
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  echo_config(out_dir, "gen-data", cfg);
  out << "wrote " << data.sequences.size() << " sequences of " << cfg.data.frames << " frames ("
      << mesh.num_nodes() << " nodes) to " << out_dir.string() << "\n";
  return kOk;
}

int cmd_train(const RunConfig& cfg, const std::string& data_dir, const std::string& val_dir,
              const fs::path& out_dir, bool quiet, std::ostream& out, std::ostream& err) {
  if (data_dir.empty()) throw ConfigError("--data is required");
  const ModelKind kind = parse_kind(cfg.model.kind);
  cfg.train.validate();
  const Dataset data = load_dataset(data_dir);
  std::optional<Dataset> validation;
  if (!val_dir.empty()) validation = load_dataset(val_dir);

  std::mt19937_64 root(cfg.train.seed);
  const std::uint64_t model_seed = root();
  TrainConfig tc = cfg.train;
  tc.seed = root();

  NetSpec spec = cfg.net_spec();
  if (kind != ModelKind::Alt) spec.skips.clear();
  Network net(spec, kind, model_seed);
  net.zero_output_weights();
  make_output_dir(out_dir);
  echo_config(out_dir, "train", cfg);

  const std::size_t every = std::max<std::size_t>(1, tc.epochs / 20);
  auto progress = [&](const EpochRecord& r) {
    if (quiet || (r.epoch % every != 0 && r.epoch + 1 != tc.epochs)) return;
    out << "epoch " << r.epoch + 1 << "/" << tc.epochs << "  lr " << format_double(r.learning_rate) << "  train "
        << format_double(r.train_loss);
    if (!std::isnan(r.validation_loss)) out << "  val " << format_double(r.validation_loss);
    out << "\n";
  };

  TrainResult result = [&] {
    try {
      return train(std::move(net), data, validation ? &*validation : nullptr, tc, progress);
    } catch (const TrainingDiverged& e) {
      if (e.last_good()) {
        write_file_bytes(out_dir / "last_good.ckpt", encode_checkpoint(*e.last_good()));
        err << "last good checkpoint (epoch " << e.last_good()->training.epoch << ") saved to "
            << (out_dir / "last_good.ckpt").string() << "\n";
      }
      throw;
    }
  }();

  save_checkpoint(result.best, result.best_metadata, out_dir / "model.ckpt");
  std::string csv = "epoch,learning_rate,train_loss,validation_loss\n";
  PlotSeries train_series{"train", {}, {}}, val_series{"validation", {}, {}};
  for (const auto& r : result.curve) {
    csv += std::to_string(r.epoch) + "," + format_double(r.learning_rate) + "," + format_double(r.train_loss) + "," +
           format_double(r.validation_loss) + "\n";
    train_series.x.push_back(static_cast<double>(r.epoch));
    train_series.y.push_back(r.train_loss);
    if (!std::isnan(r.validation_loss)) {
      val_series.x.push_back(static_cast<double>(r.epoch));
      val_series.y.push_back(r.validation_loss);
    }
  }
  write_text(out_dir / "loss.csv", csv);
  std::vector<PlotSeries> series{train_series};
  if (!val_series.x.empty()) series.push_back(val_series);
  write_text(out_dir / "loss.svg", svg_line_chart("Training loss (" + model_name(kind) + ")", "epoch",
                                                  "mean vertex error (m)", series));
  json manifest;
  manifest["model"] = model_name(kind);
  manifest["seed"] = cfg.train.seed;
  manifest["model_seed"] = model_seed;
  manifest["shuffle_seed"] = tc.seed;
  manifest["best_epoch"] = result.best_metadata.epoch;
  manifest["best_loss"] = result.best_metadata.loss;
  manifest["parameters"] = result.best.parameter_count();
  manifest["data"] = data_dir;
  manifest["validation"] = val_dir;
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  out << "best epoch " << result.best_metadata.epoch << " loss " << format_double(result.best_metadata.loss)
      << "; checkpoint " << (out_dir / "model.ckpt").string() << "\n";
  return kOk;
}

int cmd_eval(const RunConfig& cfg, const std::string& model_path, const std::string& data_dir,
             const fs::path& out_dir, std::ostream& out) {
  if (data_dir.empty()) throw ConfigError("--data is required");
  const auto modes = parse_modes(cfg.eval.mode);
  if (cfg.eval.horizons.empty()) throw ConfigError("--horizons must list at least one horizon");
  const Network net = read_checkpoint(model_path).to_network();
  Dataset data = load_dataset(data_dir);
  const std::size_t max_h = *std::max_element(cfg.eval.horizons.begin(), cfg.eval.horizons.end());
  if (cfg.eval.window_start > 0) data = window(data, cfg.eval.window_start, max_h);

  std::vector<EvalReport> reports;
  for (auto mode : modes) reports.push_back(evaluate(net, data, cfg.eval.horizons, mode, cfg.eval.split));

  make_output_dir(out_dir);
  echo_config(out_dir, "eval", cfg);
  write_text(out_dir / "report.csv", report_csv(reports));
  write_text(out_dir / "report.json", report_json(reports));
  std::vector<PlotSeries> series;
  for (const auto& r : reports) {
    PlotSeries s{r.model + " " + to_string(r.mode), {}, {}};
    for (const auto& row : r.rows) {
      s.x.push_back(static_cast<double>(row.horizon));
      s.y.push_back(row.mean_mm);
    }
    series.push_back(std::move(s));
  }
  write_text(out_dir / "error.svg", svg_line_chart("Per-vertex error", "horizon (frames)", "mean error (mm)", series));

  for (const auto& r : reports) {
    out << r.model << " " << to_string(r.mode) << (r.split.empty() ? "" : " [" + r.split + "]") << "\n";
    for (const auto& row : r.rows) {
      char line[96];
      std::snprintf(line, sizeof line, "  %3zu steps  %8.3f +- %7.3f mm\n", row.horizon, row.mean_mm, row.sd_mm);
      out << line;
    }
  }
  return kOk;
}

int cmd_gradcheck(const std::string& model, double eps, double tol, const std::string& corrupt_op,
                  std::size_t frames, std::uint64_t seed, std::ostream& out) {
  const ModelKind kind = parse_kind(model);
  if (!(eps > 0.0)) throw ConfigError("--eps must be positive");
  if (!(tol > 0.0)) throw ConfigError("--tol must be positive");
  if (frames == 0) throw ConfigError("--frames must be at least 1");
  if (!corrupt_op.empty()) {
    const auto ops = debug::recorded_op_names();
    if (std::find(ops.begin(), ops.end(), corrupt_op) == ops.end()) {
      std::string list;
      for (const auto& o : ops) list += (list.empty() ? "" : ", ") + o;
      throw ConfigError("unknown op '" + corrupt_op + "' (" + list + ")");
    }
  }

  const auto fixture = make_gradcheck_fixture(frames, seed);
  const Network net(gradcheck_net_spec(kind), kind, seed);
  if (!corrupt_op.empty()) debug::inject_backward_fault(corrupt_op);
  GradcheckResult result;
  try {
    result = gradcheck(net, fixture, eps);
  } catch (...) {
    debug::clear_backward_fault();
    throw;
  }
  debug::clear_backward_fault();

  out << "gradcheck " << model_name(kind) << ": " << fixture.graph.num_nodes() << " nodes, T=" << frames
      << ", eps " << eps << ", tol " << tol << "\n";
  for (const auto& p : result.params) {
    char line[160];
    std::snprintf(line, sizeof line, "  %-14s max |a-n| %.3e  max rel %.3e%s\n", p.name.c_str(), p.max_abs_error,
                  p.max_rel_error, p.max_rel_error > tol ? "  <-- exceeds tol" : "");
    out << line;
  }
  char summary[160];
  if (result.passed(tol)) {
    std::snprintf(summary, sizeof summary, "PASS: worst %s rel %.3e <= %.1e (%.2f s)\n", result.worst_param.c_str(),
                  result.worst_rel_error, tol, result.seconds);
    out << summary;
    return kOk;
  }
  std::snprintf(summary, sizeof summary, "FAIL: worst %s rel %.3e > %.1e", result.worst_param.c_str(),
                result.worst_rel_error, tol);
  out << summary;
  if (!corrupt_op.empty()) out << " (backward rule of '" << corrupt_op << "' was corrupted)";
  out << "\n";
  return kCheckFailed;
}

int cmd_inspect(const RunConfig& cfg, const std::string& model_path, bool as_json, const std::string& csv_path,
                std::ostream& out) {
  std::optional<Network> net;
  if (!model_path.empty()) {
    net = read_checkpoint(model_path).to_network();
  } else {
    const ModelKind kind = parse_kind(cfg.model.kind);
    NetSpec spec = cfg.net_spec();
    if (kind != ModelKind::Alt) spec.skips.clear();
    net.emplace(spec, kind, 0);
  }
  const auto tr = traits(net->kind());

  json layers = json::array();
  std::size_t total = 0;
  for (std::size_t l = 0; l < net->layers().size(); ++l) {
    const auto& p = net->layers()[l];
    std::size_t count = 0;
    for (const auto& t : p.tensors()) count += t.size();
    const std::size_t formula = tr.alternating
                                    ? alt_cell_param_count(p.input_channels(), p.hidden_channels())
                                    : vanilla_cell_param_count(p.input_channels(), p.hidden_channels(), tr.peephole);
    if (count != formula)
      throw FormatError("layer " + std::to_string(l) + " holds " + std::to_string(count) +
                        " parameters, the cell formula gives " + std::to_string(formula));
    total += count;
    layers.push_back({{"layer", l},
                      {"role", l + 1 == net->layers().size() ? "output" : "hidden"},
                      {"k_x", p.input_channels()},
                      {"k_h", p.hidden_channels()},
                      {"params", count}});
  }
  const std::string statement =
      "Parameter count is independent of |V|: every tensor is shaped by channel widths only.";

  if (!csv_path.empty()) {
    std::string csv = "layer,role,k_x,k_h,params\n";
    for (const auto& l : layers)
      csv += std::to_string(l["layer"].get<std::size_t>()) + "," + l["role"].get<std::string>() + "," +
             std::to_string(l["k_x"].get<std::size_t>()) + "," + std::to_string(l["k_h"].get<std::size_t>()) + "," +
             std::to_string(l["params"].get<std::size_t>()) + "\n";
    csv += "total,,,," + std::to_string(total) + "\n";
    write_text(csv_path, csv);
  }
  if (as_json) {
    json doc{{"model", model_name(net->kind())},
             {"schedule", net->spec().channel_schedule},
             {"layers", layers},
             {"total_params", total},
             {"depends_on_num_nodes", false},
             {"statement", statement}};
    out << doc.dump(2) << "\n";
    return kOk;
  }
  out << "model " << model_name(net->kind()) << "\n";
  out << "layer  role     K_x  K_h   params\n";
  for (const auto& l : layers) {
    char line[96];
    std::snprintf(line, sizeof line, "%5zu  %-7s %4zu %4zu %8zu\n", l["layer"].get<std::size_t>(),
                  l["role"].get<std::string>().c_str(), l["k_x"].get<std::size_t>(), l["k_h"].get<std::size_t>(),
                  l["params"].get<std::size_t>());
    out << line;
  }
  out << "total parameters " << total << "\n" << statement << "\n";
  return kOk;
}

int cmd_predict(const RunConfig& cfg, const std::string& model_path, const std::string& data_dir,
                const fs::path& out_dir, std::ostream& out) {
  if (data_dir.empty()) throw ConfigError("--data is required");
  const auto modes = parse_modes(cfg.eval.mode);
  if (modes.size() != 1) throw ConfigError("predict takes a single --mode");
  const Network net = read_checkpoint(model_path).to_network();
  const Dataset data = load_dataset(data_dir);

  make_output_dir(out_dir);
  echo_config(out_dir, "predict", cfg);
  std::vector<double> frame_error;
  for (std::size_t s = 0; s < data.sequences.size(); ++s) {
    const auto& seq = data.sequences[s];
    NoGradGuard no_grad;
    const auto pred = net.predict_sequence(data.graph, seq.X, seq.Y.front(), modes.front(), seq.Y);
    Trajectory traj = seq;
    traj.script = seq.script + " predicted by " + model_name(net.kind());
    traj.Y.assign(1, seq.Y.front());
    traj.Y.insert(traj.Y.end(), pred.begin(), pred.end());
    char name[32];
    std::snprintf(name, sizeof name, "pred_%04zu.alttraj", s);
    save_trajectory(traj, out_dir / name);
    if (frame_error.size() < pred.size()) frame_error.resize(pred.size(), 0.0);
    for (std::size_t t = 0; t < pred.size(); ++t) {
      const Tensor d = row_norms(sub(pred[t], seq.Y[t + 1]));
      double sum = 0.0;
      for (double v : d.data()) sum += v;
      frame_error[t] += 1000.0 * sum / static_cast<double>(d.size() * data.sequences.size());
    }
  }
  std::string csv = "frame,mean_mm\n";
  PlotSeries series{to_string(modes.front()), {}, {}};
  for (std::size_t t = 0; t < frame_error.size(); ++t) {
    csv += std::to_string(t + 1) + "," + format_double(frame_error[t]) + "\n";
    series.x.push_back(static_cast<double>(t + 1));
    series.y.push_back(frame_error[t]);
  }
  write_text(out_dir / "frame_error.csv", csv);
  write_text(out_dir / "frame_error.svg", svg_line_chart("Per-frame error", "frame", "mean error (mm)", {series}));
  out << "wrote " << data.sequences.size() << " predicted sequences to " << out_dir.string() << "\n";
  return kOk;
}

}  // namespace

// ---- RunConfig -------------------------------------------------------------------

json RunConfig::to_json() const {
  json doc = json::object();
  for (const auto& [name, fields] : sections(*this)) {
    json section = json::object();
    for (const auto& f : fields) section[f.key] = f.get();
    doc[name] = section;
  }
  return doc;
}

void RunConfig::merge(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  const auto all = sections(*this);
  for (const auto& [name, value] : doc.items()) {
    auto it = std::find_if(all.begin(), all.end(), [&](const auto& s) { return s.first == name; });
    if (it == all.end()) throw ConfigError("unknown config section '" + name + "'");
    if (!value.is_object()) throw ConfigError("config section '" + name + "' must be an object");
    for (const auto& [key, v] : value.items()) {
      auto f = std::find_if(it->second.begin(), it->second.end(), [&](const Field& x) { return x.key == key; });
      if (f == it->second.end()) throw ConfigError("unknown config key '" + name + "." + key + "'");
      f->set(v, name + "." + key);
    }
  }
}

NetSpec RunConfig::net_spec() const {
  NetSpec spec;
  spec.channel_schedule = model.schedule;
  spec.skips.clear();
  for (const auto& s : model.skips) {
    if (s.size() != 2) throw ConfigError("model.skips entries must be [target, source] pairs");
    spec.skips.emplace_back(s[0], s[1]);
  }
  // Vanilla cells carry no layer skips.
  if (model.kind != "alt") spec.skips.clear();
  try {
    spec.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string(e.what()) + " (adjust model.skips or pass --no-skips)");
  }
  return spec;
}

Mesh build_mesh(const MeshSection& m) {
  if (m.kind == "grid") return make_grid_mesh(m.nx, m.ny, m.spacing);
  if (m.kind == "ring") return make_ring_mesh(m.ring_nodes, m.radius);
  if (m.kind == "file") {
    if (m.path.empty()) throw ConfigError("--mesh file needs --mesh-file");
    if (!fs::exists(m.path)) throw ConfigError("mesh file '" + m.path + "' does not exist");
    return load_mesh(m.path);
  }
  throw ConfigError("unknown mesh kind '" + m.kind + "' (grid, ring or file)");
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::exists(dir)) throw ConfigError("data path '" + dir.string() + "' does not exist");
  const auto manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path))
    throw ConfigError("data path '" + dir.string() + "' has no manifest.json (run gen-data first)");
  json manifest;
  try {
    manifest = json::parse(read_file_bytes(manifest_path));
    Dataset data;
    data.graph = load_mesh(dir / manifest.at("graph").get<std::string>()).graph;
    for (const auto& s : manifest.at("sequences")) {
      auto traj = load_trajectory(dir / s.at("file").get<std::string>());
      if (traj.num_nodes() != data.graph.num_nodes())
        throw FormatError("trajectory " + s.at("file").get<std::string>() + " has " +
                          std::to_string(traj.num_nodes()) + " nodes, the graph has " +
                          std::to_string(data.graph.num_nodes()));
      data.sequences.push_back(std::move(traj));
    }
    if (data.sequences.empty()) throw FormatError("manifest in '" + dir.string() + "' lists no sequences");
    return data;
  } catch (const json::exception& e) {
    throw FormatError("manifest in '" + dir.string() + "': " + e.what());
  }
}

// ---- entry point -----------------------------------------------------------------

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"altsim: learned mesh dynamics with recurrent graph cells"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "altsim 1.0.0");

  std::string config_path, data_dir, val_dir, model, corrupt_op, csv_path;
  std::string out_dir_arg;
  bool quiet = false, as_json = false;
  double eps = 1e-5, tol = 1e-4;
  std::size_t gc_frames = 3;
  std::uint64_t gc_seed = 11;

  auto* gen = app.add_subcommand("gen-data", "simulate driver/tissue trajectories");
  Flags gen_flags(gen);
  gen->add_option("--config", config_path, "JSON config file");
  gen->add_option("--out", out_dir_arg, "output directory")->default_str("runs/data");
  add_mesh_flags(gen_flags);
  add_sim_flags(gen_flags);
  gen_flags.add<std::size_t>("--frames", [](RunConfig& c) -> std::size_t& { return c.data.frames; }, "frames per sequence");
  gen_flags.add<std::size_t>("--sequences", [](RunConfig& c) -> std::size_t& { return c.data.sequences; }, "sequence count");
  gen_flags.add<std::vector<std::string>>("--motions", [](RunConfig& c) -> std::vector<std::string>& { return c.data.motions; },
                                          "comma separated motion kinds");
  gen_flags.add<std::uint64_t>("--seed", [](RunConfig& c) -> std::uint64_t& { return c.data.seed; }, "generator seed");

  auto* tr = app.add_subcommand("train", "train a model on a generated dataset");
  Flags train_flags(tr);
  tr->add_option("--config", config_path, "JSON config file");
  tr->add_option("--data", data_dir, "training data directory");
  tr->add_option("--val", val_dir, "validation data directory");
  tr->add_option("--out", out_dir_arg, "output directory")->default_str("runs/train");
  tr->add_flag("--quiet", quiet, "no per-epoch progress");
  train_flags.add<std::string>("--model", [](RunConfig& c) -> std::string& { return c.model.kind; }, "model kind");
  add_model_flags(train_flags);
  add_train_flags(train_flags);

  auto* ev = app.add_subcommand("eval", "single-step / roll-out error report");
  Flags eval_flags(ev);
  ev->add_option("--config", config_path, "JSON config file");
  ev->add_option("--model", model, "checkpoint file");
  ev->add_option("--data", data_dir, "evaluation data directory");
  ev->add_option("--out", out_dir_arg, "output directory")->default_str("runs/eval");
  add_eval_flags(eval_flags);

  auto* gc = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
  std::string gc_model = "alt";
  gc->add_option("--model", gc_model, "model kind")->capture_default_str();
  gc->add_option("--eps", eps, "finite-difference step")->default_val(1e-5);
  gc->add_option("--tol", tol, "relative tolerance")->default_val(1e-4);
  gc->add_option("--corrupt-op", corrupt_op, "scale the backward rule of this op (negative control)");
  gc->add_option("--frames", gc_frames, "fixture length")->default_val(3);
  gc->add_option("--seed", gc_seed, "fixture and weight seed")->default_val(11);

  auto* in = app.add_subcommand("inspect", "per-layer parameter counts");
  Flags inspect_flags(in);
  in->add_option("--config", config_path, "JSON config file");
  in->add_option("--model", model, "checkpoint file (omit to inspect --kind/--schedule)");
  in->add_option("--csv", csv_path, "also write a CSV summary here");
  in->add_flag("--json", as_json, "machine-readable output");
  inspect_flags.add<std::string>("--kind", [](RunConfig& c) -> std::string& { return c.model.kind; }, "model kind");
  add_model_flags(inspect_flags);

  auto* pr = app.add_subcommand("predict", "export predicted trajectories");
  Flags predict_flags(pr);
  pr->add_option("--config", config_path, "JSON config file");
  pr->add_option("--model", model, "checkpoint file");
  pr->add_option("--data", data_dir, "driver data directory");
  pr->add_option("--out", out_dir_arg, "output directory")->default_str("runs/predict");
  predict_flags.add<std::string>("--mode", [](RunConfig& c) -> std::string& { return c.eval.mode; }, "single-step or rollout");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << (dynamic_cast<const CLI::CallForVersion*>(&e) ? std::string(e.what()) + "\n"
                                                            : app.help());
      return kOk;
    }
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  auto out_dir = [&](const char* fallback) { return fs::path(out_dir_arg.empty() ? fallback : out_dir_arg); };

  try {
    if (gen->parsed()) return cmd_gen_data(gen_flags.resolve(config_path), out_dir("runs/data"), out);
    if (tr->parsed())
      return cmd_train(train_flags.resolve(config_path), data_dir, val_dir, out_dir("runs/train"), quiet, out, err);
    if (ev->parsed()) return cmd_eval(eval_flags.resolve(config_path), model, data_dir, out_dir("runs/eval"), out);
    if (gc->parsed()) return cmd_gradcheck(gc_model, eps, tol, corrupt_op, gc_frames, gc_seed, out);
    if (in->parsed()) return cmd_inspect(inspect_flags.resolve(config_path), model, as_json, csv_path, out);
    if (pr->parsed())
      return cmd_predict(predict_flags.resolve(config_path), model, data_dir, out_dir("runs/predict"), out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DivergenceError& e) {
    err << "error: simulation diverged at frame " << e.frame() << " (step " << e.step() << "): " << e.what() << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::logic_error& e) {
    // ContractError, DimensionError, IndexError: the inputs do not fit together.
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const TrainingDiverged& e) {
    err << "error: " << e.what() << "\n";
    return kCheckFailed;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kCheckFailed;
  }
  return kUsage;
}

}  // namespace altsim::cli

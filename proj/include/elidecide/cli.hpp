#pragma once

// Command-line front end. run_cli() is the whole program minus main(), so
// tests can drive it in-process.
//
// Exit codes: 0 success, 1 runtime/data failure, 2 usage error.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "elidecide/elidecide.hpp"

namespace elidecide::cli {

inline constexpr const char* kVersion = "0.1.0";

namespace fs = std::filesystem;
using nlohmann::json;

/// Every tunable, with the built-in defaults. Precedence when resolving:
/// command-line flag, then config file, then these values.
struct Options {
  std::uint64_t seed = 0;
  std::string data;
  std::string out;
  std::string model;
  std::string test;
  std::string scenario;
  std::string spec;
  std::string config;
  std::string format = "json";
  std::string neg_loss = "elidecide";
  double kcr = 1.0;
  int scl_epochs = 0;
  double scl_lr = 2e-5;
  std::size_t scl_batch_size = 32;
  double tau = 0.07;
  double sigma = 0.1;
  std::size_t proj_dim = 0;
  int epochs = 100;
  std::size_t batch_size = 64;
  double lr = 0.001;
  double beta = 0.5;
  int mix_p = 3;
  double mix_alpha = 0.6;
  int patience = 10;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  ELIDECIDE_REQUIRE(out.good(), ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out << text;
  ELIDECIDE_REQUIRE(out.good(), ErrorKind::IoError, "write failed for " + path.string());
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  ELIDECIDE_REQUIRE(in.good(), ErrorKind::IoError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::FormatError, path.string() + ": " + ex.what());
  }
}

/// Sibling path with `suffix` replacing the extension: model.json -> model.log.jsonl
inline fs::path sibling(const fs::path& p, const std::string& suffix) {
  fs::path out = p;
  out.replace_extension();
  out += suffix;
  return out;
}

/// Applies config-file values; flags parsed afterwards override them.
inline void apply_config(Options& o, const json& j) {
  if (!j.is_object()) throw UsageError("config file must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "seed") o.seed = value.get<std::uint64_t>();
      else if (key == "data") o.data = value.get<std::string>();
      else if (key == "out") o.out = value.get<std::string>();
      else if (key == "model") o.model = value.get<std::string>();
      else if (key == "test") o.test = value.get<std::string>();
      else if (key == "scenario") o.scenario = value.get<std::string>();
      else if (key == "spec") o.spec = value.get<std::string>();
      else if (key == "format") o.format = value.get<std::string>();
      else if (key == "neg-loss") o.neg_loss = value.get<std::string>();
      else if (key == "kcr") o.kcr = value.get<double>();
      else if (key == "scl-epochs") o.scl_epochs = value.get<int>();
      else if (key == "scl-lr") o.scl_lr = value.get<double>();
      else if (key == "scl-batch-size") o.scl_batch_size = value.get<std::size_t>();
      else if (key == "tau") o.tau = value.get<double>();
      else if (key == "sigma") o.sigma = value.get<double>();
      else if (key == "proj-dim") o.proj_dim = value.get<std::size_t>();
      else if (key == "epochs") o.epochs = value.get<int>();
      else if (key == "batch-size") o.batch_size = value.get<std::size_t>();
      else if (key == "lr") o.lr = value.get<double>();
      else if (key == "beta") o.beta = value.get<double>();
      else if (key == "mix-p") o.mix_p = value.get<int>();
      else if (key == "mix-alpha") o.mix_alpha = value.get<double>();
      else if (key == "patience") o.patience = value.get<int>();
      else throw UsageError("unknown config key '" + key + "'");
    } catch (const json::exception&) {
      throw UsageError("config key '" + key + "' has the wrong type");
    }
  }
}

inline TrainConfig train_config(const Options& o) {
  TrainConfig cfg;
  cfg.seed = o.seed;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.boundary_lr = o.lr;
  cfg.beta = o.beta;
  cfg.mix.p = o.mix_p;
  cfg.mix.alpha = o.mix_alpha;
  cfg.patience = o.patience;
  const auto neg = parse_negative_loss(o.neg_loss);
  if (!neg) throw UsageError("--neg-loss must be one of adb, clab, adbgen, elidecide");
  cfg.negative_loss = *neg;
  return cfg;
}

inline json resolved_config(const Options& o) {
  return json{{"kcr", o.kcr},           {"scl-epochs", o.scl_epochs}, {"scl-lr", o.scl_lr},
              {"scl-batch-size", o.scl_batch_size}, {"tau", o.tau}, {"sigma", o.sigma},
              {"proj-dim", o.proj_dim}, {"epochs", o.epochs},        {"batch-size", o.batch_size},
              {"lr", o.lr},             {"beta", o.beta},            {"mix-p", o.mix_p},
              {"mix-alpha", o.mix_alpha}, {"patience", o.patience},  {"neg-loss", o.neg_loss},
              {"format", o.format}};
}

inline void write_manifest(const fs::path& path, const std::string& command, const Options& o,
                           const std::vector<std::string>& inputs, const std::vector<std::string>& outputs) {
  json m;
  m["command"] = command;
  m["config"] = resolved_config(o);
  m["seed"] = o.seed;
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  m["version"] = kVersion;
  write_text(path, m.dump(2) + "\n");
}

inline DataSplits load_splits(const fs::path& dir, bool need_test) {
  DataSplits d;
  d.train = load_dataset(dir / "train.embd");
  d.val = fs::exists(dir / "val.embd") ? load_dataset(dir / "val.embd") : LabeledDataset{};
  if (d.val.dim == 0) {
    d.val.dim = d.train.dim;
    d.val.final_form = d.train.final_form;
  }
  if (need_test) d.test = load_dataset(dir / "test.embd");
  ELIDECIDE_REQUIRE(d.val.empty() || d.val.dim == d.train.dim, ErrorKind::DimensionMismatch,
                    "val n=" + std::to_string(d.val.dim) + " vs train n=" + std::to_string(d.train.dim));
  return d;
}

/// Known-class view of the data: identity mapping at kcr = 1.
inline KcrSplit known_view(const DataSplits& d, double kcr, std::uint64_t seed) { return kcr_split(d, kcr, seed); }

struct Trained {
  Model model;
  TrainResult result;
  std::vector<double> scl_history;
  LabeledDataset train;  // in final embedding space
};

/// Optional SCL refinement of a projection head, then boundary training.
inline Trained train_model(const KcrSplit& split, const Options& o) {
  Trained t;
  LabeledDataset train = split.train;
  LabeledDataset val = split.val;
  const bool raw = !train.final_form;
  if (raw || o.scl_epochs > 0) {
    Rng scl_rng = Rng::substream(o.seed, "scl");
    const std::size_t out_dim = o.proj_dim ? o.proj_dim : train.dim;
    ProjectionHead head = ProjectionHead::init(train.dim, out_dim, scl_rng);
    if (o.scl_epochs > 0) {
      // SCL works on unit vectors; final-form data is renormalized by the head anyway
      SclConfig scl{o.scl_epochs, o.scl_batch_size, o.scl_lr, o.tau, o.sigma};
      t.scl_history = train_projection_head(head, train, scl, scl_rng);
    }
    train = project_dataset(train, head);
    if (!val.empty()) val = project_dataset(val, head);
    val.dim = train.dim;
    t.model.projection = std::move(head);
  }
  t.result = train_boundaries(train, val, train_config(o), split.known_classes);
  t.model.boundaries = t.result.boundaries;
  t.train = std::move(train);
  return t;
}

/// Test data in the model's embedding space, labeled for the model's classes.
inline LabeledDataset prepare_test(const Model& model, const LabeledDataset& test) {
  LabeledDataset data = test;
  if (model.projection) {
    ELIDECIDE_REQUIRE(test.dim == model.projection->input_dim(), ErrorKind::DimensionMismatch,
                      "model expects raw n=" + std::to_string(model.projection->input_dim()) + " but data has n=" +
                          std::to_string(test.dim));
    data = project_dataset(test, *model.projection);
  }
  ELIDECIDE_REQUIRE(data.dim == model.boundaries.dim(), ErrorKind::DimensionMismatch,
                    "model n=" + std::to_string(model.boundaries.dim()) + " vs data n=" + std::to_string(data.dim));
  return relabel_for_model(data, model.boundaries);
}

inline void emit(const std::string& text, const std::string& out_path, std::ostream& out) {
  if (out_path.empty())
    out << text;
  else
    write_text(out_path, text);
}

inline std::vector<BallBoundary> cf_balls(const LabeledDataset& train, double cf) {
  std::vector<BallBoundary> balls;
  const std::vector<LabeledSample> sorted = canonical_samples(train);
  for (int k = 0; k < train.class_count; ++k) {
    std::vector<Vector> members;
    for (const auto& s : sorted)
      if (s.label == k) members.push_back(s.embedding);
    ELIDECIDE_REQUIRE(!members.empty(), ErrorKind::EmptyClass, "class " + std::to_string(k) + " has no samples");
    balls.push_back(ball_from_cf(members, compute_centroid(members), cf));
  }
  return balls;
}

inline std::vector<int> model_ids(const BoundarySet& bs) {
  std::vector<int> ids;
  for (const auto& e : bs.ellipsoids) ids.push_back(e.id);
  return ids;
}

// ---------------------------------------------------------------------------

inline int cmd_gen_synth(const Options& o, std::ostream& out) {
  SynthSpec spec;
  if (!o.spec.empty()) {
    spec = synth_spec_from_json(read_json(o.spec));
  } else {
    AnisoParams params;
    if (!named_scenario(o.scenario.empty() ? "aniso-k4" : o.scenario, params))
      throw UsageError("unknown scenario '" + o.scenario + "' (known: aniso-k4, iso-k4)");
    spec = aniso_scenario(params, o.seed);
  }
  const DataSplits d = generate(spec, o.seed);
  const fs::path dir = o.out;
  fs::create_directories(dir);
  save_dataset(d.train, dir / "train.embd");
  save_dataset(d.val, dir / "val.embd");
  save_dataset(d.test, dir / "test.embd");
  write_text(dir / "spec.json", synth_spec_to_json(spec, o.seed).dump(2) + "\n");
  write_manifest(dir / "manifest.json", "gen-synth", o, o.spec.empty() ? std::vector<std::string>{} : std::vector{o.spec},
                 {"train.embd", "val.embd", "test.embd", "spec.json"});
  out << "wrote " << d.train.size() << "/" << d.val.size() << "/" << d.test.size()
      << " train/val/test samples to " << dir.string() << "\n";
  return 0;
}

inline int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  const DataSplits d = load_splits(o.data, false);
  const KcrSplit split = known_view(d, o.kcr, o.seed);
  const Trained t = train_model(split, o);
  const fs::path model_path = o.out;
  if (model_path.has_parent_path()) fs::create_directories(model_path.parent_path());
  save_model(t.model, model_path);

  std::string log;
  for (const auto& r : t.result.log)
    log += json{{"epoch", r.epoch},
                {"expansion_total", r.expansion_total},
                {"contraction_total", r.contraction_total},
                {"total", r.total},
                {"val_total", r.val_total}}
               .dump() +
           "\n";
  const fs::path log_path = sibling(model_path, ".log.jsonl");
  write_text(log_path, log);
  write_manifest(sibling(model_path, ".manifest.json"), "train", o, {o.data},
                 {model_path.string(), log_path.string()});

  for (int id : t.result.near_singular_classes)
    err << "warning: class " << id << " matrix is near singular (smallest singular value <= 1e-10)\n";
  if (t.result.stats.near_singular_radius)
    err << "note: " << t.result.stats.near_singular_radius << " gradient terms clamped at r ~ 0\n";
  out << "trained " << t.model.boundaries.size() << " ellipsoids in n=" << t.model.boundaries.dim() << " ("
      << t.result.log.size() << " epochs, best " << t.result.best_epoch << ")\n";
  return 0;
}

inline LabeledDataset load_test(const Options& o) {
  if (!o.test.empty()) return load_dataset(o.test);
  if (o.data.empty()) throw UsageError("eval needs --data DIR or --test FILE");
  return load_dataset(fs::path(o.data) / "test.embd");
}

inline int cmd_eval(const Options& o, std::ostream& out) {
  if (o.format != "json" && o.format != "csv") throw UsageError("--format must be json or csv");
  const Model model = load_model(o.model);
  const LabeledDataset test = prepare_test(model, load_test(o));
  const EvalReport report = evaluate(model.boundaries, test);
  std::string text;
  if (o.format == "csv")
    text = fmt_num(o.kcr) + "," + std::to_string(o.seed) + "," + fmt_num(report.macro_f1) + "," +
           fmt_num(report.accuracy) + "\n";
  else
    text = report_to_json(report, o.kcr, o.seed).dump(2) + "\n";
  emit(text, o.out, out);
  return 0;
}

inline const std::vector<double>& cf_grid() {
  static const std::vector<double> grid{0.8, 0.9, 0.95, 0.975, 0.9875, 1.0};
  return grid;
}

inline int cmd_ablate_ball(const Options& o, std::ostream& out) {
  if (o.format != "json" && o.format != "csv") throw UsageError("--format must be json or csv");
  const DataSplits d = load_splits(o.data, true);
  const KcrSplit split = known_view(d, o.kcr, o.seed);
  Model model;
  LabeledDataset train_space = split.train;
  if (!o.model.empty()) {
    model = load_model(o.model);
    if (model.projection) train_space = project_dataset(split.train, *model.projection);
  } else {
    Trained t = train_model(split, o);
    model = std::move(t.model);
    train_space = std::move(t.train);
  }
  const LabeledDataset test = prepare_test(model, d.test);
  ELIDECIDE_REQUIRE(train_space.dim == model.boundaries.dim(), ErrorKind::DimensionMismatch,
                    "model n=" + std::to_string(model.boundaries.dim()) + " vs data n=" +
                        std::to_string(train_space.dim));

  json rows = json::array();
  std::string csv = "method,cf,macro_f1,accuracy\n";
  for (double cf : cf_grid()) {
    const BoundarySet balls = balls_to_boundary_set(cf_balls(train_space, cf), model_ids(model.boundaries));
    const EvalReport r = evaluate(balls, test);
    rows.push_back({{"method", "ball"}, {"cf", cf}, {"macro_f1", r.macro_f1}, {"accuracy", r.accuracy}});
    csv += "ball," + fmt_num(cf) + "," + fmt_num(r.macro_f1) + "," + fmt_num(r.accuracy) + "\n";
  }
  const EvalReport r = evaluate(model.boundaries, test);
  rows.push_back({{"method", "ellipsoid"}, {"cf", nullptr}, {"macro_f1", r.macro_f1}, {"accuracy", r.accuracy}});
  csv += "ellipsoid,," + fmt_num(r.macro_f1) + "," + fmt_num(r.accuracy) + "\n";
  emit(o.format == "csv" ? csv : json{{"kcr", o.kcr}, {"seed", o.seed}, {"rows", rows}}.dump(2) + "\n", o.out, out);
  return 0;
}

inline int cmd_ablate_loss(const Options& o, std::ostream& out) {
  if (o.format != "json" && o.format != "csv") throw UsageError("--format must be json or csv");
  const DataSplits d = load_splits(o.data, true);
  const KcrSplit split = known_view(d, o.kcr, o.seed);
  json rows = json::array();
  std::string csv = "neg_loss,macro_f1,accuracy\n";
  for (const char* name : {"adb", "clab", "adbgen", "elidecide"}) {
    Options variant = o;
    variant.neg_loss = name;
    const Trained t = train_model(split, variant);
    const EvalReport r = evaluate(t.model.boundaries, prepare_test(t.model, d.test));
    rows.push_back({{"neg_loss", name}, {"macro_f1", r.macro_f1}, {"accuracy", r.accuracy}});
    csv += std::string(name) + "," + fmt_num(r.macro_f1) + "," + fmt_num(r.accuracy) + "\n";
  }
  emit(o.format == "csv" ? csv : json{{"kcr", o.kcr}, {"seed", o.seed}, {"rows", rows}}.dump(2) + "\n", o.out, out);
  return 0;
}

inline void add_training_flags(CLI::App* sub, Options& o) {
  sub->add_option("--kcr", o.kcr, "Known class ratio in (0, 1]");
  sub->add_option("--scl-epochs", o.scl_epochs, "Contrastive refinement epochs for the projection head");
  sub->add_option("--scl-lr", o.scl_lr, "Projection head learning rate");
  sub->add_option("--scl-batch-size", o.scl_batch_size, "Projection head batch size");
  sub->add_option("--tau", o.tau, "Contrastive temperature");
  sub->add_option("--sigma", o.sigma, "Augmentation noise std-dev");
  sub->add_option("--proj-dim", o.proj_dim, "Projection output dimension (default: input dimension)");
  sub->add_option("--epochs", o.epochs, "Maximum boundary training epochs");
  sub->add_option("--batch-size", o.batch_size, "Boundary training batch size");
  sub->add_option("--lr", o.lr, "Boundary learning rate");
  sub->add_option("--beta", o.beta, "Contraction penalty strength");
  sub->add_option("--mix-p", o.mix_p, "Samples mixed per pseudo-open negative");
  sub->add_option("--mix-alpha", o.mix_alpha, "Dirichlet concentration for mixing weights");
  sub->add_option("--neg-loss", o.neg_loss, "Negative loss")
      ->check(CLI::IsMember({"elidecide", "adb", "clab", "adbgen"}));
  sub->add_option("--patience", o.patience, "Early-stopping patience in epochs");
}

}  // namespace detail

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  using namespace detail;
  Options o;

  // config file first, so explicit flags win
  for (std::size_t i = 0; i + 1 < args.size(); ++i) {
    if (args[i] == "--config") {
      try {
        apply_config(o, read_json(args[i + 1]));
      } catch (const UsageError& ex) {
        err << "error: " << ex.what() << "\n";
        return 2;
      } catch (const Error& ex) {
        err << "error: " << ex.what() << "\n";
        return 2;
      }
    }
  }

  CLI::App app{"Ellipsoid decision boundaries for open-world classification"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  app.set_version_flag("--version", kVersion);

  auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic anisotropic cluster benchmark");
  gen->add_option("--scenario", o.scenario, "Scenario name (aniso-k4, iso-k4)");
  gen->add_option("--spec", o.spec, "Cluster spec JSON (alternative to --scenario)");
  gen->add_option("--out", o.out, "Output directory")->required(o.out.empty());

  auto* train = app.add_subcommand("train", "Fit ellipsoid boundaries");
  train->add_option("--data", o.data, "Directory with train.embd and val.embd")->required(o.data.empty());
  train->add_option("--out", o.out, "Model JSON path")->required(o.out.empty());
  add_training_flags(train, o);

  auto* eval = app.add_subcommand("eval", "Evaluate a model on test data");
  eval->add_option("--model", o.model, "Model JSON path")->required(o.model.empty());
  eval->add_option("--data", o.data, "Directory with test.embd");
  eval->add_option("--test", o.test, "Test EMBD file (overrides --data)");
  eval->add_option("--out", o.out, "Report path (default: stdout)");
  eval->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"json", "csv"}));
  eval->add_option("--kcr", o.kcr, "Known class ratio recorded in the report");

  auto* ball = app.add_subcommand("ablate-ball", "Compare coverage-fraction balls against the ellipsoid model");
  ball->add_option("--data", o.data, "Directory with train/val/test EMBD files")->required(o.data.empty());
  ball->add_option("--model", o.model, "Trained model (trained on the fly when omitted)");
  ball->add_option("--out", o.out, "Table path (default: stdout)");
  ball->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"json", "csv"}));
  add_training_flags(ball, o);

  auto* loss = app.add_subcommand("ablate-loss", "Train with each negative loss and compare");
  loss->add_option("--data", o.data, "Directory with train/val/test EMBD files")->required(o.data.empty());
  loss->add_option("--out", o.out, "Table path (default: stdout)");
  loss->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"json", "csv"}));
  add_training_flags(loss, o);

  for (auto* sub : {gen, train, eval, ball, loss}) {
    sub->add_option("--seed", o.seed, "Master seed");
    sub->add_option("--config", o.config, "JSON config file with the same keys as the flags");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    return app.exit(ex, out, err) == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_synth(o, out);
    if (train->parsed()) return cmd_train(o, out, err);
    if (eval->parsed()) return cmd_eval(o, out);
    if (ball->parsed()) return cmd_ablate_ball(o, out);
    if (loss->parsed()) return cmd_ablate_loss(o, out);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << "\n" << app.help();
    return 2;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return 1;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace elidecide::cli

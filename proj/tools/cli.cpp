#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "pedintent/annotations.hpp"
#include "pedintent/checkpoint.hpp"
#include "pedintent/errors.hpp"
#include "pedintent/diagnostics.hpp"
#include "pedintent/metrics.hpp"
#include "pedintent/synthetic.hpp"

namespace pedintent::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kConfigFile = "config.json";
constexpr const char* kModelFile = "model.ckpt";
constexpr const char* kEnsembleFile = "ensemble.ckpt";
constexpr const char* kHistoryFile = "history.csv";
constexpr const char* kMetricsFile = "metrics.csv";
constexpr const char* kAnnotationsFile = "annotations.jsonl";
constexpr const char* kFramesFile = "frames.pvf";

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty()) return p;
  return fs::weakly_canonical(p.is_absolute() ? p : base / p);
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

void prepare_out(const fs::path& out) {
  if (out.empty()) throw ConfigError("an output directory is required (--out)");
  fs::create_directories(out);
}

}  // namespace

// ---- RunConfig -------------------------------------------------------------------

ClipConfig RunConfig::clip_config() const {
  ClipConfig c;
  c.local_context = model.visual(VisualInput::kLocalContext).has_value();
  c.local_surround = model.visual(VisualInput::kLocalSurround).has_value();
  c.global_context = model.visual(VisualInput::kGlobalContext).has_value();
  c.size = clip_size;
  c.enlarge_ratio = enlarge_ratio;
  return c;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  window.validate();
  if (clip_size.height == 0 || clip_size.width == 0) throw ConfigError("clip_size must be positive");
  if (!(enlarge_ratio > 0.0)) throw ConfigError("enlarge_ratio must be positive");
}

RunConfig run_config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig c;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "model") c.model = model_spec_from_json(v);
      else if (key == "train") c.train = train_config_from_json(v);
      else if (key == "annotations") c.annotations = resolve(v.get<std::string>(), base_dir);
      else if (key == "frames") c.frames = v.is_null() ? fs::path{} : resolve(v.get<std::string>(), base_dir);
      else if (key == "obs_len") c.window.obs_len = v.get<int>();
      else if (key == "stride") c.window.stride = v.get<int>();
      else if (key == "tte_range") {
        auto r = v.get<std::vector<int>>();
        if (r.size() != 2) throw ConfigError("tte_range must be [lo, hi]");
        c.window.tte_lo = r[0];
        c.window.tte_hi = r[1];
      } else if (key == "balance") c.balance = v.get<bool>();
      else if (key == "clip_size") {
        if (v.is_number()) {
          c.clip_size = {v.get<std::size_t>(), v.get<std::size_t>()};
        } else {
          auto s = v.get<std::vector<std::size_t>>();
          if (s.size() != 2) throw ConfigError("clip_size must be N or [height, width]");
          c.clip_size = {s[0], s[1]};
        }
      } else if (key == "enlarge_ratio") c.enlarge_ratio = v.get<double>();
      else if (key == "out") c.out = resolve(v.get<std::string>(), base_dir);
      else if (key == "members" || key == "kind") continue;  // ensemble snapshots
      else throw ConfigError("unknown config field '" + key + "'");
    } catch (const json::exception& e) {
      throw ConfigError("config field '" + key + "': " + e.what());
    }
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  return run_config_from_json(read_json(path), fs::absolute(path).parent_path());
}

json to_json(const RunConfig& c) {
  return {{"model", to_json(c.model)},
          {"train", to_json(c.train)},
          {"annotations", c.annotations.string()},
          {"frames", c.frames.empty() ? json(nullptr) : json(c.frames.string())},
          {"obs_len", c.window.obs_len},
          {"tte_range", {c.window.tte_lo, c.window.tte_hi}},
          {"stride", c.window.stride},
          {"balance", c.balance},
          {"clip_size", {c.clip_size.height, c.clip_size.width}},
          {"enlarge_ratio", c.enlarge_ratio},
          {"out", c.out.string()}};
}

// ---- data --------------------------------------------------------------------------

namespace {

struct Dataset {
  std::vector<PedestrianTrack> tracks;
  std::unique_ptr<FrameStore> frames;
};

Dataset load_dataset(const fs::path& annotations, const fs::path& frames, bool need_frames) {
  if (annotations.empty()) throw ConfigError("no annotations path given");
  if (!fs::exists(annotations)) throw DataError("annotations file not found: " + annotations.string());
  Dataset d;
  d.tracks = load_annotations(annotations);
  if (need_frames) {
    if (frames.empty()) throw ConfigError("the model has visual branches but no frames path is configured");
    d.frames = std::make_unique<FrameStore>(load_frames(frames));
  }
  return d;
}

std::vector<ObservationWindow> windows_for(const Dataset& d, Split split, const WindowConfig& w,
                                           const ClipConfig& c) {
  return build_windows(select_split(d.tracks, split), w, d.frames.get(), c);
}

// --data may be a directory written by `generate` or an annotations file.
void locate_data(const fs::path& data, fs::path& annotations, fs::path& frames) {
  if (fs::is_directory(data)) {
    annotations = data / kAnnotationsFile;
    if (fs::exists(data / kFramesFile)) frames = data / kFramesFile;
  } else {
    annotations = data;
    const auto sibling = data.parent_path() / kFramesFile;
    if (fs::exists(sibling)) frames = sibling;
  }
}

std::vector<int> labels_of(const std::vector<ObservationWindow>& ws) {
  std::vector<int> out;
  for (const auto& w : ws) out.push_back(w.label);
  return out;
}

struct LoadedModel {
  RunConfig cfg;
  Model<float> model;
};

LoadedModel load_model(const fs::path& checkpoint) {
  if (!fs::exists(checkpoint)) throw LoadError("checkpoint not found: " + checkpoint.string());
  const auto cfg_path = fs::absolute(checkpoint).parent_path() / kConfigFile;
  if (!fs::exists(cfg_path)) throw LoadError("no " + std::string(kConfigFile) + " next to " + checkpoint.string());
  RunConfig cfg = load_run_config(cfg_path);
  auto model = Model<float>::build(cfg.model);
  model.load_state(load_checkpoint(checkpoint));
  return {std::move(cfg), std::move(model)};
}

void print_epoch(std::ostream& out, const EpochRecord& e) {
  out << "epoch " << e.epoch << "  train_loss " << std::setprecision(6) << e.train_loss << "  val_loss "
      << e.val_loss << "  lr " << e.lr << "\n";
}

struct Members {
  std::vector<fs::path> paths;
  std::vector<LoadedModel> models;
};

Members load_members(const std::vector<fs::path>& paths) {
  if (paths.size() != kEnsembleMembers) {
    throw ConfigError("ensemble needs exactly 3 member checkpoints, got " + std::to_string(paths.size()));
  }
  Members m;
  for (const auto& p : paths) {
    m.paths.push_back(fs::weakly_canonical(p));
    m.models.push_back(load_model(p));
  }
  return m;
}

ClipConfig union_clips(const Members& m, const RunConfig& cfg) {
  ClipConfig c = cfg.clip_config();
  for (const auto& lm : m.models) {
    auto mc = lm.cfg.clip_config();
    c.local_context |= mc.local_context;
    c.local_surround |= mc.local_surround;
    c.global_context |= mc.global_context;
  }
  return c;
}

std::vector<std::array<double, 3>> member_probs(const Members& m, const std::vector<ObservationWindow>& ws) {
  std::vector<std::array<double, 3>> out(ws.size());
  if (ws.empty()) return out;
  for (std::size_t k = 0; k < kEnsembleMembers; ++k) {
    auto p = predict_all(m.models[k].model, ws);
    for (std::size_t i = 0; i < ws.size(); ++i) out[i][k] = p[i];
  }
  return out;
}

// ---- commands ------------------------------------------------------------------------

struct GenerateArgs {
  std::uint64_t seed = 0;
  std::size_t tracks = 100;
  std::string rule = "separable_motion";
  std::size_t track_frames = 46;
  std::size_t height = 32, width = 32;
  std::string out;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  SyntheticConfig cfg;
  cfg.seed = a.seed;
  cfg.n_tracks = a.tracks;
  cfg.rule = parse_rule(a.rule);
  cfg.track_frames = a.track_frames;
  cfg.frame_height = a.height;
  cfg.frame_width = a.width;
  const fs::path dir = a.out;
  prepare_out(dir);
  auto data = generate_synthetic(cfg);
  save_annotations(dir / kAnnotationsFile, data.tracks);
  save_frames(dir / kFramesFile, *data.frames);
  std::size_t windows = 0;
  for (const auto& t : data.tracks) windows += extract_windows(t, WindowConfig{}).size();
  out << "tracks " << data.tracks.size() << "\nwindows " << windows << "\nframes " << data.frames->frame_count()
      << "\n";
  return kOk;
}

struct TrainArgs {
  std::string config, out, checkpoint, annotations, frames;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
};

RunConfig resolve_config(const TrainArgs& a) {
  if (a.config.empty()) throw ConfigError("--config is required");
  RunConfig cfg = load_run_config(a.config);
  if (!a.out.empty()) cfg.out = fs::weakly_canonical(fs::absolute(a.out));
  if (!a.annotations.empty()) cfg.annotations = fs::weakly_canonical(fs::absolute(a.annotations));
  if (!a.frames.empty()) cfg.frames = fs::weakly_canonical(fs::absolute(a.frames));
  if (a.epochs) cfg.train.max_epochs = *a.epochs;
  if (a.seed) {
    cfg.train.seed = *a.seed;
    cfg.model.seed = *a.seed;
  }
  cfg.validate();
  return cfg;
}

void train_and_save(Model<float>& model, const RunConfig& cfg, bool fine, std::ostream& out) {
  const auto clips = cfg.clip_config();
  Dataset data = load_dataset(cfg.annotations, cfg.frames, clips.any());
  auto train_ws = windows_for(data, Split::kTrain, cfg.window, clips);
  auto val_ws = windows_for(data, Split::kVal, cfg.window, clips);
  if (train_ws.empty()) throw DataError("no training windows; check obs_len and tte_range against the tracks");
  if (cfg.balance) train_ws = resample_balance(train_ws, cfg.train.seed);
  out << "train windows " << train_ws.size() << ", val windows " << val_ws.size() << ", parameters "
      << model.parameter_count() << "\n";
  auto log = [&](const EpochRecord& e) { print_epoch(out, e); };
  TrainResult r = fine ? finetune(model, train_ws, val_ws, cfg.train, log) : train(model, train_ws, val_ws, cfg.train, log);
  save_checkpoint(cfg.out / kModelFile, model.state());
  r.history.save_csv(cfg.out / kHistoryFile);
  out << "best epoch " << r.best_epoch << " val_loss " << r.best_val_loss << (r.stopped_early ? " (early stop)" : "")
      << "\nwrote " << (cfg.out / kModelFile).string() << "\n";
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = resolve_config(a);
  prepare_out(cfg.out);
  write_json(cfg.out / kConfigFile, to_json(cfg));
  auto model = Model<float>::build(cfg.model);
  train_and_save(model, cfg, false, out);
  return kOk;
}

int cmd_finetune(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = resolve_config(a);
  auto base = load_model(a.checkpoint);
  cfg.model = base.cfg.model;
  cfg.train.use_class_weights = false;
  cfg.train.plateau_factor = 0.1;
  prepare_out(cfg.out);
  write_json(cfg.out / kConfigFile, to_json(cfg));
  train_and_save(base.model, cfg, true, out);
  return kOk;
}

struct EnsembleArgs {
  std::vector<std::string> members;
  std::string config, out;
};

int cmd_ensemble(const EnsembleArgs& a, std::ostream& out) {
  TrainArgs ta;
  ta.config = a.config;
  ta.out = a.out;
  RunConfig cfg = resolve_config(ta);
  std::vector<fs::path> paths(a.members.begin(), a.members.end());
  std::vector<std::uint64_t> before;
  for (const auto& p : paths) {
    if (!fs::exists(p)) throw LoadError("member checkpoint not found: " + p.string());
    before.push_back(file_fingerprint(p));
  }
  Members members = load_members(paths);
  prepare_out(cfg.out);
  json snapshot = to_json(cfg);
  snapshot["kind"] = "ensemble";
  snapshot["members"] = json::array();
  for (const auto& p : members.paths) snapshot["members"].push_back(p.string());
  write_json(cfg.out / kConfigFile, snapshot);

  const ClipConfig clips = union_clips(members, cfg);
  Dataset data = load_dataset(cfg.annotations, cfg.frames, clips.any());
  auto train_ws = windows_for(data, Split::kTrain, cfg.window, clips);
  auto val_ws = windows_for(data, Split::kVal, cfg.window, clips);
  if (train_ws.empty()) throw DataError("no training windows for the ensemble head");
  if (cfg.balance) train_ws = resample_balance(train_ws, cfg.train.seed);
  auto r = train_ensemble_head(member_probs(members, train_ws), labels_of(train_ws), member_probs(members, val_ws),
                               labels_of(val_ws), cfg.train, [&](const EpochRecord& e) { print_epoch(out, e); });
  for (std::size_t i = 0; i < paths.size(); ++i) {
    if (file_fingerprint(paths[i]) != before[i]) {
      throw DeterminismError("member checkpoint " + paths[i].string() + " changed during ensemble training");
    }
  }
  save_checkpoint(cfg.out / kEnsembleFile, r.head.state());
  r.train.history.save_csv(cfg.out / kHistoryFile);
  out << "head w [" << r.head.w[0] << ", " << r.head.w[1] << ", " << r.head.w[2] << "] b " << r.head.b
      << "\nmembers unchanged\nwrote " << (cfg.out / kEnsembleFile).string() << "\n";
  return kOk;
}

struct EvalArgs {
  std::string checkpoint, data, split = "test", out, frames, pid;
  std::int64_t frame = 0;
};

// Scores from a model or an ensemble checkpoint on the given windows.
struct Scorer {
  RunConfig cfg;
  std::optional<Model<float>> model;
  std::optional<Members> members;
  EnsembleHead head;

  ClipConfig clips() const { return members ? union_clips(*members, cfg) : cfg.clip_config(); }
  std::vector<double> score(const std::vector<ObservationWindow>& ws) const {
    if (model) return predict_all(*model, ws);
    std::vector<double> out;
    for (const auto& row : member_probs(*members, ws)) out.push_back(head.predict(row));
    return out;
  }
};

Scorer load_scorer(const fs::path& checkpoint) {
  if (!fs::exists(checkpoint)) throw LoadError("checkpoint not found: " + checkpoint.string());
  const auto cfg_path = fs::absolute(checkpoint).parent_path() / kConfigFile;
  if (!fs::exists(cfg_path)) throw LoadError("no " + std::string(kConfigFile) + " next to " + checkpoint.string());
  const json j = read_json(cfg_path);
  Scorer s;
  s.cfg = run_config_from_json(j, cfg_path.parent_path());
  if (j.value("kind", "") == "ensemble") {
    std::vector<fs::path> paths;
    for (const auto& p : j.at("members")) paths.emplace_back(p.get<std::string>());
    s.members = load_members(paths);
    s.head = EnsembleHead::from_state(load_checkpoint(checkpoint));
  } else {
    s.model = Model<float>::build(s.cfg.model);
    s.model->load_state(load_checkpoint(checkpoint));
  }
  return s;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  Scorer s = load_scorer(a.checkpoint);
  fs::path annotations, frames;
  locate_data(a.data, annotations, frames);
  if (!a.frames.empty()) frames = a.frames;
  const auto clips = s.clips();
  Dataset data = load_dataset(annotations, frames, clips.any());
  auto ws = windows_for(data, parse_split(a.split), s.cfg.window, clips);
  if (ws.empty()) throw DataError("no windows in split '" + a.split + "'");
  auto report = evaluate(s.score(ws), labels_of(ws));
  const fs::path dir = a.out.empty() ? fs::path(".") : fs::path(a.out);
  prepare_out(dir);
  report.save_csv(dir / kMetricsFile);
  out << "windows " << ws.size() << "\n" << report.to_csv();
  return kOk;
}

int cmd_predict(const EvalArgs& a, std::ostream& out) {
  Scorer s = load_scorer(a.checkpoint);
  fs::path annotations, frames;
  locate_data(a.data, annotations, frames);
  if (!a.frames.empty()) frames = a.frames;
  const auto clips = s.clips();
  Dataset data = load_dataset(annotations, frames, clips.any());
  auto it = std::find_if(data.tracks.begin(), data.tracks.end(),
                         [&](const PedestrianTrack& t) { return t.pedestrian_id == a.pid; });
  if (it == data.tracks.end()) throw DataError("pedestrian '" + a.pid + "' not found");
  const auto tte = it->event_frame - a.frame;
  if (tte < 0) throw WindowError("frame " + std::to_string(a.frame) + " lies after the event frame");
  WindowConfig w = s.cfg.window;
  w.tte_lo = w.tte_hi = static_cast<int>(tte);
  auto ws = build_windows({*it}, w, data.frames.get(), clips);
  if (ws.empty()) {
    throw WindowError("track " + a.pid + " lacks the " + std::to_string(w.obs_len) + " frames ending at " +
                      std::to_string(a.frame));
  }
  const double p = s.score(ws)[0];
  out << std::setprecision(6) << "probability " << p << "\ncrossing " << (p >= 0.5 ? 1 : 0) << "\n";
  return kOk;
}

struct GradcheckArgs {
  std::string config;
  double eps = 1e-5;
  std::string precision = "f64";
  std::optional<double> tolerance;
  std::size_t max_elements = 4;
  std::uint64_t seed = 0;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  if (a.config.empty()) throw ConfigError("--config is required");
  const json j = read_json(a.config);
  const ModelSpec spec =
      j.is_object() && j.contains("model") ? model_spec_from_json(j.at("model")) : model_spec_from_json(j);
  spec.validate();
  if (a.eps < 1e-6 || a.eps > 1e-3) throw ConfigError("--eps must lie in [1e-6, 1e-3]");
  if (a.precision != "f64" && a.precision != "f32" && a.precision != "both") {
    throw ConfigError("--precision must be f64, f32 or both");
  }
  if (a.tolerance && a.precision == "both") throw ConfigError("--tolerance needs a single precision");

  GradCheckOptions opts;
  opts.eps = a.eps;
  opts.max_elements_per_tensor = a.max_elements;
  opts.sample_seed = a.seed;
  const auto check = check_model_gradients(spec, opts, a.seed);
  std::vector<std::pair<std::string, const GradCheckReport*>> reports;
  if (a.precision != "f32") reports.emplace_back("f64", &check.report.f64);
  if (a.precision != "f64") reports.emplace_back("f32", &check.report.f32);
  bool ok = true;
  for (const auto& [prec, rp] : reports) {
    const auto& report = *rp;
    const double tol = a.tolerance.value_or(prec == "f32" ? 1e-3 : 1e-5);
    out << std::setprecision(3) << "checked " << report.checked << " elements over " << check.tensors
        << " tensors (" << prec << ")\nmax rel error " << report.max_rel_error << "\nmean rel error "
        << report.mean_rel_error << "\ntolerance " << tol << "\n";
    if (report.checked > 0) {
      const auto worst = std::size_t(std::max_element(report.rel_errors.begin(), report.rel_errors.end()) -
                                     report.rel_errors.begin());
      out << std::setprecision(6) << "worst analytic " << report.analytic[worst] << " numeric "
          << report.numeric[worst] << "\n";
    }
    ok = ok && report.passed(tol);
  }
  out << (ok ? "PASS\n" : "FAIL\n");
  return ok ? kOk : kNumerical;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pedestrian crossing-intention prediction", "pedintent"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset (annotations + frames)");
  generate->add_option("--seed", gen.seed);
  generate->add_option("--tracks", gen.tracks)->check(CLI::PositiveNumber);
  generate->add_option("--rule", gen.rule)->check(CLI::IsMember({"separable_motion", "separable_visual", "random"}));
  generate->add_option("--track-frames", gen.track_frames);
  generate->add_option("--height", gen.height);
  generate->add_option("--width", gen.width);
  generate->add_option("--out", gen.out)->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a run config");
  train_cmd->add_option("--config", tr.config)->required();
  train_cmd->add_option("--out", tr.out);
  train_cmd->add_option("--annotations", tr.annotations);
  train_cmd->add_option("--frames", tr.frames);
  train_cmd->add_option("--epochs", tr.epochs);
  train_cmd->add_option("--seed", tr.seed);

  TrainArgs ft;
  auto* finetune_cmd = app.add_subcommand("finetune", "Continue training a checkpoint without class weights");
  finetune_cmd->add_option("--checkpoint", ft.checkpoint)->required();
  finetune_cmd->add_option("--config", ft.config)->required();
  finetune_cmd->add_option("--out", ft.out);
  finetune_cmd->add_option("--annotations", ft.annotations);
  finetune_cmd->add_option("--frames", ft.frames);
  finetune_cmd->add_option("--epochs", ft.epochs);

  EnsembleArgs en;
  auto* ensemble_cmd = app.add_subcommand("ensemble", "Train a sigmoid head over three frozen models");
  ensemble_cmd->add_option("--members", en.members)->required()->expected(3);
  ensemble_cmd->add_option("--config", en.config)->required();
  ensemble_cmd->add_option("--out", en.out);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on one data split");
  eval_cmd->add_option("--checkpoint", ev.checkpoint)->required();
  eval_cmd->add_option("--data", ev.data)->required();
  eval_cmd->add_option("--split", ev.split)->check(CLI::IsMember({"all", "train", "val", "test"}));
  eval_cmd->add_option("--frames", ev.frames);
  eval_cmd->add_option("--out", ev.out);

  EvalArgs pr;
  auto* predict_cmd = app.add_subcommand("predict", "Crossing probability for the window ending at one frame");
  predict_cmd->add_option("--checkpoint", pr.checkpoint)->required();
  predict_cmd->add_option("--data", pr.data)->required();
  predict_cmd->add_option("--pid", pr.pid)->required();
  predict_cmd->add_option("--frame", pr.frame)->required();
  predict_cmd->add_option("--frames", pr.frames);

  GradcheckArgs gc;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference check of all model gradients");
  gradcheck_cmd->add_option("--config", gc.config)->required();
  gradcheck_cmd->add_option("--eps", gc.eps);
  gradcheck_cmd->add_option("--precision", gc.precision)->check(CLI::IsMember({"f64", "f32", "both"}));
  gradcheck_cmd->add_option("--tolerance", gc.tolerance);
  gradcheck_cmd->add_option("--max-elements", gc.max_elements);
  gradcheck_cmd->add_option("--seed", gc.seed);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (generate->parsed()) return cmd_generate(gen, out);
    if (train_cmd->parsed()) return cmd_train(tr, out);
    if (finetune_cmd->parsed()) return cmd_finetune(ft, out);
    if (ensemble_cmd->parsed()) return cmd_ensemble(en, out);
    if (eval_cmd->parsed()) return cmd_eval(ev, out);
    if (predict_cmd->parsed()) return cmd_predict(pr, out);
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(gc, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const DeterminismError& e) {
    err << "error: " << e.what() << "\n";
    return kNumerical;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace pedintent::cli

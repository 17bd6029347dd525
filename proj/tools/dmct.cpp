// dmct: simulate, train, track, evaluate and benchmark from the command line.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dmct/dmct.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

#ifndef DMCT_DEFAULT_DATA_DIR
#define DMCT_DEFAULT_DATA_DIR "data"
#endif

fs::path data_dir() {
  if (const char* env = std::getenv("DMCT_DATA_DIR"); env && *env) return env;
  return DMCT_DEFAULT_DATA_DIR;
}

/// Accepts a path, a path relative to the data directory, or a bare scenario
/// name such as "clean_4cam".
fs::path resolve_scenario(const fs::path& p) {
  if (p.empty()) throw dmct::ConfigError("no scenario given (use --scenario or a config file)");
  for (const fs::path& c : {p, data_dir() / p, data_dir() / "scenarios" / p, data_dir() / "scenarios" / (p.string() + ".json")})
    if (fs::is_regular_file(c)) return c;
  throw dmct::DataError("scenario not found: " + p.string());
}

fs::path resolve_file(const fs::path& p) {
  if (fs::exists(p) || p.is_absolute()) return p;
  if (fs::exists(data_dir() / p)) return data_dir() / p;
  return p;
}

// Flags shared by the pipeline subcommands. Values land in a JSON object with
// the config-file key names so that flags override the file key by key.
struct Overrides {
  std::string config;
  json flags = json::object();

  void attach(CLI::App& app, bool training, bool tracking) {
    app.add_option("--config", config, "Pipeline config JSON (defaults < file < flags)");
    str(app, "--scenario", "scenario", "Scenario JSON path or bundled scenario name");
    str(app, "--rig", "rig", "Rig JSON overriding the scenario's cameras");
    num<int>(app, "--frames", "frames", "Process only the first N frames");
    num<double>(app, "--min-score", "min_score", "Local-maxima score floor in [0,1]");
    num<double>(app, "--min-separation", "min_separation", "Minimum proposal separation in meters");
    num<double>(app, "--label-iou", "label_iou", "IoU threshold I_T for labeling proposals");
    num<double>(app, "--box-side", "box_side", "Ground box edge length in meters");
    num<int>(app, "--history", "history", "Glimpse history length n");
    num<int>(app, "--patch-radius", "patch_radius", "Glimpse patch radius in cells");
    auto* d = app.add_option_function<std::vector<int>>(
        "--dilations", [this](const std::vector<int>& v) { flags["dilations"] = v; }, "Glimpse dilations, oldest first (n+1 values)");
    d->delimiter(',');
    str(app, "--fusion", "fusion", "Fusion mode: avg or stack");
    if (training) {
      num<int>(app, "--epochs", "epochs", "Training epochs");
      num<double>(app, "--learning-rate", "learning_rate", "Initial gradient step");
      num<double>(app, "--l2", "l2", "L2 regularization weight");
      num<double>(app, "--train-fraction", "train_fraction", "Fraction of frames used for training");
    }
    if (tracking) {
      str(app, "--classifier", "classifier", "Glimpse classifier JSON (omit to accept every proposal)");
      num<double>(app, "--threshold", "decision_threshold", "Classifier decision threshold");
      num<double>(app, "--gate", "gate_radius", "Gating radius d_L in meters");
      num<double>(app, "--miss-penalty", "miss_penalty", "Coasting cost in meters");
      num<int>(app, "--max-misses", "max_misses", "Consecutive misses before a trajectory is retired");
      num<double>(app, "--velocity-decay", "velocity_decay", "EMA decay of the velocity estimate");
      app.add_flag_function("--color,!--no-color", [this](std::int64_t n) { flags["color"] = n > 0; },
                            "Add color-histogram costs to association");
      num<double>(app, "--color-weight", "color_weight", "Weight of the color term");
      num<int>(app, "--histogram-bins", "histogram_bins", "Color histogram bins per channel");
      num<double>(app, "--eval-iou", "eval_iou", "IoU threshold for evaluation matches");
      app.add_flag_function("--include-coasted", [this](std::int64_t n) { flags["include_coasted"] = n > 0; },
                            "Keep coasted (unmatched) states in outputs and evaluation");
      num<int>(app, "--bench-frames", "bench_frames", "Timed frames for benchmarking");
      num<int>(app, "--bench-warmup", "bench_warmup", "Untimed warm-up frames for benchmarking");
    }
  }

  dmct::PipelineConfig resolve() const {
    dmct::PipelineConfig cfg;
    if (!config.empty()) {
      const fs::path p = resolve_file(config);
      dmct::apply_config_json(cfg, dmct::read_json_file(p), p.parent_path());
    }
    dmct::apply_config_json(cfg, flags, fs::current_path());
    if (!cfg.scenario.empty()) cfg.scenario = resolve_scenario(flags.contains("scenario") ? fs::path(flags["scenario"].get<std::string>()) : cfg.scenario);
    cfg.validate();
    return cfg;
  }

 private:
  void str(CLI::App& app, const char* name, const char* key, const char* help) {
    app.add_option_function<std::string>(name, [this, key](const std::string& v) { flags[key] = v; }, help);
  }
  template <class T>
  void num(CLI::App& app, const char* name, const char* key, const char* help) {
    app.add_option_function<T>(name, [this, key](const T& v) { flags[key] = v; }, help);
  }
};

dmct::Scenario load_scenario_for(const dmct::PipelineConfig& cfg) {
  if (cfg.scenario.empty()) throw dmct::ConfigError("no scenario given (use --scenario or a config file)");
  auto sc = dmct::load_scenario(cfg.scenario);
  if (!cfg.rig.empty()) {
    sc.rig = dmct::load_rig(resolve_file(cfg.rig));
    sc.validate();
  }
  return sc;
}

int frames_for(const dmct::PipelineConfig& cfg, const dmct::Scenario& sc) {
  if (cfg.frames && *cfg.frames > sc.duration)
    throw dmct::ConfigError("--frames exceeds the scenario duration of " + std::to_string(sc.duration));
  return cfg.frames.value_or(sc.duration);
}

std::optional<dmct::GlimpseModel> load_classifier(const dmct::PipelineConfig& cfg) {
  if (cfg.classifier.empty()) return std::nullopt;
  return dmct::load_model(resolve_file(cfg.classifier));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw dmct::DataError("cannot write " + path.string());
  out << text;
}

void write_run_outputs(const fs::path& out, const dmct::PipelineRun& run, bool include_coasted) {
  fs::create_directories(out);
  {
    std::ofstream f(out / "tracks.csv");
    dmct::write_tracks_header(f);
    dmct::write_tracks(f, run.rows, include_coasted);
  }
  {
    std::ofstream f(out / "detections.csv");
    dmct::write_detections_header(f);
    for (const auto& fr : run.frames) dmct::write_detections(f, fr.frame, fr.detections);
  }
  {
    std::ofstream f(out / "plot.csv");
    dmct::write_plot_csv(f, run);
  }
  write_text(out / "report.json", dmct::report_to_json(run.report).dump(2) + "\n");
  write_text(out / "timing.json", dmct::timing_to_json(run.timing).dump(2) + "\n");
}

void write_truth_file(const fs::path& path, const dmct::Simulator& sim, int frames) {
  std::ofstream f(path);
  if (!f) throw dmct::DataError("cannot write " + path.string());
  dmct::write_truth_header(f);
  for (int i = 0; i < frames; ++i) dmct::write_truth(f, i, sim.truth_at(i));
}

// --- subcommands -------------------------------------------------------------

int cmd_simulate(const dmct::PipelineConfig& cfg, const fs::path& out, bool rgb, bool skip_maps) {
  const dmct::Simulator sim(load_scenario_for(cfg));
  const int frames = frames_for(cfg, sim.scenario());
  const auto& sc = sim.scenario();
  fs::create_directories(out / "maps");
  if (rgb) fs::create_directories(out / "rgb");
  dmct::save_rig(sc.rig, out / "rig.json");
  json manifest{{"name", sc.name},
                {"frames", frames},
                {"fps", sc.fps},
                {"grid", dmct::grid_to_json(sc.grid)},
                {"rig", "rig.json"},
                {"cameras", sc.rig.size()},
                {"maps", skip_maps ? json(nullptr) : json("maps")},
                {"rgb", rgb ? json("rgb") : json(nullptr)},
                {"truth", "truth.csv"}};
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
  std::ofstream truth(out / "truth.csv");
  dmct::write_truth_header(truth);
  char name[64];
  for (int f = 0; f < frames; ++f) {
    const auto sf = sim.generate(f, rgb);
    dmct::write_truth(truth, f, sf.truth);
    for (std::size_t c = 0; c < sf.views.size(); ++c) {
      std::snprintf(name, sizeof name, "f%06d_c%zu", f, c);
      if (!skip_maps) dmct::write_map(sf.views[c], out / "maps" / (std::string(name) + ".omap"));
      if (rgb) dmct::write_ppm(sf.rgb[c], out / "rgb" / (std::string(name) + ".ppm"));
    }
  }
  std::printf("wrote %d frames x %zu views to %s\n", frames, sc.rig.size(), out.string().c_str());
  return 0;
}

int cmd_train(const dmct::PipelineConfig& cfg, const fs::path& out, const std::string& source) {
  const dmct::Simulator sim(load_scenario_for(cfg));
  const int frames = frames_for(cfg, sim.scenario());
  const dmct::FeatureVariant variant{cfg.glimpse, dmct::feature_source_from_string(source)};
  const auto sets = dmct::generate_training_set(sim, cfg, std::span(&variant, 1), frames);
  const auto trained = dmct::train_variant(sets.front(), cfg);
  if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
  dmct::save_model(trained.model, out);
  std::printf("train: %zu proposals, accuracy %.4f\n", trained.train_size, trained.train_accuracy);
  std::printf("test:  %zu proposals (%zu positive, frames >= %d), accuracy %.4f\n", trained.test_size, trained.test_positives,
              sets.front().split_frame, trained.test_accuracy);
  std::printf("model: %s\n", out.string().c_str());
  return 0;
}

/// Tracks a directory written by `simulate`.
dmct::PipelineRun track_directory(const dmct::PipelineConfig& cfg, const fs::path& dir) {
  const auto manifest = dmct::read_json_file(dir / "manifest.json");
  if (manifest.at("maps").is_null()) throw dmct::DataError(dir.string() + " was simulated without maps");
  const auto rig = dmct::load_rig(dir / manifest.at("rig").get<std::string>());
  const auto grid = dmct::grid_from_json(manifest.at("grid"));
  int frames = manifest.at("frames").get<int>();
  if (cfg.frames) frames = std::min(frames, *cfg.frames);
  if (cfg.tracker.use_color && manifest.at("rgb").is_null()) throw dmct::DataError("--color needs RGB frames (simulate --rgb)");

  dmct::Pipeline pipe(cfg, rig, grid, load_classifier(cfg));
  const auto truth = dmct::read_track_csv(dir / manifest.at("truth").get<std::string>());
  dmct::MotAccumulator acc(cfg.eval);
  dmct::PipelineRun run;
  char name[64];
  for (int f = 0; f < frames; ++f) {
    std::vector<dmct::OccupancyMap> views;
    std::vector<dmct::RgbImage> rgb;
    for (std::size_t c = 0; c < rig.size(); ++c) {
      std::snprintf(name, sizeof name, "f%06d_c%zu", f, c);
      views.push_back(dmct::read_map(dir / "maps" / (std::string(name) + ".omap")));
      if (cfg.tracker.use_color) rgb.push_back(dmct::read_ppm(dir / "rgb" / (std::string(name) + ".ppm")));
    }
    auto res = pipe.process(f, views, rgb);
    dmct::FrameObjects pred;
    for (const auto& r : res.rows) {
      run.rows.push_back(r);
      if (r.matched || cfg.include_coasted) pred.add(r.id, r.position);
    }
    const auto it = truth.frames.find(f);
    run.correspondences.push_back(acc.update(f, it == truth.frames.end() ? dmct::FrameObjects{} : it->second, pred));
    run.timing.frames.push_back(res.times);
    res.rows.clear();
    run.frames.push_back(std::move(res));
  }
  run.report = acc.report();
  return run;
}

int cmd_track(const dmct::PipelineConfig& cfg, const fs::path& input, const fs::path& out) {
  dmct::PipelineRun run;
  if (!input.empty()) {
    run = track_directory(cfg, input);
  } else {
    const dmct::Simulator sim(load_scenario_for(cfg));
    run = dmct::run_pipeline(sim, {cfg, load_classifier(cfg)}, frames_for(cfg, sim.scenario()));
    fs::create_directories(out);
    write_truth_file(out / "truth.csv", sim, frames_for(cfg, sim.scenario()));
  }
  write_run_outputs(out, run, cfg.include_coasted);
  std::cout << dmct::format_report_table({{to_string(cfg.fusion) + std::string(cfg.tracker.use_color ? "+color" : ""), run.report}});
  std::cout << dmct::format_timing_table(run.timing);
  return 0;
}

int cmd_eval(const fs::path& gt, const fs::path& pred, const dmct::PipelineConfig& cfg, const fs::path& json_out) {
  const auto report = dmct::evaluate(dmct::read_track_csv(gt), dmct::read_track_csv(pred, cfg.include_coasted), cfg.eval);
  std::cout << dmct::format_report_table({{pred.stem().string(), report}});
  if (!json_out.empty()) write_text(json_out, dmct::report_to_json(report).dump(2) + "\n");
  return 0;
}

dmct::TimingProfile bench_once(const dmct::PipelineConfig& cfg, const dmct::Scenario& sc) {
  const int frames = cfg.bench_warmup + cfg.bench_frames;
  if (frames > sc.duration)
    throw dmct::ConfigError("scenario has " + std::to_string(sc.duration) + " frames, bench needs " + std::to_string(frames));
  const dmct::Simulator sim(sc);
  auto run = dmct::run_pipeline(sim, {cfg, load_classifier(cfg)}, frames);
  run.timing.frames.erase(run.timing.frames.begin(), run.timing.frames.begin() + cfg.bench_warmup);
  return run.timing;
}

int cmd_bench(const dmct::PipelineConfig& cfg, const std::vector<int>& cameras, const fs::path& out) {
  const auto base = load_scenario_for(cfg);
  json report = json::array();
  std::string csv = "cameras,stage,mean_ms,p50_ms,p90_ms,p99_ms,fps\n";
  const auto run_one = [&](const dmct::Scenario& sc, int count) {
    const auto timing = bench_once(cfg, sc);
    std::printf("cameras=%d views=%dx%d grid=%dx%d agents=%zu\n", count, sc.rig.front().calibration.image_size().width,
                sc.rig.front().calibration.image_size().height, sc.grid.rows, sc.grid.cols, sc.agents.size());
    std::cout << dmct::format_timing_table(timing) << '\n';
    auto j = dmct::timing_to_json(timing);
    j["cameras"] = count;
    report.push_back(j);
    char buf[200];
    for (std::size_t i = 0; i <= dmct::kStageCount; ++i) {
      const auto s = i < dmct::kStageCount ? timing.stage(i) : timing.total();
      std::snprintf(buf, sizeof buf, "%d,%s,%.4f,%.4f,%.4f,%.4f,%.2f\n", count, i < dmct::kStageCount ? dmct::kStageNames[i] : "total",
                    s.mean, s.p50, s.p90, s.p99, timing.fps());
      csv += buf;
    }
  };
  if (cameras.empty()) {
    run_one(base, static_cast<int>(base.rig.size()));
  } else {
    const auto& cam0 = base.rig.front().calibration;
    for (int n : cameras) {
      auto sc = base;
      sc.rig = dmct::make_ring_rig(n, sc.grid, cam0.center().z(), 1.0, cam0.image_size(), cam0.intrinsics()(0, 0));
      run_one(sc, n);
    }
  }
  if (!out.empty()) {
    fs::create_directories(out);
    write_text(out / "bench.json", report.dump(2) + "\n");
    write_text(out / "bench.csv", csv);
  }
  return 0;
}

int cmd_all(dmct::PipelineConfig cfg, const fs::path& out, bool train_model, const std::string& source) {
  fs::create_directories(out);
  if (train_model && cfg.classifier.empty()) {
    cmd_train(cfg, out / "glimpse.json", source);
    cfg.classifier = out / "glimpse.json";
    if (source == "stack") cfg.fusion = dmct::FusionMode::stack;
  }
  cmd_track(cfg, {}, out);
  std::printf("\n");
  cmd_eval(out / "truth.csv", out / "tracks.csv", cfg, out / "eval.json");
  std::printf("\n");
  return cmd_bench(cfg, {}, out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-camera people tracking: simulate, train, track, evaluate, benchmark"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "dmct 1.0.0");

  auto* sim = app.add_subcommand("simulate", "Generate per-view heatmaps, ground truth and RGB frames");
  Overrides sim_o;
  sim_o.attach(*sim, false, false);
  std::string sim_out = "sim_out";
  bool sim_rgb = false, sim_skip_maps = false;
  sim->add_option("--out", sim_out, "Output directory")->capture_default_str();
  sim->add_flag("--rgb", sim_rgb, "Also write PPM frames");
  sim->add_flag("--skip-maps", sim_skip_maps, "Write only ground truth (and RGB)");

  auto* tr = app.add_subcommand("train-glimpse", "Train the glimpse classifier on simulator proposals");
  Overrides tr_o;
  tr_o.attach(*tr, true, false);
  std::string tr_out = "glimpse.json", tr_source = "mean";
  tr->add_option("--out", tr_out, "Classifier JSON to write")->capture_default_str();
  tr->add_option("--source", tr_source, "Feature source: mean or stack")->capture_default_str();

  auto* tk = app.add_subcommand("track", "Run the online pipeline and write tracks, detections, report and timing");
  Overrides tk_o;
  tk_o.attach(*tk, false, true);
  std::string tk_out = "track_out", tk_input;
  tk->add_option("--out", tk_out, "Output directory")->capture_default_str();
  tk->add_option("--input", tk_input, "Directory written by simulate (instead of --scenario)");

  auto* ev = app.add_subcommand("eval", "Score a track CSV against ground truth");
  std::string ev_gt, ev_pred, ev_json;
  double ev_box = 1.0, ev_iou = 0.5;
  bool ev_coasted = false;
  ev->add_option("--gt", ev_gt, "Ground-truth CSV (frame,id,x_m,y_m[,matched])")->required();
  ev->add_option("--pred", ev_pred, "Predicted track CSV")->required();
  ev->add_option("--box-side", ev_box, "Ground box edge length in meters")->capture_default_str();
  ev->add_option("--eval-iou", ev_iou, "IoU threshold for matches")->capture_default_str();
  ev->add_flag("--include-coasted", ev_coasted, "Count coasted rows as predictions");
  ev->add_option("--json", ev_json, "Also write the report as JSON");

  auto* bn = app.add_subcommand("bench", "Measure steady-state throughput and per-stage latency");
  Overrides bn_o;
  bn_o.attach(*bn, false, true);
  std::vector<int> bn_cameras;
  std::string bn_out;
  bn->add_option("--cameras", bn_cameras, "Sweep ring rigs with these camera counts, e.g. 1,2,4,8")->delimiter(',');
  bn->add_option("--out", bn_out, "Directory for bench.json and bench.csv");

  auto* all = app.add_subcommand("all", "Train, track, evaluate and benchmark one scenario");
  Overrides all_o;
  all_o.attach(*all, true, true);
  std::string all_out = "dmct_out", all_source = "mean";
  bool all_no_train = false;
  all->add_option("--out", all_out, "Output directory")->capture_default_str();
  all->add_option("--source", all_source, "Feature source for training: mean or stack")->capture_default_str();
  all->add_flag("--no-train", all_no_train, "Skip training and accept every proposal");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(dmct::ErrorKind::config);
  }

  try {
    if (*sim) return cmd_simulate(sim_o.resolve(), sim_out, sim_rgb, sim_skip_maps);
    if (*tr) return cmd_train(tr_o.resolve(), tr_out, tr_source);
    if (*tk) {
      if (!tk_input.empty()) tk_o.flags.erase("scenario");
      return cmd_track(tk_o.resolve(), tk_input, tk_out);
    }
    if (*ev) {
      dmct::PipelineConfig cfg;
      cfg.eval.box_side = ev_box;
      cfg.eval.iou_threshold = ev_iou;
      cfg.include_coasted = ev_coasted;
      cfg.validate();
      return cmd_eval(ev_gt, ev_pred, cfg, ev_json);
    }
    if (*bn) return cmd_bench(bn_o.resolve(), bn_cameras, bn_out);
    if (*all) return cmd_all(all_o.resolve(), all_out, !all_no_train, all_source);
  } catch (const dmct::Error& e) {
    std::fprintf(stderr, "dmct: %s\n", e.what());
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "dmct: %s\n", e.what());
    return static_cast<int>(dmct::ErrorKind::runtime);
  }
  return 0;
}

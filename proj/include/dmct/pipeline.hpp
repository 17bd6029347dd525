#pragma once

// End-to-end online chain: fuse -> local maxima -> glimpse classification ->
// (color histograms) -> tracker step, plus evaluation against simulator
// ground truth and per-stage latency profiles.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmct/appearance.hpp"
#include "dmct/detect.hpp"
#include "dmct/error.hpp"
#include "dmct/fusion.hpp"
#include "dmct/glimpse.hpp"
#include "dmct/metrics.hpp"
#include "dmct/sim.hpp"
#include "dmct/tracker.hpp"

namespace dmct {

inline FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "avg" || s == "average") return FusionMode::average;
  if (s == "stack") return FusionMode::stack;
  throw ConfigError("unknown fusion mode '" + s + "' (expected avg or stack)");
}
inline const char* to_string(FusionMode m) { return m == FusionMode::average ? "avg" : "stack"; }

struct PipelineConfig {
  std::filesystem::path scenario;
  std::filesystem::path rig;         // overrides the scenario's rig when set
  std::filesystem::path classifier;  // accept-all when empty
  FusionMode fusion = FusionMode::average;
  DetectParams detect;
  TrackerParams tracker;
  EvalConfig eval;
  GlimpseConfig glimpse;  // used when training
  TrainOptions train;
  double train_fraction = 0.7;
  double decision_threshold = 0.5;
  int histogram_bins = 8;
  bool include_coasted = false;
  std::optional<int> frames;  // truncate the scenario
  int bench_frames = 500;
  int bench_warmup = 20;

  void validate() const {
    if (!(detect.min_score >= 0.0 && detect.min_score <= 1.0)) throw ConfigError("min_score must be in [0,1]");
    if (!(detect.min_separation_m >= 0.0)) throw ConfigError("min_separation must be non-negative");
    if (!(detect.box_side > 0.0)) throw ConfigError("box_side must be positive");
    if (!(detect.iou_threshold >= 0.0 && detect.iou_threshold <= 1.0)) throw ConfigError("label IoU threshold must be in [0,1]");
    if (!(decision_threshold >= 0.0 && decision_threshold <= 1.0)) throw ConfigError("decision threshold must be in [0,1]");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must be in (0,1)");
    if (train.epochs < 1 || !(train.learning_rate > 0.0) || !(train.l2 >= 0.0)) throw ConfigError("invalid training options");
    if (histogram_bins < 2) throw ConfigError("histogram_bins must be at least 2");
    if (frames && *frames < 1) throw ConfigError("frames must be positive");
    if (bench_frames < 1 || bench_warmup < 0) throw ConfigError("invalid bench frame counts");
    tracker.validate();
    eval.validate();
    glimpse.validate();
  }
};

/// Applies the keys of `j` on top of `cfg`; unknown keys are rejected.
/// Relative paths resolve against `base_dir`.
inline void apply_config_json(PipelineConfig& cfg, const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  detail::reject_unknown(j,
                         {"scenario", "rig", "classifier", "fusion", "gate_radius", "miss_penalty", "max_misses", "velocity_decay",
                          "color", "color_weight", "min_score", "min_separation", "label_iou", "box_side", "eval_iou", "history",
                          "patch_radius", "dilations", "decision_threshold", "include_coasted", "frames", "epochs",
                          "learning_rate", "l2", "train_fraction", "histogram_bins", "bench_frames", "bench_warmup"},
                         "pipeline config");
  const auto path = [&](const char* key) {
    std::filesystem::path p = j.at(key).get<std::string>();
    return p.is_relative() ? base_dir / p : p;
  };
  try {
    if (j.contains("scenario")) cfg.scenario = path("scenario");
    if (j.contains("rig")) cfg.rig = path("rig");
    if (j.contains("classifier")) cfg.classifier = path("classifier");
    if (j.contains("fusion")) cfg.fusion = fusion_mode_from_string(j.at("fusion").get<std::string>());
    if (j.contains("gate_radius")) cfg.tracker.gate_radius = j.at("gate_radius").get<double>();
    if (j.contains("miss_penalty")) cfg.tracker.miss_penalty = j.at("miss_penalty").get<double>();
    if (j.contains("max_misses")) cfg.tracker.max_misses = j.at("max_misses").get<int>();
    if (j.contains("velocity_decay")) cfg.tracker.velocity_decay = j.at("velocity_decay").get<double>();
    if (j.contains("color")) cfg.tracker.use_color = j.at("color").get<bool>();
    if (j.contains("color_weight")) cfg.tracker.color_weight = j.at("color_weight").get<double>();
    if (j.contains("min_score")) cfg.detect.min_score = j.at("min_score").get<double>();
    if (j.contains("min_separation")) cfg.detect.min_separation_m = j.at("min_separation").get<double>();
    if (j.contains("label_iou")) cfg.detect.iou_threshold = j.at("label_iou").get<double>();
    if (j.contains("box_side")) cfg.detect.box_side = cfg.eval.box_side = j.at("box_side").get<double>();
    if (j.contains("eval_iou")) cfg.eval.iou_threshold = j.at("eval_iou").get<double>();
    if (j.contains("history") || j.contains("patch_radius")) {
      const auto dil = cfg.glimpse.dilations;
      cfg.glimpse = GlimpseConfig::with_history(j.value("history", cfg.glimpse.history), j.value("patch_radius", cfg.glimpse.patch_radius));
      if (!j.contains("history")) cfg.glimpse.dilations = dil;
    }
    if (j.contains("dilations")) cfg.glimpse.dilations = j.at("dilations").get<std::vector<int>>();
    if (j.contains("decision_threshold")) cfg.decision_threshold = j.at("decision_threshold").get<double>();
    if (j.contains("include_coasted")) cfg.include_coasted = j.at("include_coasted").get<bool>();
    if (j.contains("frames")) cfg.frames = j.at("frames").get<int>();
    if (j.contains("epochs")) cfg.train.epochs = j.at("epochs").get<int>();
    if (j.contains("learning_rate")) cfg.train.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("l2")) cfg.train.l2 = j.at("l2").get<double>();
    if (j.contains("train_fraction")) cfg.train_fraction = j.at("train_fraction").get<double>();
    if (j.contains("histogram_bins")) cfg.histogram_bins = j.at("histogram_bins").get<int>();
    if (j.contains("bench_frames")) cfg.bench_frames = j.at("bench_frames").get<int>();
    if (j.contains("bench_warmup")) cfg.bench_warmup = j.at("bench_warmup").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed pipeline config: ") + e.what());
  }
}

// --- timing ------------------------------------------------------------------

inline constexpr const char* kStageNames[] = {"fuse", "detect", "classify", "appearance", "track"};
inline constexpr std::size_t kStageCount = std::size(kStageNames);

struct StageTimes {
  std::array<double, kStageCount> ms{};
  double total() const {
    double s = 0.0;
    for (double v : ms) s += v;
    return s;
  }
};

struct LatencyStats {
  double mean = 0.0, p50 = 0.0, p90 = 0.0, p99 = 0.0, max = 0.0;
};

/// Nearest-rank percentiles.
inline LatencyStats latency_stats(std::vector<double> samples) {
  LatencyStats s;
  if (samples.empty()) return s;
  std::sort(samples.begin(), samples.end());
  const auto rank = [&](double q) {
    const auto k = static_cast<std::size_t>(std::ceil(q * samples.size()));
    return samples[std::clamp<std::size_t>(k, 1, samples.size()) - 1];
  };
  for (double v : samples) s.mean += v;
  s.mean /= samples.size();
  s.p50 = rank(0.50);
  s.p90 = rank(0.90);
  s.p99 = rank(0.99);
  s.max = samples.back();
  return s;
}

struct TimingProfile {
  std::vector<StageTimes> frames;

  LatencyStats stage(std::size_t i) const {
    std::vector<double> v;
    for (const auto& f : frames) v.push_back(f.ms[i]);
    return latency_stats(std::move(v));
  }
  LatencyStats total() const {
    std::vector<double> v;
    for (const auto& f : frames) v.push_back(f.total());
    return latency_stats(std::move(v));
  }
  double fps() const {
    double ms = 0.0;
    for (const auto& f : frames) ms += f.total();
    return ms > 0.0 ? 1000.0 * frames.size() / ms : 0.0;
  }
};

inline nlohmann::json timing_to_json(const TimingProfile& t) {
  nlohmann::json j;
  j["frames"] = t.frames.size();
  j["fps"] = t.fps();
  const auto stats = [](const LatencyStats& s) {
    return nlohmann::json{{"mean_ms", s.mean}, {"p50_ms", s.p50}, {"p90_ms", s.p90}, {"p99_ms", s.p99}, {"max_ms", s.max}};
  };
  for (std::size_t i = 0; i < kStageCount; ++i) j["stages"][kStageNames[i]] = stats(t.stage(i));
  j["total"] = stats(t.total());
  return j;
}

inline std::string format_timing_table(const TimingProfile& t) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-11s %9s %9s %9s %9s\n", "stage", "mean_ms", "p50_ms", "p90_ms", "p99_ms");
  out += buf;
  const auto row = [&](const char* name, const LatencyStats& s) {
    std::snprintf(buf, sizeof buf, "%-11s %9.3f %9.3f %9.3f %9.3f\n", name, s.mean, s.p50, s.p90, s.p99);
    out += buf;
  };
  for (std::size_t i = 0; i < kStageCount; ++i) row(kStageNames[i], t.stage(i));
  row("total", t.total());
  std::snprintf(buf, sizeof buf, "throughput: %.1f frames/s over %zu frames\n", t.fps(), t.frames.size());
  out += buf;
  return out;
}

// --- online pipeline ---------------------------------------------------------

struct FrameResult {
  int frame = 0;
  std::vector<Detection> detections;
  std::vector<TrackRow> rows;
  StageTimes times;
};

/// Processes frames strictly in order; keeps only the fused maps the glimpse
/// history needs. Not thread-safe.
class Pipeline {
 public:
  Pipeline(const PipelineConfig& cfg, const Rig& rig, const GroundGrid& grid, std::optional<GlimpseModel> model = std::nullopt)
      : cfg_(cfg),
        grid_(grid),
        model_(std::move(model)),
        tracker_(cfg.tracker) {
    cfg_.validate();
    std::vector<Homography> homs;
    std::vector<ImageSize> sizes;
    for (const auto& c : rig) {
      homs.push_back(homography_from_calibration(c.calibration));
      sizes.push_back(c.calibration.image_size());
      cams_.push_back(c.calibration);
    }
    plan_.emplace(homs, sizes, grid);
    if (model_) {
      model_->threshold = cfg_.decision_threshold;
      if (model_->source == FeatureSource::stack) {
        if (cfg_.fusion != FusionMode::stack) throw ConfigError("a stacked-feature classifier needs --fusion stack");
        if (model_->channels != static_cast<int>(rig.size()))
          throw ConfigError("classifier was trained for " + std::to_string(model_->channels) + " cameras, rig has " +
                            std::to_string(rig.size()));
      }
    }
    keep_ = model_ ? static_cast<std::size_t>(model_->config.slots()) : 1;
  }

  FrameResult process(int frame, std::span<const OccupancyMap> views, std::span<const RgbImage> rgb = {}) {
    using clock = std::chrono::steady_clock;
    FrameResult out;
    out.frame = frame;
    auto t0 = clock::now();
    const auto lap = [&](std::size_t stage) {
      const auto t1 = clock::now();
      out.times.ms[stage] = std::chrono::duration<double, std::milli>(t1 - t0).count();
      t0 = t1;
    };

    history_.push_back(plan_->fuse(views, cfg_.fusion));
    while (history_.size() > keep_) history_.pop_front();
    lap(0);

    const double sep_cells = cfg_.detect.min_separation_m / grid_.cell_size;
    const auto proposals = local_maxima(history_.back(), cfg_.detect.min_score, sep_cells);
    lap(1);

    std::vector<const FusedMap*> hist;
    for (const auto& m : history_) hist.push_back(&m);
    out.detections = classify(proposals, hist, model_ ? &*model_ : nullptr);
    lap(2);

    std::vector<TrackInput> inputs;
    for (const auto& d : out.detections)
      if (d.accepted) inputs.push_back({d.proposal.position, std::nullopt});
    if (cfg_.tracker.use_color) {
      if (rgb.size() != cams_.size()) throw RuntimeError("color tracking needs one RGB frame per camera");
      for (auto& in : inputs) in.appearance = person_histogram(in.position, cams_, rgb, {}, cfg_.histogram_bins);
    }
    lap(3);

    out.rows = tracker_.step(inputs, frame).rows;
    lap(4);
    return out;
  }

  const PipelineConfig& config() const { return cfg_; }
  bool needs_rgb() const { return cfg_.tracker.use_color; }

 private:
  PipelineConfig cfg_;
  GroundGrid grid_;
  std::vector<CameraCalibration> cams_;
  std::optional<FusionPlan> plan_;
  std::optional<GlimpseModel> model_;
  Tracker tracker_;
  std::deque<FusedMap> history_;
  std::size_t keep_ = 1;
};

struct PipelineRun {
  std::vector<TrackRow> rows;
  std::vector<FrameResult> frames;  // detections and timings; rows duplicated above
  MotReport report;
  std::vector<FrameCorrespondence> correspondences;
  TimingProfile timing;
};

struct PipelineVariant {
  PipelineConfig config;
  std::optional<GlimpseModel> model;
};

inline TrackTable truth_table(const Simulator& sim, int frames) {
  TrackTable t;
  for (int f = 0; f < frames; ++f)
    for (const auto& a : sim.truth_at(f)) t.frames[f].add(a.id, a.position);
  return t;
}

inline TrackTable rows_table(std::span<const TrackRow> rows, bool include_coasted) {
  TrackTable t;
  for (const auto& r : rows)
    if (r.matched || include_coasted) t.frames[r.frame].add(r.id, r.position);
  return t;
}

/// Runs several pipeline variants in lockstep over one scenario, generating
/// each frame once. Frame generation is not timed.
inline std::vector<PipelineRun> run_pipelines(const Simulator& sim, std::span<const PipelineVariant> variants, int frames,
                                              bool keep_detections = true) {
  const auto& sc = sim.scenario();
  if (frames < 1 || frames > sc.duration) throw ConfigError("frame count outside the scenario duration");
  std::vector<Pipeline> pipes;
  bool rgb = false;
  for (const auto& v : variants) {
    pipes.emplace_back(v.config, sc.rig, sc.grid, v.model);
    rgb = rgb || pipes.back().needs_rgb();
  }
  std::vector<PipelineRun> runs(variants.size());
  std::vector<MotAccumulator> accs;
  for (const auto& v : variants) accs.emplace_back(v.config.eval);
  for (int f = 0; f < frames; ++f) {
    const SimFrame sf = sim.generate(f, rgb);
    FrameObjects gt;
    for (const auto& a : sf.truth) gt.add(a.id, a.position);
    for (std::size_t i = 0; i < pipes.size(); ++i) {
      auto res = pipes[i].process(f, sf.views, sf.rgb);
      FrameObjects pred;
      for (const auto& r : res.rows) {
        runs[i].rows.push_back(r);
        if (r.matched || variants[i].config.include_coasted) pred.add(r.id, r.position);
      }
      runs[i].correspondences.push_back(accs[i].update(f, gt, pred));
      runs[i].timing.frames.push_back(res.times);
      if (!keep_detections) res.detections.clear();
      res.rows.clear();
      runs[i].frames.push_back(std::move(res));
    }
  }
  for (std::size_t i = 0; i < runs.size(); ++i) runs[i].report = accs[i].report();
  return runs;
}

inline PipelineRun run_pipeline(const Simulator& sim, const PipelineVariant& variant, int frames) {
  return std::move(run_pipelines(sim, std::span(&variant, 1), frames).front());
}

/// Tidy plot data: one (metric, frame, value) row per frame and metric.
inline void write_plot_csv(std::ostream& os, const PipelineRun& run) {
  os << "metric,frame,value\n";
  char buf[96];
  for (std::size_t i = 0; i < run.frames.size(); ++i) {
    const auto& fr = run.frames[i];
    const auto& c = run.correspondences[i];
    long accepted = 0, switches = 0;
    for (const auto& d : fr.detections) accepted += d.accepted;
    for (const auto& m : c.matches) switches += m.is_switch;
    const auto emit = [&](const char* metric, double v) {
      std::snprintf(buf, sizeof buf, "%s,%d,%.6g\n", metric, fr.frame, v);
      os << buf;
    };
    emit("proposals", static_cast<double>(fr.detections.size()));
    emit("detections", static_cast<double>(accepted));
    emit("tracks", static_cast<double>(c.pred_ids.size()));
    emit("ground_truth", static_cast<double>(c.gt_ids.size()));
    emit("matches", static_cast<double>(c.matches.size()));
    emit("misses", static_cast<double>(c.misses.size()));
    emit("false_positives", static_cast<double>(c.false_positives.size()));
    emit("id_switches", static_cast<double>(switches));
    for (std::size_t s = 0; s < kStageCount; ++s) emit((std::string("latency_") + kStageNames[s] + "_ms").c_str(), fr.times.ms[s]);
    emit("latency_total_ms", fr.times.total());
  }
}

// --- training data -----------------------------------------------------------

struct FeatureVariant {
  GlimpseConfig config;
  FeatureSource source = FeatureSource::mean;
};

struct TrainingSet {
  FeatureVariant variant;
  int channels = 1;
  int split_frame = 0;  // frames < split_frame train, the rest test
  std::vector<LabeledFeatures> train;
  std::vector<LabeledFeatures> test;

  std::size_t positives() const {
    std::size_t n = 0;
    for (const auto& s : train) n += s.positive;
    for (const auto& s : test) n += s.positive;
    return n;
  }
};

/// Fuses every frame, proposes local maxima, labels them against ground truth
/// and extracts features for each variant. Frames before
/// `train_fraction * frames` form the training split, the rest the test split.
inline std::vector<TrainingSet> generate_training_set(const Simulator& sim, const PipelineConfig& cfg,
                                                      std::span<const FeatureVariant> variants, int frames) {
  const auto& sc = sim.scenario();
  if (frames < 2 || frames > sc.duration) throw ConfigError("training needs at least 2 frames within the scenario");
  bool stack = false;
  std::size_t keep = 1;
  for (const auto& v : variants) {
    v.config.validate();
    stack = stack || v.source == FeatureSource::stack;
    keep = std::max(keep, static_cast<std::size_t>(v.config.slots()));
  }
  const FusionPlan plan(sc.homographies(), sc.image_sizes(), sc.grid);
  const int split = std::clamp(static_cast<int>(std::lround(cfg.train_fraction * frames)), 1, frames - 1);
  std::vector<TrainingSet> sets;
  for (const auto& v : variants)
    sets.push_back({v, v.source == FeatureSource::stack ? static_cast<int>(sc.rig.size()) : 1, split, {}, {}});

  std::deque<FusedMap> history;
  const double sep_cells = cfg.detect.min_separation_m / sc.grid.cell_size;
  for (int f = 0; f < frames; ++f) {
    const SimFrame sf = sim.generate(f);
    history.push_back(plan.fuse(sf.views, stack ? FusionMode::stack : FusionMode::average));
    while (history.size() > keep) history.pop_front();
    const auto proposals = local_maxima(history.back(), cfg.detect.min_score, sep_cells);
    std::vector<Vec2> truth;
    for (const auto& a : sf.truth) truth.push_back(a.position);
    const auto labels = label_proposals(proposals, truth, cfg.detect.box_side, cfg.detect.iou_threshold);
    for (auto& set : sets) {
      std::vector<const FusedMap*> hist;
      const std::size_t take = std::min(history.size(), static_cast<std::size_t>(set.variant.config.slots()));
      for (std::size_t k = history.size() - take; k < history.size(); ++k) hist.push_back(&history[k]);
      auto& dst = f < split ? set.train : set.test;
      for (std::size_t i = 0; i < proposals.size(); ++i)
        dst.push_back({extract_features(proposals[i], hist, set.variant.config, set.variant.source), labels[i].positive, f});
    }
  }
  for (const auto& set : sets) {
    if (set.positives() == 0) throw DataError("scenario produced no positive proposals");
  }
  return sets;
}

struct TrainedVariant {
  GlimpseModel model;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::size_t train_size = 0, test_size = 0, test_positives = 0;
};

inline TrainedVariant train_variant(const TrainingSet& set, const PipelineConfig& cfg) {
  TrainedVariant out;
  out.model.config = set.variant.config;
  out.model.source = set.variant.source;
  out.model.channels = set.channels;
  out.model.threshold = cfg.decision_threshold;
  out.model.classifier = train(set.train, cfg.train);
  out.train_accuracy = accuracy(out.model, set.train);
  out.test_accuracy = accuracy(out.model, set.test);
  out.train_size = set.train.size();
  out.test_size = set.test.size();
  for (const auto& s : set.test) out.test_positives += s.positive;
  return out;
}

}  // namespace dmct

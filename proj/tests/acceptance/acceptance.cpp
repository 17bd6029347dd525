// Acceptance checks 1-9. Prints one PASS/FAIL line per criterion and exits
// non-zero when any fails. Pass criterion numbers to run a subset.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"

using namespace dmct;
namespace fs = std::filesystem;

namespace {

// Tolerances and thresholds.
constexpr int kFlowInstances = 10000;
constexpr double kFlowSeconds = 60.0;
constexpr int kFocalTriples = 100;
constexpr double kFocalStep = 1e-6;
constexpr double kFocalRelTol = 1e-4;
constexpr double kFocalAbsFloor = 1e-6;  // relative error denominator floor
constexpr double kDiskIouMin = 0.9;
constexpr double kGaussAnisotropyMin = 1.5;
constexpr double kFusionTol = 1e-6;
constexpr double kCleanMotaMin = 95.0;
constexpr double kCleanIdf1Min = 95.0;
constexpr double kCleanSeconds = 120.0;
constexpr double kGlimpseAccuracyMin = 0.90;
constexpr double kGoldenTol = 0.1;
constexpr double kFpsMin = 15.0;
constexpr int kCausalScenarios = 5;

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const fs::path kData = DMCT_DATA_DIR;

// --- 1 -----------------------------------------------------------------------

Outcome flow_optimality() {
  std::mt19937_64 rng(1001);
  int mismatches = 0;
  const auto t0 = Clock::now();
  for (int i = 0; i < kFlowInstances; ++i) {
    const auto g = testing_support::random_graph(rng, 6, 6);
    if (solve_assignment(g).cost != testing_support::brute_force_cost(g)) ++mismatches;
  }
  const double s = seconds_since(t0);
  return {mismatches == 0 && s < kFlowSeconds, fmt("%d/%d instances optimal, %.2f s (limit %.0f s)", kFlowInstances - mismatches,
                                                   kFlowInstances, s, kFlowSeconds)};
}

// --- 2 -----------------------------------------------------------------------

Outcome focal_gradient() {
  std::mt19937_64 rng(1002);
  std::uniform_real_distribution<double> p(0.02, 0.98), h(0.0, 1.0);
  std::bernoulli_distribution peak(0.15), masked(0.1);
  double worst = 0.0;
  for (int trial = 0; trial < kFocalTriples; ++trial) {
    BasicMap<double> P(16, 16), H(16, 16), M(16, 16, 0.0, 1.0);
    for (std::size_t i = 0; i < P.size(); ++i) {
      P.values()[i] = p(rng);
      H.values()[i] = peak(rng) ? 1.0 : h(rng);
      if (masked(rng)) M.values()[i] = 0.0;
    }
    const auto r = focal_loss(P, H, M);
    for (std::size_t i = 0; i < P.size(); ++i) {
      const double keep = P.values()[i];
      P.values()[i] = keep + kFocalStep;
      const double up = focal_loss(P, H, M).loss;
      P.values()[i] = keep - kFocalStep;
      const double down = focal_loss(P, H, M).loss;
      P.values()[i] = keep;
      const double numeric = (up - down) / (2.0 * kFocalStep);
      worst = std::max(worst, std::abs(r.gradient.values()[i] - numeric) / std::max(std::abs(numeric), kFocalAbsFloor));
    }
  }
  return {worst <= kFocalRelTol, fmt("%d maps of 16x16, max relative error %.2e (limit %.0e)", kFocalTriples, worst, kFocalRelTol)};
}

// --- 3 -----------------------------------------------------------------------

Outcome perspective_labels() {
  const GroundGrid grid(Vec2(-2, -2), 0.025, 160, 160);
  const ImageSize size{640, 480};
  const auto cam = testing_support::elevated_camera(Vec2(0, 0), 3.0, 30.0, 500.0, size);
  const auto h = homography_from_calibration(cam);
  const double radius = kDefaultDiskRadius;
  double min_iou = 1.0, min_gauss = 1e9, max_disk = 0.0;
  for (const Vec2 c : {Vec2(0, 0), Vec2(0.4, -0.3), Vec2(-0.5, 0.2), Vec2(0.2, 0.6), Vec2(-0.3, -0.6)}) {
    const std::vector<Vec2> centers{c};
    const auto disks = disk_occupancy(grid, centers, radius);
    const auto label = backproject_label(grid, disks, h, size);
    const auto back = project_view_to_ground(label.heatmap, h, grid, Sampling::nearest);
    min_iou = std::min(min_iou, binary_iou(back, disks));
    max_disk = std::max(max_disk, blob_anisotropy(back));

    // Baseline: image-space Gaussian whose radius matches the disk's width.
    const Vec3 xc = cam.rotation() * Vec3(c.x(), c.y(), 0.0) + cam.translation();
    const double r_px = cam.intrinsics()(0, 0) * radius / xc.z();
    const auto q = cam.project(Vec3(c.x(), c.y(), 0.0));
    if (!q) return {false, "fixture point out of view"};
    const std::vector<Vec2> px{*q};
    const std::vector<double> rs{r_px};
    const auto gauss = project_view_to_ground(gaussian_heatmap(px, rs, size), h, grid, Sampling::nearest);
    min_gauss = std::min(min_gauss, blob_anisotropy(gauss));
  }
  return {min_iou >= kDiskIouMin && min_gauss > kGaussAnisotropyMin,
          fmt("30 deg camera: disk label IoU min %.3f (>= %.1f), disk anisotropy max %.2f; Gaussian anisotropy min %.2f (> %.1f)",
              min_iou, kDiskIouMin, max_disk, min_gauss, kGaussAnisotropyMin)};
}

// --- 4 -----------------------------------------------------------------------

double bilinear_oracle(const OccupancyMap& m, double x, double y) {
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  const auto at = [&](int c, int r) {
    return static_cast<double>(m(std::min(r, m.rows() - 1), std::min(c, m.cols() - 1)));
  };
  return (1 - fy) * ((1 - fx) * at(x0, y0) + fx * at(x0 + 1, y0)) + fy * ((1 - fx) * at(x0, y0 + 1) + fx * at(x0 + 1, y0 + 1));
}

Outcome fusion_correctness() {
  std::mt19937_64 rng(1004);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  double worst = 0.0, worst_stack = 0.0;
  long covered[4] = {0, 0, 0, 0};
  for (int trial = 0; trial < 5; ++trial) {
    const GroundGrid grid(Vec2(-3, -3), 0.05, 120, 120);
    std::vector<CameraCalibration> cams;
    ViewHeatmapSet set;
    for (int c = 0; c < 3; ++c) {
      cams.push_back(testing_support::random_camera(rng, {160, 120}));
      auto view = OccupancyMap::for_image(cams.back().image_size());
      for (auto& v : view.values()) v = u(rng);
      set.heatmaps.push_back(std::move(view));
      set.homographies.push_back(homography_from_calibration(cams.back()));
    }
    const auto avg = fuse_average(set, grid);
    const auto stk = fuse_stack(set, grid);
    for (int r = 0; r < grid.rows; ++r)
      for (int k = 0; k < grid.cols; ++k) {
        const Vec2 g = grid.cell_center(r, k);
        double sum = 0.0, stack_sum = 0.0;
        int n = 0;
        for (std::size_t c = 0; c < cams.size(); ++c) {
          // Full pinhole projection of the ground point.
          const Vec3 xc = cams[c].rotation() * Vec3(g.x(), g.y(), 0.0) + cams[c].translation();
          if (xc.z() <= 0.0) continue;
          const Vec3 q = cams[c].intrinsics() * xc;
          const double x = q.x() / q.z(), y = q.y() / q.z();
          const auto s = cams[c].image_size();
          if (x < 0.0 || y < 0.0 || x > s.width - 1.0 || y > s.height - 1.0) continue;
          sum += bilinear_oracle(set.heatmaps[c], x, y);
          stack_sum += stk.stacked[c](r, k);
          ++n;
        }
        ++covered[n];
        const double expect = n ? sum / n : 0.0;
        worst = std::max(worst, std::abs(avg.mean(r, k) - expect));
        if (avg.coverage(r, k) != n) worst = std::max(worst, 1.0);
        if (n) worst_stack = std::max(worst_stack, std::abs(stack_sum / n - avg.mean(r, k)));
      }
  }
  const double tol = kFusionTol;
  return {worst <= tol && worst_stack <= tol,
          fmt("3 cameras x 5 fixtures: max |avg - hand| %.2e, max |mean(stack) - avg| %.2e (limit %.0e); cells seen by 0/1/2/3 "
              "views: %ld/%ld/%ld/%ld",
              worst, worst_stack, tol, covered[0], covered[1], covered[2], covered[3])};
}

// --- 5 -----------------------------------------------------------------------

Outcome clean_tracking() {
  const auto t0 = Clock::now();
  const Simulator sim(load_scenario(kData / "scenarios/clean_4cam.json"));
  const auto run = run_pipeline(sim, PipelineVariant{}, sim.scenario().duration);
  const double s = seconds_since(t0);
  const auto& r = run.report;
  return {r.mota >= kCleanMotaMin && r.ids == 0 && r.idf1 >= kCleanIdf1Min && s < kCleanSeconds,
          fmt("%d frames: MOTA %.2f (>= %.0f), IDs %ld (= 0), IDF1 %.2f (>= %.0f), %.1f s (< %.0f s)", sim.scenario().duration, r.mota,
              kCleanMotaMin, r.ids, r.idf1, kCleanIdf1Min, s, kCleanSeconds)};
}

// --- 6 -----------------------------------------------------------------------

PipelineConfig noisy_config() {
  PipelineConfig cfg;
  const fs::path path = kData / "configs/noisy.json";
  apply_config_json(cfg, read_json_file(path), path.parent_path());
  cfg.validate();
  return cfg;
}

struct NoisyModels {
  TrainedVariant n4_mean, n4_stack, n0_mean;
};

const NoisyModels& noisy_models() {
  static std::optional<NoisyModels> cache;
  if (!cache) {
    const auto cfg = noisy_config();
    const Simulator sim(load_scenario(cfg.scenario));
    const std::vector<FeatureVariant> variants{{GlimpseConfig::with_history(4), FeatureSource::mean},
                                               {GlimpseConfig::with_history(4), FeatureSource::stack},
                                               {GlimpseConfig::with_history(0), FeatureSource::mean}};
    const auto sets = generate_training_set(sim, cfg, variants, sim.scenario().duration);
    cache = NoisyModels{train_variant(sets[0], cfg), train_variant(sets[1], cfg), train_variant(sets[2], cfg)};
  }
  return *cache;
}

std::vector<Outcome> noisy_orderings() {
  const auto cfg = noisy_config();
  const auto& m = noisy_models();
  const double a4 = m.n4_mean.test_accuracy, a0 = m.n0_mean.test_accuracy;
  Outcome a{a4 >= kGlimpseAccuracyMin && a4 >= a0,
            fmt("held-out accuracy n=4 %.4f (>= %.2f) vs n=0 %.4f; stacked n=4 %.4f; %zu test proposals", a4, kGlimpseAccuracyMin, a0,
                m.n4_stack.test_accuracy, m.n4_mean.test_size)};

  const Simulator sim(load_scenario(cfg.scenario));
  auto avg = cfg, stack = cfg;
  avg.fusion = FusionMode::average;
  stack.fusion = FusionMode::stack;
  auto avg_color = avg, stack_color = stack;
  avg_color.tracker.use_color = stack_color.tracker.use_color = true;
  const std::vector<PipelineVariant> variants{{avg, m.n4_mean.model},
                                              {stack, m.n4_stack.model},
                                              {avg_color, m.n4_mean.model},
                                              {stack_color, m.n4_stack.model}};
  const auto runs = run_pipelines(sim, variants, sim.scenario().duration, false);
  const auto& ra = runs[0].report;
  const auto& rs = runs[1].report;
  const auto& rac = runs[2].report;
  const auto& rsc = runs[3].report;
  std::printf("%s", format_report_table({{"avg", ra}, {"stack", rs}, {"avg+color", rac}, {"stack+color", rsc}}).c_str());
  Outcome b{rs.idf1 >= ra.idf1, fmt("IDF1 stack %.2f vs avg %.2f", rs.idf1, ra.idf1)};
  Outcome c{rac.ids <= ra.ids && rsc.ids <= rs.ids,
            fmt("IDs avg %ld -> %ld with color, stack %ld -> %ld with color", ra.ids, rac.ids, rs.ids, rsc.ids)};
  return {a, b, c};
}

// --- 7 -----------------------------------------------------------------------

Outcome golden_metrics() {
  const fs::path dir = DMCT_GOLDEN_DIR;
  const auto golden = read_json_file(dir / "golden.json");
  const EvalConfig cfg{golden.at("box_side").get<double>(), golden.at("iou_threshold").get<double>()};
  double worst = 0.0;
  std::string where;
  int n = 0;
  for (const auto& s : golden.at("sequences")) {
    const auto r = report_to_json(evaluate(read_track_csv(dir / s.at("gt").get<std::string>()),
                                           read_track_csv(dir / s.at("pred").get<std::string>()), cfg));
    for (const auto& [k, v] : s.at("metrics").items()) {
      const double d = std::abs(r.at(k).get<double>() - v.get<double>());
      if (d > worst) {
        worst = d;
        where = s.at("gt").get<std::string>() + " " + k;
      }
    }
    ++n;
  }
  return {n == 20 && worst <= kGoldenTol,
          fmt("%d sequences, max abs difference %.4f (limit %.1f)%s%s", n, worst, kGoldenTol, where.empty() ? "" : " at ", where.c_str())};
}

// --- 8 -----------------------------------------------------------------------

Outcome realtime() {
  PipelineConfig cfg;
  const Simulator sim(load_scenario(kData / "scenarios/bench_4cam.json"));
  const auto& sc = sim.scenario();
  const int frames = cfg.bench_warmup + cfg.bench_frames;
  const auto run = run_pipeline(sim, {cfg, noisy_models().n4_mean.model}, frames);
  TimingProfile t = run.timing;
  t.frames.erase(t.frames.begin(), t.frames.begin() + cfg.bench_warmup);
  std::printf("%s", format_timing_table(t).c_str());
  const auto size = sc.rig.front().calibration.image_size();
  return {t.fps() >= kFpsMin, fmt("%zu cameras %dx%d, grid %dx%d, %zu agents, n=4 classifier: %.1f fps over %zu frames (>= %.0f)",
                                  sc.rig.size(), size.height, size.width, sc.grid.rows, sc.grid.cols, sc.agents.size(), t.fps(),
                                  t.frames.size(), kFpsMin)};
}

// --- 9 -----------------------------------------------------------------------

std::string serialize(const PipelineRun& run, int frames) {
  std::string out;
  char buf[256];
  for (const auto& r : run.rows) {
    if (r.frame >= frames) break;
    std::snprintf(buf, sizeof buf, "t %d %d %.17g %.17g %d\n", r.frame, r.id, r.position.x(), r.position.y(), r.matched ? 1 : 0);
    out += buf;
  }
  for (const auto& f : run.frames) {
    if (f.frame >= frames) break;
    for (const auto& d : f.detections) {
      std::snprintf(buf, sizeof buf, "d %d %.17g %.17g %.9g %.17g %d\n", f.frame, d.proposal.position.x(), d.proposal.position.y(),
                    d.proposal.score, d.class_score, d.accepted ? 1 : 0);
      out += buf;
    }
  }
  return out;
}

Outcome causality() {
  std::mt19937_64 rng(1009);
  std::uniform_int_distribution<int> agents(2, 6), prefix(10, 70), cams(2, 4);
  int identical = 0;
  std::string sizes;
  for (int i = 0; i < kCausalScenarios; ++i) {
    Scenario s;
    s.seed = rng();
    s.grid = GroundGrid(Vec2(0, 0), 0.05, 100, 100);
    s.rig = make_ring_rig(cams(rng), s.grid, 4.0, 1.0, {200, 150}, 140.0);
    s.agents = random_agents(agents(rng), s.grid, s.seed, 0.6, 1.4);
    s.duration = 80;
    s.noise.pixel_noise_sigma = 0.1;
    s.noise.miss_rate = 0.05;
    s.noise.clutter_rate = 2.0;
    s.noise.blur_with_distance = true;
    const Simulator sim(s);

    // Fixed random weights: the check concerns data flow, not accuracy.
    GlimpseModel model;
    model.config = GlimpseConfig::with_history(4);
    std::normal_distribution<double> w(0.0, 0.05);
    model.classifier.weights.resize(model.feature_length());
    for (auto& x : model.classifier.weights) x = w(rng);
    model.classifier.bias = 0.5;
    PipelineConfig cfg;
    cfg.tracker.use_color = (i % 2) == 1;

    const int k = prefix(rng);
    const PipelineVariant v{cfg, model};
    const auto full = serialize(run_pipeline(sim, v, s.duration), k);
    const auto part = serialize(run_pipeline(sim, v, k), k);
    identical += (!full.empty() && full == part);
    sizes += fmt("%s%d/%d", i ? ", " : "", k, s.duration);
  }
  return {identical == kCausalScenarios,
          fmt("%d/%d scenarios byte-identical on shared frames (prefix/full: %s)", identical, kCausalScenarios, sizes.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const auto wanted = [&](int n) { return only.empty() || only.count(n); };

  int failed = 0;
  const auto report = [&](const std::string& id, const Outcome& o) {
    std::printf("criterion %-2s %s  %s\n", id.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  };
  const auto run = [&](int n, const std::function<Outcome()>& f) {
    if (!wanted(n)) return;
    try {
      report(std::to_string(n), f());
    } catch (const std::exception& e) {
      report(std::to_string(n), {false, std::string("error: ") + e.what()});
    }
  };

  run(1, flow_optimality);
  run(2, focal_gradient);
  run(3, perspective_labels);
  run(4, fusion_correctness);
  run(5, clean_tracking);
  if (wanted(6)) {
    try {
      const auto o = noisy_orderings();
      report("6a", o[0]);
      report("6b", o[1]);
      report("6c", o[2]);
    } catch (const std::exception& e) {
      report("6", {false, std::string("error: ") + e.what()});
    }
  }
  run(7, golden_metrics);
  run(8, realtime);
  run(9, causality);
  std::printf("%s\n", failed ? "acceptance: FAILED" : "acceptance: all criteria passed");
  return failed ? 1 : 0;
}

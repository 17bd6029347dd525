#pragma once

// Synthetic multi-camera scenarios: scripted walkers, per-view heatmaps that
// stand in for a ground-point network, optional flat-color RGB frames, and
// exact ground truth.
//
// Randomness comes from a counter-based generator: every draw is a SplitMix64
// hash of (seed, frame, view, stream, counter), so any frame can be produced
// independently and bit-identically.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmct/appearance.hpp"
#include "dmct/error.hpp"
#include "dmct/geometry.hpp"
#include "dmct/heatmap.hpp"
#include "dmct/occupancy_map.hpp"

namespace dmct {

// --- random numbers ----------------------------------------------------------

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Stream of SplitMix64 outputs keyed by a tuple of integers.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0, std::uint64_t c = 0) {
    key_ = splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b * 0x632BE59BD9B4E019ull)) ^ (c * 0xD6E8FEB86659FD93ull);
  }
  std::uint64_t next() { return splitmix64(key_ + 0x9E3779B97F4A7C15ull * ++counter_); }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }
  int poisson(double mean) {
    // Knuth; means here are small.
    const double limit = std::exp(-mean);
    double p = 1.0;
    int k = 0;
    do {
      ++k;
      p *= uniform();
    } while (p > limit);
    return k - 1;
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

enum RngStream : std::uint64_t { kStreamMiss = 1, kStreamClutter = 2, kStreamPixelNoise = 3, kStreamAgents = 4 };

// --- scenario ----------------------------------------------------------------

struct NoiseModel {
  double pixel_noise_sigma = 0.0;
  double miss_rate = 0.0;
  double clutter_rate = 0.0;  // expected spurious blobs per view per frame
  bool blur_with_distance = false;
  double base_blur = 0.08;       // meters, Gaussian softness of every response
  double blur_per_meter = 0.01;  // extra sigma per meter of camera distance
  double clutter_min_amplitude = 0.6;
  double clutter_max_amplitude = 1.0;

  void validate() const {
    if (!(pixel_noise_sigma >= 0.0)) throw ConfigError("pixel_noise_sigma must be non-negative");
    if (!(miss_rate >= 0.0 && miss_rate <= 1.0)) throw ConfigError("miss_rate must be in [0,1]");
    if (!(clutter_rate >= 0.0)) throw ConfigError("clutter_rate must be non-negative");
    if (!(base_blur > 0.0) || !(blur_per_meter >= 0.0)) throw ConfigError("blur parameters out of range");
    if (!(clutter_min_amplitude >= 0.0 && clutter_min_amplitude <= clutter_max_amplitude && clutter_max_amplitude <= 1.0))
      throw ConfigError("clutter amplitudes must satisfy 0 <= min <= max <= 1");
  }
};

/// Closed waypoint loop walked at constant speed.
struct AgentScript {
  std::vector<Vec2> waypoints;
  double speed = 1.2;  // m/s
  Rgb color{200, 40, 40};
  double phase = 0.0;  // meters already walked at frame 0

  Vec2 position_at(double seconds) const {
    if (waypoints.size() == 1) return waypoints.front();
    double loop = 0.0;
    for (std::size_t i = 0; i < waypoints.size(); ++i) loop += (waypoints[(i + 1) % waypoints.size()] - waypoints[i]).norm();
    if (loop <= 0.0) return waypoints.front();
    double s = std::fmod(phase + speed * seconds, loop);
    for (std::size_t i = 0;; i = (i + 1) % waypoints.size()) {
      const Vec2 a = waypoints[i], b = waypoints[(i + 1) % waypoints.size()];
      const double len = (b - a).norm();
      if (s <= len) return len > 0.0 ? Vec2(a + (b - a) * (s / len)) : a;
      s -= len;
    }
  }
};

struct Scenario {
  Rig rig;
  GroundGrid grid{Vec2::Zero(), 0.025, 400, 400};
  std::vector<AgentScript> agents;
  int duration = 900;
  double fps = 15.0;
  double v_max = 4.0;
  double disk_radius = kDefaultDiskRadius;
  NoiseModel noise;
  std::uint64_t seed = 1;
  std::string name = "scenario";

  void validate() const {
    if (rig.empty()) throw ConfigError("scenario needs at least one camera");
    if (duration <= 0) throw ConfigError("scenario duration must be positive");
    if (!(fps > 0.0) || !(v_max > 0.0) || !(disk_radius > 0.0)) throw ConfigError("fps, v_max and disk_radius must be positive");
    noise.validate();
    for (const auto& a : agents) {
      if (a.waypoints.empty()) throw ConfigError("agent needs at least one waypoint");
      if (!(a.speed >= 0.0) || a.speed > v_max) throw ConfigError("agent speed exceeds v_max");
      for (const auto& w : a.waypoints)
        if (!grid.contains(w)) throw ConfigError("agent waypoint outside the grid");
    }
  }

  std::vector<CameraCalibration> cameras() const {
    std::vector<CameraCalibration> out;
    for (const auto& c : rig) out.push_back(c.calibration);
    return out;
  }
  std::vector<Homography> homographies() const {
    std::vector<Homography> out;
    for (const auto& c : rig) out.push_back(homography_from_calibration(c.calibration));
    return out;
  }
  std::vector<ImageSize> image_sizes() const {
    std::vector<ImageSize> out;
    for (const auto& c : rig) out.push_back(c.calibration.image_size());
    return out;
  }
};

/// `count` cameras on a circle around the grid center, all aimed at it.
inline Rig make_ring_rig(int count, const GroundGrid& grid, double height = 4.5, double margin = 1.0,
                         ImageSize size = {640, 480}, double focal_px = 420.0, double start_angle = M_PI / 4) {
  if (count < 1) throw ConfigError("ring rig needs at least one camera");
  const Vec2 center = grid.origin + grid.extent() / 2.0;
  const double radius = grid.extent().norm() / 2.0 + margin;
  Rig rig;
  for (int i = 0; i < count; ++i) {
    const double a = start_angle + 2.0 * M_PI * i / count;
    const Vec3 eye(center.x() + radius * std::cos(a), center.y() + radius * std::sin(a), height);
    rig.push_back({"cam" + std::to_string(i), CameraCalibration::look_at(eye, Vec3(center.x(), center.y(), 0.0), focal_px, size)});
  }
  return rig;
}

/// Random loops inside the grid, deterministic in `seed`. The grid is split
/// into a near-square array of sectors, one per agent, and each agent walks
/// `waypoints` points of a jittered ellipse inside its sector, clockwise or
/// counter-clockwise. Sectors are padded by `spacing / 2`, so two agents never
/// come closer than `spacing`; the simulator has no collision model otherwise.
inline std::vector<AgentScript> random_agents(int count, const GroundGrid& grid, std::uint64_t seed, double speed_min,
                                              double speed_max, int waypoints = 8, double margin = 0.5,
                                              double spacing = 0.6) {
  static constexpr Rgb kPalette[] = {{220, 40, 40},  {40, 200, 40},  {40, 60, 220},  {230, 200, 30}, {200, 40, 200},
                                     {30, 200, 210}, {240, 140, 20}, {120, 60, 20},  {250, 250, 250}, {20, 20, 20},
                                     {140, 200, 90}, {90, 40, 150},  {240, 150, 170}, {0, 110, 110},  {160, 160, 40}};
  if (count < 0 || waypoints < 3) throw ConfigError("random agents need count >= 0 and at least 3 waypoints");
  if (!(speed_min > 0.0 && speed_min <= speed_max)) throw ConfigError("random agent speeds need 0 < min <= max");
  if (!(spacing >= 0.0)) throw ConfigError("random agent spacing must be non-negative");
  std::vector<AgentScript> agents;
  if (count == 0) return agents;
  CounterRng rng(seed, kStreamAgents);
  const Vec2 lo = grid.origin.array() + margin;
  const Vec2 hi = (grid.origin + grid.extent()).array() - margin;
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(count))));
  const int rows = (count + cols - 1) / cols;
  const Vec2 sector((hi.x() - lo.x()) / cols, (hi.y() - lo.y()) / rows);
  const Vec2 half = sector / 2.0 - Vec2::Constant(spacing / 2.0);
  if (!(half.minCoeff() / 1.15 > 0.2)) throw ConfigError("grid too small for " + std::to_string(count) + " random agents");
  for (int i = 0; i < count; ++i) {
    AgentScript a;
    a.speed = rng.uniform(speed_min, speed_max);
    const Vec2 c = lo + Vec2((i % cols + 0.5) * sector.x(), (i / cols + 0.5) * sector.y());
    const double rx = rng.uniform(0.5, 1.0) * half.x() / 1.15, ry = rng.uniform(0.5, 1.0) * half.y() / 1.15;
    const double start = rng.uniform(0.0, 2.0 * M_PI);
    const double dir = rng.uniform() < 0.5 ? 1.0 : -1.0;
    for (int k = 0; k < waypoints; ++k) {
      const double th = start + dir * 2.0 * M_PI * k / waypoints;
      const double j = rng.uniform(0.85, 1.15);
      a.waypoints.emplace_back(c.x() + j * rx * std::cos(th), c.y() + j * ry * std::sin(th));
    }
    a.color = kPalette[i % std::size(kPalette)];
    agents.push_back(std::move(a));
  }
  return agents;
}

// --- scenario files ----------------------------------------------------------

namespace detail {
inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items())
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      throw ConfigError("unknown key '" + key + "' in " + where);
}
}  // namespace detail

inline Scenario scenario_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  detail::reject_unknown(j, {"name", "rig", "grid", "agents", "random_agents", "duration", "fps", "v_max", "disk_radius", "noise", "seed"},
                         "scenario");
  Scenario s;
  try {
    s.name = j.value("name", std::string("scenario"));
    if (j.contains("grid")) s.grid = grid_from_json(j.at("grid"));
    s.duration = j.value("duration", s.duration);
    s.fps = j.value("fps", s.fps);
    s.v_max = j.value("v_max", s.v_max);
    s.disk_radius = j.value("disk_radius", s.disk_radius);
    s.seed = j.value("seed", s.seed);

    const auto& rig = j.at("rig");
    if (rig.is_string()) {
      auto path = std::filesystem::path(rig.get<std::string>());
      if (path.is_relative()) path = base_dir / path;
      s.rig = load_rig(path);
    } else {
      detail::reject_unknown(rig, {"ring"}, "rig");
      const auto& ring = rig.at("ring");
      detail::reject_unknown(ring, {"cameras", "height", "margin", "width", "image_height", "focal", "start_angle_deg"}, "rig.ring");
      s.rig = make_ring_rig(ring.at("cameras").get<int>(), s.grid, ring.value("height", 4.5), ring.value("margin", 1.0),
                            {ring.value("width", 640), ring.value("image_height", 480)}, ring.value("focal", 420.0),
                            ring.value("start_angle_deg", 45.0) * M_PI / 180.0);
    }

    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      detail::reject_unknown(n, {"pixel_noise_sigma", "miss_rate", "clutter_rate", "blur_with_distance", "base_blur", "blur_per_meter",
                                 "clutter_min_amplitude", "clutter_max_amplitude"},
                             "noise");
      s.noise.pixel_noise_sigma = n.value("pixel_noise_sigma", 0.0);
      s.noise.miss_rate = n.value("miss_rate", 0.0);
      s.noise.clutter_rate = n.value("clutter_rate", 0.0);
      s.noise.blur_with_distance = n.value("blur_with_distance", false);
      s.noise.base_blur = n.value("base_blur", s.noise.base_blur);
      s.noise.blur_per_meter = n.value("blur_per_meter", s.noise.blur_per_meter);
      s.noise.clutter_min_amplitude = n.value("clutter_min_amplitude", s.noise.clutter_min_amplitude);
      s.noise.clutter_max_amplitude = n.value("clutter_max_amplitude", s.noise.clutter_max_amplitude);
    }
    if (j.contains("agents")) {
      for (const auto& a : j.at("agents")) {
        detail::reject_unknown(a, {"waypoints", "speed", "color", "phase"}, "agent");
        AgentScript script;
        for (const auto& w : a.at("waypoints")) script.waypoints.emplace_back(w.at(0).get<double>(), w.at(1).get<double>());
        script.speed = a.value("speed", script.speed);
        script.phase = a.value("phase", 0.0);
        if (a.contains("color")) {
          const auto c = a.at("color").get<std::vector<int>>();
          if (c.size() != 3) throw ConfigError("agent color needs 3 components");
          script.color = {static_cast<std::uint8_t>(c[0]), static_cast<std::uint8_t>(c[1]), static_cast<std::uint8_t>(c[2])};
        }
        s.agents.push_back(std::move(script));
      }
    }
    if (j.contains("random_agents")) {
      const auto& r = j.at("random_agents");
      detail::reject_unknown(r, {"count", "speed", "waypoints", "margin", "spacing"}, "random_agents");
      const auto speed = r.value("speed", std::vector<double>{0.8, 1.6});
      if (speed.size() != 2) throw ConfigError("random_agents.speed needs [min, max]");
      auto extra = random_agents(r.at("count").get<int>(), s.grid, s.seed, speed[0], speed[1], r.value("waypoints", 8),
                                 r.value("margin", 0.5), r.value("spacing", 0.6));
      s.agents.insert(s.agents.end(), extra.begin(), extra.end());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed scenario: ") + e.what());
  }
  s.validate();
  return s;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  return scenario_from_json(read_json_file(path), path.parent_path());
}

// --- frame generation --------------------------------------------------------

struct AgentTruth {
  int id = 0;  // 1-based agent index
  Vec2 position = Vec2::Zero();
};

struct SimFrame {
  int frame = 0;
  std::vector<OccupancyMap> views;
  std::vector<AgentTruth> truth;
  std::vector<RgbImage> rgb;              // empty unless requested
  std::vector<std::vector<Vec2>> clutter;  // ground positions of spurious blobs, per view
};

/// Frame generator with cached geometry and blur profiles. `generate` is a
/// pure function of (scenario, frame) and may be called from several threads.
class Simulator {
 public:
  explicit Simulator(Scenario scenario) : s_(std::move(scenario)), homs_(s_.homographies()) { s_.validate(); }

  const Scenario& scenario() const { return s_; }
  const std::vector<Homography>& homographies() const { return homs_; }

  std::vector<AgentTruth> truth_at(int frame) const {
    std::vector<AgentTruth> out;
    for (std::size_t i = 0; i < s_.agents.size(); ++i)
      out.push_back({static_cast<int>(i) + 1, s_.agents[i].position_at(frame / s_.fps)});
    return out;
  }

  SimFrame generate(int frame, bool with_rgb = false) const {
    if (frame < 0 || frame >= s_.duration) throw RuntimeError("frame outside the scenario duration");
    SimFrame out;
    out.frame = frame;
    out.truth = truth_at(frame);
    const auto& noise = s_.noise;
    for (std::size_t c = 0; c < s_.rig.size(); ++c) {
      const auto& cam = s_.rig[c].calibration;
      const auto& h = homs_[c];
      const ImageSize size = cam.image_size();
      const Homography bounded(h.matrix(), size);
      auto view = OccupancyMap::for_image(size);
      std::vector<DiskResponse> disks;

      CounterRng miss_rng(s_.seed, static_cast<std::uint64_t>(frame), c, kStreamMiss);
      for (const auto& a : out.truth) {
        const bool missed = miss_rng.uniform() < noise.miss_rate;
        if (missed || !ground_to_image(bounded, a.position)) continue;
        disks.push_back({a.position, s_.disk_radius, &profile_for(cam, a.position), 1.0});
      }

      std::vector<Vec2> clutter;
      CounterRng clutter_rng(s_.seed, static_cast<std::uint64_t>(frame), c, kStreamClutter);
      const int blobs = noise.clutter_rate > 0.0 ? clutter_rng.poisson(noise.clutter_rate) : 0;
      for (int b = 0; b < blobs; ++b) {
        std::optional<Vec2> g;
        for (int attempt = 0; attempt < 16 && !g; ++attempt) {
          const Vec2 q(clutter_rng.uniform(0.0, size.width - 1.0), clutter_rng.uniform(0.0, size.height - 1.0));
          g = image_to_ground(h, q);
          if (g && !s_.grid.contains(*g)) g.reset();
        }
        const double amp = clutter_rng.uniform(noise.clutter_min_amplitude, noise.clutter_max_amplitude);
        if (!g) continue;
        clutter.push_back(*g);
        disks.push_back({*g, s_.disk_radius, &profile_for(cam, *g), amp});
      }
      render_ground_disks(view, h, disks);

      if (noise.pixel_noise_sigma > 0.0) {
        CounterRng pix(s_.seed, static_cast<std::uint64_t>(frame), c, kStreamPixelNoise);
        const auto sigma = noise.pixel_noise_sigma;
        for (auto& v : view.values()) v = static_cast<float>(v + sigma * pix.normal());
      }
      view.clamp(0.0f, 1.0f);
      out.views.push_back(std::move(view));
      out.clutter.push_back(std::move(clutter));
      if (with_rgb) out.rgb.push_back(render_rgb(cam, out.truth));
    }
    return out;
  }

  /// Gray background with every agent's projected cuboid box painted in its
  /// color, far agents first.
  RgbImage render_rgb(const CameraCalibration& cam, std::span<const AgentTruth> truth) const {
    const auto size = cam.image_size();
    RgbImage img(size.width, size.height, Rgb{128, 128, 128});
    std::vector<std::pair<double, std::size_t>> order;
    for (std::size_t i = 0; i < truth.size(); ++i)
      order.emplace_back(cam.depth(Vec3(truth[i].position.x(), truth[i].position.y(), 1.0)), i);
    std::sort(order.begin(), order.end(), std::greater<>());
    for (const auto& [depth, i] : order) {
      if (depth <= 0.0) continue;
      PersonCuboid cuboid;
      cuboid.base_center = truth[i].position;
      const auto box = project_cuboid(cuboid, cam);
      if (!box) continue;
      const Rgb color = s_.agents[static_cast<std::size_t>(truth[i].id - 1)].color;
      for (int y = box->y0; y <= box->y1; ++y)
        for (int x = box->x0; x <= box->x1; ++x) img(x, y) = color;
    }
    return img;
  }

 private:
  const RadialProfile& profile_for(const CameraCalibration& cam, const Vec2& ground) const {
    double sigma = s_.noise.base_blur;
    if (s_.noise.blur_with_distance) {
      const double dist = (cam.center() - Vec3(ground.x(), ground.y(), 0.0)).norm();
      sigma = std::hypot(sigma, s_.noise.blur_per_meter * dist);
    }
    const auto key = static_cast<long>(std::lround(sigma * 1000.0));  // 1 mm buckets
    std::lock_guard lock(cache_mutex_);
    auto it = profiles_.find(key);
    if (it == profiles_.end())
      it = profiles_.emplace(key, std::make_unique<RadialProfile>(RadialProfile::disk_blur(s_.disk_radius, key / 1000.0))).first;
    return *it->second;
  }

  Scenario s_;
  std::vector<Homography> homs_;
  mutable std::mutex cache_mutex_;
  mutable std::map<long, std::unique_ptr<RadialProfile>> profiles_;
};

inline void write_truth_header(std::ostream& os) { os << "frame,id,x_m,y_m,matched\n"; }

inline void write_truth(std::ostream& os, int frame, std::span<const AgentTruth> truth) {
  char buf[128];
  for (const auto& a : truth) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.4f,%.4f,1\n", frame, a.id, a.position.x(), a.position.y());
    os << buf;
  }
}

}  // namespace dmct

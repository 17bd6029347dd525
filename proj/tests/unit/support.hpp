#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dmct/dmct.hpp"

namespace testing_support {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("dmct_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Camera at `eye` aimed at a random ground point near the origin.
inline dmct::CameraCalibration random_camera(std::mt19937_64& rng, dmct::ImageSize size = {640, 480}) {
  std::uniform_real_distribution<double> ang(0.0, 2.0 * M_PI), dist(4.0, 12.0), h(2.0, 8.0), f(300.0, 900.0), off(-2.0, 2.0);
  const double a = ang(rng), d = dist(rng);
  const dmct::Vec3 eye(d * std::cos(a), d * std::sin(a), h(rng));
  return dmct::CameraCalibration::look_at(eye, dmct::Vec3(off(rng), off(rng), 0.0), f(rng), size);
}

/// Straight-down camera at height `z` above `xy`; image x follows world +x.
inline dmct::CameraCalibration overhead_camera(dmct::Vec2 xy, double z, double focal, dmct::ImageSize size) {
  dmct::Mat3 K;
  K << focal, 0, (size.width - 1) / 2.0, 0, focal, (size.height - 1) / 2.0, 0, 0, 1;
  dmct::Mat3 R;
  R << 1, 0, 0, 0, -1, 0, 0, 0, -1;
  const dmct::Vec3 C(xy.x(), xy.y(), z);
  return dmct::CameraCalibration(K, R, -R * C, size);
}

/// Camera at height `z` looking at `target` with the optical axis `elevation_deg`
/// below the horizon.
inline dmct::CameraCalibration elevated_camera(dmct::Vec2 target, double z, double elevation_deg, double focal,
                                               dmct::ImageSize size) {
  const double back = z / std::tan(elevation_deg * M_PI / 180.0);
  return dmct::CameraCalibration::look_at(dmct::Vec3(target.x(), target.y() - back, z), dmct::Vec3(target.x(), target.y(), 0.0),
                                          focal, size);
}

/// Cheapest node-disjoint assignment by enumeration: every trajectory takes a
/// gated detection or its prediction edge.
inline std::int64_t brute_force_cost(const dmct::AssociationGraph& g) {
  const int T = static_cast<int>(g.trajectory_ids.size());
  std::vector<std::vector<std::pair<int, std::int64_t>>> options(T);
  for (const auto& e : g.edges) options[e.trajectory].emplace_back(e.detection, e.cost);
  std::vector<char> used(g.detections, 0);
  std::int64_t best = INT64_MAX;
  auto rec = [&](auto&& self, int t, std::int64_t acc) -> void {
    if (acc >= best) return;
    if (t == T) {
      best = acc;
      return;
    }
    for (const auto& [d, c] : options[t]) {
      if (d >= 0) {
        if (used[d]) continue;
        used[d] = 1;
        self(self, t + 1, acc + c);
        used[d] = 0;
      } else {
        self(self, t + 1, acc + c);
      }
    }
  };
  rec(rec, 0, 0);
  return best;
}

/// Random association instance with up to `max_t` trajectories and `max_d` detections.
inline dmct::AssociationGraph random_graph(std::mt19937_64& rng, int max_t, int max_d) {
  std::uniform_int_distribution<int> nt(0, max_t), nd(0, max_d);
  std::uniform_real_distribution<double> pos(0.0, 1.0);
  std::vector<dmct::Trajectory> trajs(nt(rng));
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    trajs[i].id = static_cast<int>(i) + 1;
    trajs[i].states.push_back({0, dmct::Vec2(pos(rng), pos(rng)), true});
  }
  std::vector<dmct::Vec2> dets(nd(rng));
  for (auto& d : dets) d = dmct::Vec2(pos(rng), pos(rng));
  return dmct::build_graph(trajs, dets, 0.45, 0.6 * 0.45);
}

}  // namespace testing_support

#pragma once

// Fusion of per-view heatmaps onto the shared ground grid, either as the
// coverage-normalized average or as one resampled plane per camera.

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "dmct/error.hpp"
#include "dmct/geometry.hpp"
#include "dmct/occupancy_map.hpp"

namespace dmct {

enum class FusionMode { average, stack };

struct ViewHeatmapSet {
  std::vector<OccupancyMap> heatmaps;  // image lattice, one per camera
  std::vector<Homography> homographies;
};

struct FusedMap {
  GroundGrid grid;
  OccupancyMap mean;
  CountMap coverage;
  std::vector<OccupancyMap> stacked;  // empty unless fused in stack mode

  int channels() const { return static_cast<int>(stacked.size()); }
};

/// Per-camera pixel lookup for every grid cell, reusable across frames for a
/// fixed rig and grid.
class FusionPlan {
 public:
  FusionPlan(std::span<const Homography> homographies, std::span<const ImageSize> sizes, const GroundGrid& grid)
      : grid_(grid), sizes_(sizes.begin(), sizes.end()) {
    if (homographies.empty()) throw ConfigError("fusion needs at least one view");
    if (homographies.size() != sizes.size()) throw ConfigError("one image size per homography is required");
    pixels_.resize(homographies.size());
    for (std::size_t c = 0; c < homographies.size(); ++c) {
      const Homography bounded(homographies[c].matrix(), sizes[c]);
      auto& lut = pixels_[c];
      lut.resize(grid.size());
      for (int r = 0; r < grid.rows; ++r)
        for (int k = 0; k < grid.cols; ++k) {
          const auto q = ground_to_image(bounded, grid.cell_center(r, k));
          lut[static_cast<std::size_t>(r) * grid.cols + k] =
              q ? Pixel{q->x(), q->y()} : Pixel{};
        }
    }
  }

  const GroundGrid& grid() const { return grid_; }
  std::size_t views() const { return pixels_.size(); }

  FusedMap fuse(std::span<const OccupancyMap> heatmaps, FusionMode mode) const {
    if (heatmaps.size() != pixels_.size()) throw ConfigError("heatmap count does not match the fusion plan");
    for (std::size_t c = 0; c < heatmaps.size(); ++c)
      if (heatmaps[c].cols() != sizes_[c].width || heatmaps[c].rows() != sizes_[c].height)
        throw ConfigError("heatmap size does not match its camera");

    FusedMap out{grid_, OccupancyMap::for_grid(grid_), CountMap::for_grid(grid_), {}};
    if (mode == FusionMode::stack) out.stacked.assign(heatmaps.size(), OccupancyMap::for_grid(grid_));
    std::vector<double> sum(grid_.size(), 0.0);
    auto coverage = out.coverage.values();
    for (std::size_t c = 0; c < heatmaps.size(); ++c) {
      const auto& lut = pixels_[c];
      const auto& view = heatmaps[c];
      float* plane = mode == FusionMode::stack ? out.stacked[c].values().data() : nullptr;
      for (std::size_t i = 0; i < lut.size(); ++i) {
        if (!lut[i].valid()) continue;
        const double v = sample_bilinear(view, lut[i].u, lut[i].v);
        sum[i] += v;
        coverage[i] += 1;
        if (plane) plane[i] = static_cast<float>(v);
      }
    }
    auto mean = out.mean.values();
    for (std::size_t i = 0; i < sum.size(); ++i)
      mean[i] = coverage[i] ? static_cast<float>(sum[i] / coverage[i]) : 0.0f;
    return out;
  }

 private:
  struct Pixel {
    double u = std::numeric_limits<double>::quiet_NaN();
    double v = std::numeric_limits<double>::quiet_NaN();
    bool valid() const { return !std::isnan(u); }
  };

  GroundGrid grid_;
  std::vector<ImageSize> sizes_;
  std::vector<std::vector<Pixel>> pixels_;
};

namespace detail {
inline FusedMap fuse_views(const ViewHeatmapSet& views, const GroundGrid& grid, FusionMode mode) {
  if (views.heatmaps.empty()) throw ConfigError("fusion needs at least one view");
  if (views.heatmaps.size() != views.homographies.size())
    throw ConfigError("one homography per heatmap is required");
  std::vector<ImageSize> sizes;
  for (const auto& m : views.heatmaps) sizes.push_back({m.cols(), m.rows()});
  return FusionPlan(views.homographies, sizes, grid).fuse(views.heatmaps, mode);
}
}  // namespace detail

/// Coverage-normalized average of the views visible from each cell; cells no
/// camera sees get 0.
inline FusedMap fuse_average(const ViewHeatmapSet& views, const GroundGrid& grid) {
  return detail::fuse_views(views, grid, FusionMode::average);
}

/// As `fuse_average`, plus one resampled plane per camera in rig order.
inline FusedMap fuse_stack(const ViewHeatmapSet& views, const GroundGrid& grid) {
  return detail::fuse_views(views, grid, FusionMode::stack);
}

}  // namespace dmct

#pragma once

// Training targets for per-view ground-point heatmaps and the masked focal
// objective used to fit them.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "dmct/error.hpp"
#include "dmct/geometry.hpp"
#include "dmct/occupancy_map.hpp"

namespace dmct {

inline constexpr double kDefaultDiskRadius = 0.20;

struct FocalLossParams {
  double alpha = 2.0;
  double beta = 4.0;

  void validate() const {
    if (!(alpha > 0.0) || !(beta > 0.0)) throw ConfigError("focal loss alpha and beta must be positive");
  }
};

/// View-space target: `heatmap` is zero wherever `mask` is zero.
struct GroundTruthLabel {
  OccupancyMap heatmap;
  OccupancyMap mask;
};

/// Binary map of the union of equal-radius ground disks. A cell is inside a
/// disk when its center is within `radius` of the disk center.
inline OccupancyMap disk_occupancy(const GroundGrid& grid, std::span<const Vec2> centers, double radius) {
  if (!(radius > 0.0)) throw ConfigError("disk radius must be positive");
  auto map = OccupancyMap::for_grid(grid);
  const double cs = grid.cell_size;
  for (const auto& c : centers) {
    const Vec2 local = (c - grid.origin) / cs;
    const int r0 = std::max(0, static_cast<int>(std::floor(local.y() - radius / cs - 1)));
    const int r1 = std::min(grid.rows - 1, static_cast<int>(std::ceil(local.y() + radius / cs + 1)));
    const int c0 = std::max(0, static_cast<int>(std::floor(local.x() - radius / cs - 1)));
    const int c1 = std::min(grid.cols - 1, static_cast<int>(std::ceil(local.x() + radius / cs + 1)));
    for (int r = r0; r <= r1; ++r)
      for (int k = c0; k <= c1; ++k)
        if ((grid.cell_center(r, k) - c).squaredNorm() <= radius * radius) map(r, k) = 1.0f;
  }
  return map;
}

/// Splats every grid cell onto the pixel it projects to. The mask marks pixels
/// hit by at least one cell; the heatmap keeps the max disk value per pixel.
inline GroundTruthLabel backproject_label(const GroundGrid& grid, const OccupancyMap& disk_map, const Homography& h,
                                          ImageSize image_size) {
  if (disk_map.rows() != grid.rows || disk_map.cols() != grid.cols)
    throw ConfigError("disk map does not match the grid");
  const Homography bounded(h.matrix(), image_size);
  GroundTruthLabel label{OccupancyMap::for_image(image_size), OccupancyMap::for_image(image_size)};
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const auto q = ground_to_image(bounded, grid.cell_center(r, c));
      if (!q) continue;
      const int u = static_cast<int>(std::lround(q->x()));
      const int v = static_cast<int>(std::lround(q->y()));
      label.mask(v, u) = 1.0f;
      label.heatmap(v, u) = std::max(label.heatmap(v, u), disk_map(r, c));
    }
  }
  return label;
}

/// Isotropic image-space Gaussians with sigma = radius / 3, truncated to the
/// radius; overlapping centers keep the per-pixel maximum.
inline OccupancyMap gaussian_heatmap(std::span<const Vec2> centers, std::span<const double> radii, ImageSize size) {
  if (centers.size() != radii.size()) throw ConfigError("one radius per center is required");
  auto map = OccupancyMap::for_image(size);
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const double r = radii[i];
    if (!(r > 0.0)) throw ConfigError("gaussian radius must be positive");
    const double sigma = r / 3.0;
    const Vec2& ct = centers[i];
    const int u0 = std::max(0, static_cast<int>(std::floor(ct.x() - r)));
    const int u1 = std::min(size.width - 1, static_cast<int>(std::ceil(ct.x() + r)));
    const int v0 = std::max(0, static_cast<int>(std::floor(ct.y() - r)));
    const int v1 = std::min(size.height - 1, static_cast<int>(std::ceil(ct.y() + r)));
    for (int v = v0; v <= v1; ++v) {
      for (int u = u0; u <= u1; ++u) {
        const double d2 = (u - ct.x()) * (u - ct.x()) + (v - ct.y()) * (v - ct.y());
        if (d2 > r * r) continue;
        const auto value = static_cast<float>(std::exp(-d2 / (2.0 * sigma * sigma)));
        map(v, u) = std::max(map(v, u), value);
      }
    }
  }
  return map;
}

template <class T>
struct FocalLossResult {
  double loss = 0.0;
  BasicMap<T> gradient;
};

inline constexpr double kFocalClampEpsilon = 1e-7;

/// Masked pixel-wise focal loss, normalized by the number of mask pixels.
/// Pixels with H == 1 use -(1-P)^a log P, all others -(1-H)^b P^a log(1-P).
/// Predictions are clamped to [eps, 1-eps]; the gradient is that of the
/// clamped objective (zero where the clamp is active).
template <class T>
FocalLossResult<T> focal_loss(const BasicMap<T>& pred, const BasicMap<T>& heat, const BasicMap<T>& mask,
                              const FocalLossParams& params = {}) {
  params.validate();
  if (!pred.same_shape(heat) || !pred.same_shape(mask)) throw ConfigError("focal loss inputs differ in shape");
  std::size_t n = 0;
  for (T m : mask.values()) n += (m != T{0});
  if (n == 0) throw RuntimeError("focal loss mask is empty");

  const double a = params.alpha;
  const double b = params.beta;
  const double inv_n = 1.0 / static_cast<double>(n);
  FocalLossResult<T> out{0.0, BasicMap<T>(pred.rows(), pred.cols(), pred.cell_size())};
  const auto P = pred.values();
  const auto H = heat.values();
  const auto M = mask.values();
  auto G = out.gradient.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    const double m = M[i];
    if (m == 0.0) continue;
    const double raw = P[i];
    const double p = std::clamp(raw, kFocalClampEpsilon, 1.0 - kFocalClampEpsilon);
    const bool clamped = p != raw;
    double term = 0.0;
    double dterm = 0.0;
    if (static_cast<double>(H[i]) == 1.0) {
      const double q = 1.0 - p;
      term = m * std::pow(q, a) * std::log(p);
      dterm = m * (-a * std::pow(q, a - 1.0) * std::log(p) + std::pow(q, a) / p);
    } else {
      const double w = m * std::pow(1.0 - static_cast<double>(H[i]), b);
      term = w * std::pow(p, a) * std::log(1.0 - p);
      dterm = w * (a * std::pow(p, a - 1.0) * std::log(1.0 - p) - std::pow(p, a) / (1.0 - p));
    }
    sum += term;
    G[i] = clamped ? T{0} : static_cast<T>(-inv_n * dterm);
  }
  out.loss = -inv_n * sum;
  return out;
}

inline FocalLossResult<float> focal_loss(const OccupancyMap& pred, const GroundTruthLabel& label,
                                         const FocalLossParams& params = {}) {
  return focal_loss(pred, label.heatmap, label.mask, params);
}

/// Radial response f(rho) of a unit disk of radius R blurred by an isotropic
/// Gaussian of standard deviation sigma, i.e. the probability that a point
/// drawn from N(center + rho, sigma^2 I) lands inside the disk. Tabulated once
/// and linearly interpolated.
class RadialProfile {
 public:
  static RadialProfile disk_blur(double radius, double sigma, int samples = 512) {
    if (!(radius > 0.0) || !(sigma > 0.0)) throw ConfigError("blurred disk needs positive radius and sigma");
    RadialProfile p;
    p.reach_ = radius + 4.0 * sigma;
    p.step_ = p.reach_ / (samples - 1);
    p.table_.resize(static_cast<std::size_t>(samples));
    // Polar integral over the disk: int_0^R r/s^2 exp(-(r-rho)^2/2s^2) I0e(r rho/s^2) dr.
    constexpr int kNodes = 200;
    const double s2 = sigma * sigma;
    for (int i = 0; i < samples; ++i) {
      const double rho = i * p.step_;
      double acc = 0.0;
      for (int k = 0; k < kNodes; ++k) {
        const double r = (k + 0.5) * radius / kNodes;
        const double x = r * rho / s2;
        const double i0e = x < 600.0 ? std::cyl_bessel_i(0.0, x) * std::exp(-x) : 1.0 / std::sqrt(2.0 * M_PI * x);
        acc += r / s2 * std::exp(-(r - rho) * (r - rho) / (2.0 * s2)) * i0e;
      }
      p.table_[i] = std::clamp(acc * radius / kNodes, 0.0, 1.0);
    }
    return p;
  }

  double reach() const { return reach_; }
  double operator()(double rho) const {
    if (rho >= reach_) return 0.0;
    const double x = rho / step_;
    const auto i = static_cast<std::size_t>(x);
    if (i + 1 >= table_.size()) return table_.back();
    const double a = x - static_cast<double>(i);
    return (1.0 - a) * table_[i] + a * table_[i + 1];
  }

 private:
  double reach_ = 0.0;
  double step_ = 1.0;
  std::vector<double> table_;
};

/// One ground disk as seen by a camera. Without a profile the disk is hard
/// edged; otherwise `profile` gives the response by ground distance.
struct DiskResponse {
  Vec2 center;
  double radius = kDefaultDiskRadius;
  const RadialProfile* profile = nullptr;
  double amplitude = 1.0;

  double reach() const { return profile ? profile->reach() : radius; }
};

/// Dense view-space rendering of ground disks: every pixel is traced back to
/// the ground and evaluated against each disk, keeping the per-pixel max.
/// Unlike `backproject_label` this leaves no holes where pixels are finer than
/// grid cells.
inline void render_ground_disks(OccupancyMap& view, const Homography& h, std::span<const DiskResponse> disks) {
  const ImageSize size{view.cols(), view.rows()};
  for (const auto& d : disks) {
    const double reach = d.reach();
    double umin = 1e300, umax = -1e300, vmin = 1e300, vmax = -1e300;
    bool any = false;
    for (int sx = -1; sx <= 1; sx += 2) {
      for (int sy = -1; sy <= 1; sy += 2) {
        const auto q = h.project_unbounded(d.center + Vec2(sx * reach, sy * reach));
        if (!q) continue;
        any = true;
        umin = std::min(umin, q->x());
        umax = std::max(umax, q->x());
        vmin = std::min(vmin, q->y());
        vmax = std::max(vmax, q->y());
      }
    }
    if (!any) continue;
    const int u0 = static_cast<int>(std::clamp(std::floor(umin), 0.0, size.width - 1.0));
    const int u1 = static_cast<int>(std::clamp(std::ceil(umax), 0.0, size.width - 1.0));
    const int v0 = static_cast<int>(std::clamp(std::floor(vmin), 0.0, size.height - 1.0));
    const int v1 = static_cast<int>(std::clamp(std::ceil(vmax), 0.0, size.height - 1.0));
    const double reach2 = reach * reach;
    for (int v = v0; v <= v1; ++v) {
      for (int u = u0; u <= u1; ++u) {
        const auto g = image_to_ground(h, Vec2(u, v));
        if (!g) continue;
        const double rho2 = (*g - d.center).squaredNorm();
        if (rho2 > reach2) continue;
        const double value = d.amplitude * (d.profile ? (*d.profile)(std::sqrt(rho2)) : 1.0);
        auto& px = view(v, u);
        px = std::max(px, static_cast<float>(value));
      }
    }
  }
}

enum class Sampling { nearest, bilinear };

/// Reads a view map at every grid cell's projected pixel; cells out of view stay 0.
inline OccupancyMap project_view_to_ground(const OccupancyMap& view, const Homography& h, const GroundGrid& grid,
                                           Sampling sampling = Sampling::bilinear) {
  const Homography bounded(h.matrix(), ImageSize{view.cols(), view.rows()});
  auto out = OccupancyMap::for_grid(grid);
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const auto q = ground_to_image(bounded, grid.cell_center(r, c));
      if (!q) continue;
      out(r, c) = static_cast<float>(sampling == Sampling::nearest ? sample_nearest(view, q->x(), q->y())
                                                                    : sample_bilinear(view, q->x(), q->y()));
    }
  }
  return out;
}

/// IoU of the {value >= threshold} sets of two equally shaped maps.
inline double binary_iou(const OccupancyMap& a, const OccupancyMap& b, float threshold = 0.5f) {
  if (!a.same_shape(b)) throw ConfigError("iou inputs differ in shape");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a.values()[i] >= threshold;
    const bool y = b.values()[i] >= threshold;
    inter += (x && y);
    uni += (x || y);
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// sqrt(lambda_max / lambda_min) of the value-weighted second moment of the
/// map's cells. 1 for an isotropic blob, larger when elongated.
inline double blob_anisotropy(const OccupancyMap& m) {
  double w = 0.0, mx = 0.0, my = 0.0;
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      w += v;
      mx += v * c;
      my += v * r;
    }
  if (w <= 0.0) throw RuntimeError("anisotropy of an empty map");
  mx /= w;
  my /= w;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      if (v == 0.0) continue;
      const Eigen::Vector2d d(c - mx, r - my);
      cov += v * d * d.transpose();
    }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov / w);
  const auto ev = eig.eigenvalues();
  if (!(ev(0) > 0.0)) return std::numeric_limits<double>::infinity();
  return std::sqrt(ev(1) / ev(0));
}

}  // namespace dmct

#pragma once

// RGB color histograms of a person's fixed-size cuboid seen from every view.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dmct/error.hpp"
#include "dmct/geometry.hpp"

namespace dmct {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<Rgb> pixels;

  RgbImage() = default;
  RgbImage(int w, int h, Rgb fill = {}) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  Rgb& operator()(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  const Rgb& operator()(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

inline void write_ppm(const RgbImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size() * 3));
}

inline RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) throw DataError(path.string() + ": unsupported PPM");
  in.get();
  RgbImage img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size() * 3));
  if (!in) throw DataError(path.string() + ": truncated PPM");
  return img;
}

struct PersonCuboid {
  Vec2 base_center = Vec2::Zero();
  double height = 2.0;
  double width = 0.6;
  double depth = 0.6;

  std::array<Vec3, 8> corners() const {
    std::array<Vec3, 8> out;
    int i = 0;
    for (double z : {0.0, height})
      for (double sx : {-0.5, 0.5})
        for (double sy : {-0.5, 0.5})
          out[i++] = Vec3(base_center.x() + sx * width, base_center.y() + sy * depth, z);
    return out;
  }
};

/// Inclusive pixel rectangle.
struct ImageBox {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;
  bool empty() const { return x1 < x0 || y1 < y0; }
  bool contains(const Vec2& q) const { return q.x() >= x0 && q.x() <= x1 && q.y() >= y0 && q.y() <= y1; }
  long area() const { return empty() ? 0 : static_cast<long>(x1 - x0 + 1) * (y1 - y0 + 1); }
};

/// Axis-aligned hull of the cuboid corners in front of the camera, clipped to
/// the image. Empty when no corner projects or the hull misses the image.
inline std::optional<ImageBox> project_cuboid(const PersonCuboid& cuboid, const CameraCalibration& cam) {
  double umin = 1e300, umax = -1e300, vmin = 1e300, vmax = -1e300;
  bool any = false;
  for (const auto& X : cuboid.corners()) {
    const auto q = cam.project(X);
    if (!q) continue;
    any = true;
    umin = std::min(umin, q->x());
    umax = std::max(umax, q->x());
    vmin = std::min(vmin, q->y());
    vmax = std::max(vmax, q->y());
  }
  if (!any) return std::nullopt;
  const auto size = cam.image_size();
  ImageBox box{static_cast<int>(std::max(0.0, std::floor(umin))), static_cast<int>(std::max(0.0, std::floor(vmin))),
               static_cast<int>(std::min(size.width - 1.0, std::ceil(umax))),
               static_cast<int>(std::min(size.height - 1.0, std::ceil(vmax)))};
  if (box.empty()) return std::nullopt;
  return box;
}

/// Normalized 3-D RGB histogram; `empty` set when no pixel was counted.
struct ColorHistogram {
  int bins = 8;
  std::vector<double> mass;
  bool empty = true;

  std::size_t index(const Rgb& px) const {
    const auto q = [this](std::uint8_t v) { return static_cast<std::size_t>(v) * bins / 256; };
    return (q(px.r) * bins + q(px.g)) * bins + q(px.b);
  }
};

/// Raw counts over any number of (image, box) regions, normalized once.
class HistogramAccumulator {
 public:
  explicit HistogramAccumulator(int bins = 8) : bins_(bins) {
    if (bins < 2) throw ConfigError("histogram needs at least 2 bins per channel");
    counts_.assign(static_cast<std::size_t>(bins) * bins * bins, 0.0);
  }

  void add(const RgbImage& img, const ImageBox& box) {
    ColorHistogram layout{bins_, {}, true};
    const int x0 = std::max(0, box.x0), y0 = std::max(0, box.y0);
    const int x1 = std::min(img.width - 1, box.x1), y1 = std::min(img.height - 1, box.y1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        counts_[layout.index(img(x, y))] += 1.0;
        total_ += 1.0;
      }
  }

  ColorHistogram result() const {
    ColorHistogram h{bins_, counts_, total_ == 0.0};
    if (total_ > 0.0)
      for (auto& m : h.mass) m /= total_;
    return h;
  }

 private:
  int bins_;
  std::vector<double> counts_;
  double total_ = 0.0;
};

inline ColorHistogram histogram(const RgbImage& img, const ImageBox& box, int bins = 8) {
  HistogramAccumulator acc(bins);
  acc.add(img, box);
  return acc.result();
}

/// Histogram intersection, in [0, 1] for normalized inputs.
inline double similarity(const ColorHistogram& a, const ColorHistogram& b) {
  if (a.bins != b.bins || a.mass.size() != b.mass.size()) throw ConfigError("histogram layouts differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.mass.size(); ++i) s += std::min(a.mass[i], b.mass[i]);
  return std::clamp(s, 0.0, 1.0);
}

/// Histogram of a person standing at `ground`, accumulated across all views.
inline ColorHistogram person_histogram(const Vec2& ground, std::span<const CameraCalibration> cams,
                                       std::span<const RgbImage> frames, const PersonCuboid& shape = {}, int bins = 8) {
  if (cams.size() != frames.size()) throw ConfigError("one frame per camera is required");
  PersonCuboid cuboid = shape;
  cuboid.base_center = ground;
  HistogramAccumulator acc(bins);
  for (std::size_t c = 0; c < cams.size(); ++c)
    if (const auto box = project_cuboid(cuboid, cams[c])) acc.add(frames[c], *box);
  return acc.result();
}

}  // namespace dmct

#pragma once

// Pinhole cameras, the ground-plane grid and ground <-> image mappings.
//
// World frame is right-handed with z up; the ground is the plane z = 0.
// A camera maps a world point X to camera coordinates R * X + t and then to
// homogeneous pixels K * (R * X + t). Pixel centers sit on integer
// coordinates, so a W x H image spans [0, W-1] x [0, H-1].

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmct/error.hpp"

namespace dmct {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat34 = Eigen::Matrix<double, 3, 4>;

struct ImageSize {
  int width = 0;
  int height = 0;

  bool contains(const Vec2& q) const {
    return q.x() >= 0.0 && q.y() >= 0.0 && q.x() <= width - 1.0 && q.y() <= height - 1.0;
  }
  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

/// Homogeneous weights below this magnitude are treated as points at infinity.
inline constexpr double kHomogeneousEpsilon = 1e-10;

class CameraCalibration {
 public:
  CameraCalibration() = default;
  CameraCalibration(Mat3 intrinsics, Mat3 rotation, Vec3 translation, ImageSize size)
      : K_(std::move(intrinsics)), R_(std::move(rotation)), t_(std::move(translation)), size_(size) {
    validate();
  }

  /// Camera at `center` looking at `target`, image x to the right and y down.
  static CameraCalibration look_at(const Vec3& center, const Vec3& target, double focal_px, ImageSize size) {
    Vec3 forward = (target - center).normalized();
    Vec3 up = Vec3::UnitZ();
    if (std::abs(forward.dot(up)) > 1.0 - 1e-12) up = Vec3::UnitY();
    Vec3 right = forward.cross(up).normalized();
    Vec3 down = forward.cross(right);
    Mat3 R;
    R.row(0) = right.transpose();
    R.row(1) = down.transpose();
    R.row(2) = forward.transpose();
    Mat3 K = Mat3::Identity();
    K(0, 0) = focal_px;
    K(1, 1) = focal_px;
    K(0, 2) = (size.width - 1) / 2.0;
    K(1, 2) = (size.height - 1) / 2.0;
    return CameraCalibration(K, R, -R * center, size);
  }

  const Mat3& intrinsics() const { return K_; }
  const Mat3& rotation() const { return R_; }
  const Vec3& translation() const { return t_; }
  ImageSize image_size() const { return size_; }

  Vec3 center() const { return -R_.transpose() * t_; }
  Mat34 projection() const {
    Mat34 Rt;
    Rt.leftCols<3>() = R_;
    Rt.col(3) = t_;
    return K_ * Rt;
  }
  /// Depth of a world point along the optical axis.
  double depth(const Vec3& X) const { return (R_ * X + t_).z(); }

  /// Full perspective projection; empty when the point is not in front of the camera.
  std::optional<Vec2> project(const Vec3& X) const {
    Vec3 q = K_ * (R_ * X + t_);
    if (depth(X) <= 0.0 || std::abs(q.z()) < kHomogeneousEpsilon) return std::nullopt;
    return Vec2(q.x() / q.z(), q.y() / q.z());
  }

 private:
  void validate() const {
    if (std::abs(K_(1, 0)) > 1e-12 || std::abs(K_(2, 0)) > 1e-12 || std::abs(K_(2, 1)) > 1e-12)
      throw ConfigError("intrinsic matrix must be upper triangular");
    if (!(K_(0, 0) > 0.0) || !(K_(1, 1) > 0.0) || !(K_(2, 2) > 0.0))
      throw ConfigError("intrinsic matrix must have positive focal entries");
    const double ortho_err = ((R_ * R_.transpose()) - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (!(ortho_err <= 1e-9))
      throw ConfigError("rotation must be orthonormal");
    if (R_.determinant() < 0.0) throw ConfigError("rotation must be proper (det = +1)");
    if (size_.width <= 0 || size_.height <= 0) throw ConfigError("image size must be positive");
  }

  Mat3 K_ = Mat3::Identity();
  Mat3 R_ = Mat3::Identity();
  Vec3 t_ = Vec3(0, 0, 1);
  ImageSize size_{1, 1};
};

/// Regular grid over the ground plane, row-major, rows along +y and columns along +x,
/// with `origin` at the minimum corner of cell (0, 0).
struct GroundGrid {
  Vec2 origin = Vec2::Zero();
  double cell_size = 0.025;
  int rows = 0;
  int cols = 0;

  GroundGrid() = default;
  GroundGrid(Vec2 origin_, double cell_size_, int rows_, int cols_)
      : origin(std::move(origin_)), cell_size(cell_size_), rows(rows_), cols(cols_) {
    if (!(cell_size > 0.0)) throw ConfigError("grid cell_size must be positive");
    if (rows <= 0 || cols <= 0) throw ConfigError("grid dimensions must be positive");
  }

  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
  Vec2 cell_center(int row, int col) const {
    return origin + Vec2((col + 0.5) * cell_size, (row + 0.5) * cell_size);
  }
  /// Cell containing `p`, if any.
  std::optional<std::pair<int, int>> cell_of(const Vec2& p) const {
    const double c = std::floor((p.x() - origin.x()) / cell_size);
    const double r = std::floor((p.y() - origin.y()) / cell_size);
    if (r < 0 || c < 0 || r >= rows || c >= cols) return std::nullopt;
    return std::pair{static_cast<int>(r), static_cast<int>(c)};
  }
  bool contains(const Vec2& p) const { return cell_of(p).has_value(); }
  Vec2 extent() const { return Vec2(cols * cell_size, rows * cell_size); }

  friend bool operator==(const GroundGrid&, const GroundGrid&) = default;
};

/// Ground plane (z = 0) to image homography with cached inverse.
///
/// For matrices built from a calibration the homogeneous weight equals the
/// camera depth, so a negative weight means the point is behind the camera.
/// Hand-built matrices must follow the same sign convention.
class Homography {
 public:
  Homography() : Homography(Mat3::Identity()) {}
  explicit Homography(const Mat3& matrix, std::optional<ImageSize> bounds = std::nullopt)
      : H_(matrix), bounds_(bounds) {
    const double det = H_.determinant();
    if (!std::isfinite(det) || std::abs(det) <= 1e-12) throw ConfigError("homography is singular");
    Hinv_ = H_.inverse();
    const Mat3 check = H_ * Hinv_;
    if ((check - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9)
      throw ConfigError("homography inverse is numerically unstable");
  }

  const Mat3& matrix() const { return H_; }
  const Mat3& inverse() const { return Hinv_; }
  const std::optional<ImageSize>& bounds() const { return bounds_; }

  /// Pixel of the ground point `p`, ignoring image bounds.
  std::optional<Vec2> project_unbounded(const Vec2& p) const {
    const Vec3 q = H_ * Vec3(p.x(), p.y(), 1.0);
    if (!(q.z() > kHomogeneousEpsilon)) return std::nullopt;
    return Vec2(q.x() / q.z(), q.y() / q.z());
  }

 private:
  Mat3 H_;
  Mat3 Hinv_;
  std::optional<ImageSize> bounds_;
};

/// Pixel coordinates of ground point `p`; empty when behind the camera,
/// at infinity or outside the image bounds.
inline std::optional<Vec2> ground_to_image(const Homography& h, const Vec2& p) {
  auto q = h.project_unbounded(p);
  if (q && h.bounds() && !h.bounds()->contains(*q)) return std::nullopt;
  return q;
}

/// Ground point seen at pixel `q`; empty when the viewing ray does not hit
/// the ground in front of the camera (horizon and above).
inline std::optional<Vec2> image_to_ground(const Homography& h, const Vec2& q) {
  const Vec3 g = h.inverse() * Vec3(q.x(), q.y(), 1.0);
  // H * (p, 1) = q / g.z, so the forward weight is 1 / g.z.
  if (!(g.z() > kHomogeneousEpsilon)) return std::nullopt;
  return Vec2(g.x() / g.z(), g.y() / g.z());
}

/// K * [r1 r2 t]; throws when the camera center lies on the ground plane.
inline Homography homography_from_calibration(const CameraCalibration& c) {
  Mat3 A;
  A.col(0) = c.rotation().col(0);
  A.col(1) = c.rotation().col(1);
  A.col(2) = c.translation();
  const Mat3 H = c.intrinsics() * A;
  const double det = H.determinant();
  if (!std::isfinite(det) || std::abs(det) <= 1e-12)
    throw ConfigError("camera pose gives a singular ground homography");
  return Homography(H, c.image_size());
}

// --- calibration files -------------------------------------------------------

inline nlohmann::json calibration_to_json(const CameraCalibration& c) {
  auto flat = [](const Mat3& m) {
    std::vector<double> v;
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 3; ++k) v.push_back(m(r, k));
    return v;
  };
  const Vec3& t = c.translation();
  return {{"K", flat(c.intrinsics())},
          {"R", flat(c.rotation())},
          {"t", {t.x(), t.y(), t.z()}},
          {"width", c.image_size().width},
          {"height", c.image_size().height}};
}

inline CameraCalibration calibration_from_json(const nlohmann::json& j) {
  try {
    auto mat = [&](const char* key) {
      const auto v = j.at(key).get<std::vector<double>>();
      if (v.size() != 9) throw ConfigError(std::string("calibration key ") + key + " needs 9 values");
      Mat3 m;
      for (int r = 0; r < 3; ++r)
        for (int k = 0; k < 3; ++k) m(r, k) = v[3 * r + k];
      return m;
    };
    const auto t = j.at("t").get<std::vector<double>>();
    if (t.size() != 3) throw ConfigError("calibration key t needs 3 values");
    return CameraCalibration(mat("K"), mat("R"), Vec3(t[0], t[1], t[2]),
                             ImageSize{j.at("width").get<int>(), j.at("height").get<int>()});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed calibration: ") + e.what());
  }
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

struct RigCamera {
  std::string id;
  CameraCalibration calibration;
};

using Rig = std::vector<RigCamera>;

/// Rig file: {"cameras": [{"id": "...", "path": "cam.json"}, ...]}, paths relative to the rig file.
inline Rig load_rig(const std::filesystem::path& rig_path) {
  const auto j = read_json_file(rig_path);
  Rig rig;
  try {
    for (const auto& cam : j.at("cameras")) {
      auto path = std::filesystem::path(cam.at("path").get<std::string>());
      if (path.is_relative()) path = rig_path.parent_path() / path;
      rig.push_back({cam.at("id").get<std::string>(), calibration_from_json(read_json_file(path))});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(rig_path.string() + ": " + e.what());
  }
  if (rig.empty()) throw ConfigError(rig_path.string() + ": rig has no cameras");
  return rig;
}

inline void save_rig(const Rig& rig, const std::filesystem::path& rig_path) {
  nlohmann::json cams = nlohmann::json::array();
  for (const auto& cam : rig) {
    const auto file = cam.id + ".json";
    std::ofstream(rig_path.parent_path() / file) << calibration_to_json(cam.calibration).dump(2) << '\n';
    cams.push_back({{"id", cam.id}, {"path", file}});
  }
  std::ofstream(rig_path) << nlohmann::json{{"cameras", cams}}.dump(2) << '\n';
}

inline nlohmann::json grid_to_json(const GroundGrid& g) {
  return {{"origin", {g.origin.x(), g.origin.y()}}, {"cell_size", g.cell_size}, {"rows", g.rows}, {"cols", g.cols}};
}

inline GroundGrid grid_from_json(const nlohmann::json& j) {
  try {
    const auto o = j.at("origin").get<std::vector<double>>();
    if (o.size() != 2) throw ConfigError("grid origin needs 2 values");
    return GroundGrid(Vec2(o[0], o[1]), j.value("cell_size", 0.025), j.at("rows").get<int>(), j.at("cols").get<int>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed grid: ") + e.what());
  }
}

}  // namespace dmct

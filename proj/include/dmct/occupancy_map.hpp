#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dmct/error.hpp"
#include "dmct/geometry.hpp"

namespace dmct {

/// Dense row-major 2-D array. `cell_size` is meters per cell for ground maps
/// and 0 for image-lattice maps.
template <class T>
class BasicMap {
 public:
  using value_type = T;

  BasicMap() = default;
  BasicMap(int rows, int cols, double cell_size = 0.0, T fill = T{})
      : rows_(rows), cols_(cols), cell_size_(cell_size) {
    if (rows < 0 || cols < 0) throw ConfigError("map dimensions must be non-negative");
    data_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill);
  }
  static BasicMap for_grid(const GroundGrid& g, T fill = T{}) { return BasicMap(g.rows, g.cols, g.cell_size, fill); }
  static BasicMap for_image(ImageSize s, T fill = T{}) { return BasicMap(s.height, s.width, 0.0, fill); }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double cell_size() const { return cell_size_; }
  std::size_t size() const { return data_.size(); }
  bool same_shape(const auto& other) const { return rows_ == other.rows() && cols_ == other.cols(); }
  bool in_bounds(int r, int c) const { return r >= 0 && c >= 0 && r < rows_ && c < cols_; }

  T& operator()(int r, int c) { return data_[index(r, c)]; }
  const T& operator()(int r, int c) const { return data_[index(r, c)]; }
  T at_or(int r, int c, T fallback) const { return in_bounds(r, c) ? (*this)(r, c) : fallback; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void clamp(T lo, T hi) {
    for (auto& v : data_) v = std::clamp(v, lo, hi);
  }
  T max_value() const { return data_.empty() ? T{} : *std::max_element(data_.begin(), data_.end()); }

  template <class U>
  BasicMap<U> cast() const {
    BasicMap<U> out(rows_, cols_, cell_size_);
    std::transform(data_.begin(), data_.end(), out.data().begin(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const BasicMap&, const BasicMap&) = default;

 private:
  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c);
  }

  int rows_ = 0;
  int cols_ = 0;
  double cell_size_ = 0.0;
  std::vector<T> data_;
};

using OccupancyMap = BasicMap<float>;
using CountMap = BasicMap<std::uint16_t>;

// --- sampling ----------------------------------------------------------------

/// Bilinear read at a continuous (x = column, y = row) position inside the lattice.
template <class T>
double sample_bilinear(const BasicMap<T>& m, double x, double y) {
  const int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, m.cols() - 1);
  const int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, m.rows() - 1);
  const int x1 = std::min(x0 + 1, m.cols() - 1);
  const int y1 = std::min(y0 + 1, m.rows() - 1);
  const double ax = std::clamp(x - x0, 0.0, 1.0);
  const double ay = std::clamp(y - y0, 0.0, 1.0);
  const double top = (1.0 - ax) * m(y0, x0) + ax * m(y0, x1);
  const double bottom = (1.0 - ax) * m(y1, x0) + ax * m(y1, x1);
  return (1.0 - ay) * top + ay * bottom;
}

template <class T>
double sample_nearest(const BasicMap<T>& m, double x, double y) {
  const int c = std::clamp(static_cast<int>(std::lround(x)), 0, m.cols() - 1);
  const int r = std::clamp(static_cast<int>(std::lround(y)), 0, m.rows() - 1);
  return m(r, c);
}

// --- binary format -----------------------------------------------------------
//
// Single plane: "OMAP", u32 rows, u32 cols, f32 cell_size, then rows*cols f32.
// Stacked planes: "OMST", u32 rows, u32 cols, f32 cell_size, u32 channels, then
// the planes back to back. Everything little-endian.

namespace detail {

template <class U>
void put_le(std::vector<char>& buf, U value) {
  static_assert(sizeof(U) == 4);
  auto bits = std::bit_cast<std::uint32_t>(value);
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

template <class U>
U get_le(std::span<const char> buf, std::size_t& pos) {
  static_assert(sizeof(U) == 4);
  if (pos + 4 > buf.size()) throw DataError("occupancy map file truncated");
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
  pos += 4;
  return std::bit_cast<U>(bits);
}

inline std::vector<char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_all(const std::filesystem::path& path, const std::vector<char>& buf) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline void put_header(std::vector<char>& buf, const char* magic, const OccupancyMap& m) {
  buf.insert(buf.end(), magic, magic + 4);
  put_le(buf, static_cast<std::uint32_t>(m.rows()));
  put_le(buf, static_cast<std::uint32_t>(m.cols()));
  put_le(buf, static_cast<float>(m.cell_size()));
}

}  // namespace detail

inline std::vector<char> encode_map(const OccupancyMap& m) {
  std::vector<char> buf;
  buf.reserve(16 + 4 * m.size());
  detail::put_header(buf, "OMAP", m);
  for (float v : m.values()) detail::put_le(buf, v);
  return buf;
}

inline OccupancyMap decode_map(std::span<const char> buf) {
  if (buf.size() < 16 || std::memcmp(buf.data(), "OMAP", 4) != 0) throw DataError("not an OMAP file");
  std::size_t pos = 4;
  const auto rows = detail::get_le<std::uint32_t>(buf, pos);
  const auto cols = detail::get_le<std::uint32_t>(buf, pos);
  const auto cell = detail::get_le<float>(buf, pos);
  if (buf.size() != 16 + 4ull * rows * cols) throw DataError("OMAP payload size mismatch");
  OccupancyMap m(static_cast<int>(rows), static_cast<int>(cols), cell);
  for (auto& v : m.values()) v = detail::get_le<float>(buf, pos);
  return m;
}

inline void write_map(const OccupancyMap& m, const std::filesystem::path& path) { detail::write_all(path, encode_map(m)); }
inline OccupancyMap read_map(const std::filesystem::path& path) { return decode_map(detail::read_all(path)); }

inline std::vector<char> encode_stack(std::span<const OccupancyMap> planes) {
  if (planes.empty()) throw ConfigError("cannot encode an empty stack");
  std::vector<char> buf;
  detail::put_header(buf, "OMST", planes.front());
  detail::put_le(buf, static_cast<std::uint32_t>(planes.size()));
  for (const auto& p : planes) {
    if (!p.same_shape(planes.front())) throw ConfigError("stacked planes differ in shape");
    for (float v : p.values()) detail::put_le(buf, v);
  }
  return buf;
}

inline std::vector<OccupancyMap> decode_stack(std::span<const char> buf) {
  if (buf.size() < 20 || std::memcmp(buf.data(), "OMST", 4) != 0) throw DataError("not an OMST file");
  std::size_t pos = 4;
  const auto rows = detail::get_le<std::uint32_t>(buf, pos);
  const auto cols = detail::get_le<std::uint32_t>(buf, pos);
  const auto cell = detail::get_le<float>(buf, pos);
  const auto channels = detail::get_le<std::uint32_t>(buf, pos);
  if (buf.size() != 20 + 4ull * rows * cols * channels) throw DataError("OMST payload size mismatch");
  std::vector<OccupancyMap> planes;
  for (std::uint32_t c = 0; c < channels; ++c) {
    OccupancyMap m(static_cast<int>(rows), static_cast<int>(cols), cell);
    for (auto& v : m.values()) v = detail::get_le<float>(buf, pos);
    planes.push_back(std::move(m));
  }
  return planes;
}

/// 16-bit binary PGM, values in [0,1] scaled to [0,65535].
inline void write_pgm(const OccupancyMap& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P5\n" << m.cols() << ' ' << m.rows() << "\n65535\n";
  for (float v : m.values()) {
    const auto q = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 65535.0f));
    const char bytes[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xFF)};
    out.write(bytes, 2);
  }
}

}  // namespace dmct

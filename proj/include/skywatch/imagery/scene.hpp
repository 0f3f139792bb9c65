#pragma once

#include <skywatch/core/error.hpp>
#include <skywatch/core/time.hpp>
#include <skywatch/imagery/aoi.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace skywatch::imagery {

inline constexpr double kMaxCloudFraction = 0.30;
inline constexpr double kMaxMissingFraction = 0.10;
inline constexpr double kSentinelGsdMeters = 10.0;

/// Planar three-band raster (R plane, then G, then B), reflectance in [0,1].
class RgbRaster {
 public:
  RgbRaster() = default;
  RgbRaster(int height, int width)
      : height_(height), width_(width), data_(static_cast<std::size_t>(3) * height * width, 0.0f)
  {
    require(height >= 0 && width >= 0, ErrorCode::invalid_argument, "negative raster size");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }

  float& at(int band, int y, int x) { return data_[index(band, y, x)]; }
  float at(int band, int y, int x) const { return data_[index(band, y, x)]; }

  std::span<float> plane(int band) { return {data_.data() + band * plane_size(), plane_size()}; }
  std::span<const float> plane(int band) const
  {
    return {data_.data() + band * plane_size(), plane_size()};
  }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  bool operator==(const RgbRaster&) const = default;

 private:
  std::size_t index(int band, int y, int x) const
  {
    return (static_cast<std::size_t>(band) * height_ + y) * width_ + x;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

struct CellStats {
  double cloud_fraction = 0;
  double missing_fraction = 0;
  bool operator==(const CellStats&) const = default;
};

using CellGrid = std::array<std::array<CellStats, kGridSize>, kGridSize>;

struct CellViability {
  std::array<std::array<bool, kGridSize>, kGridSize> viable{};

  int viable_count() const
  {
    int n = 0;
    for (const auto& row : viable)
      n += static_cast<int>(std::count(row.begin(), row.end(), true));
    return n;
  }
  bool operator==(const CellViability&) const = default;
};

struct SceneImage {
  std::string image_id;
  std::string aoi_id;
  Timestamp timestamp{};
  double gsd_m = kSentinelGsdMeters;
  RgbRaster pixels;
  CellGrid cell_stats{};

  int height() const { return pixels.height(); }
  int width() const { return pixels.width(); }
  bool operator==(const SceneImage&) const = default;
};

inline bool cell_is_viable(const CellStats& s)
{
  return s.cloud_fraction <= kMaxCloudFraction && s.missing_fraction <= kMaxMissingFraction;
}

inline CellViability assess_viability(const SceneImage& scene)
{
  CellViability out;
  for (int i = 0; i < kGridSize; ++i)
    for (int j = 0; j < kGridSize; ++j)
      out.viable[i][j] = cell_is_viable(scene.cell_stats[i][j]);
  return out;
}

struct CellIndex {
  int row = 0;
  int col = 0;
};

/// Grid cell containing pixel (x, y); requires H and W divisible by 7.
inline CellIndex cell_of(double x, double y, int height, int width)
{
  const int cell_h = height / kGridSize;
  const int cell_w = width / kGridSize;
  const int px = std::clamp(static_cast<int>(std::lround(x)), 0, width - 1);
  const int py = std::clamp(static_cast<int>(std::lround(y)), 0, height - 1);
  return {std::min(py / cell_h, kGridSize - 1), std::min(px / cell_w, kGridSize - 1)};
}

inline int padded_extent(int n) { return (n + kGridSize - 1) / kGridSize * kGridSize; }

/// Zero-pads the raster bottom/right up to a multiple of the grid size.
/// Padded pixels are folded into missing_fraction of the affected cells,
/// assuming the pre-padding fraction applied to the cell's original pixels.
inline void pad_to_grid(SceneImage& scene)
{
  const int h = scene.height();
  const int w = scene.width();
  const int ph = padded_extent(h);
  const int pw = padded_extent(w);
  if (ph == h && pw == w)
    return;

  RgbRaster padded(ph, pw);
  for (int b = 0; b < 3; ++b)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        padded.at(b, y, x) = scene.pixels.at(b, y, x);
  scene.pixels = std::move(padded);

  const int cell_h = ph / kGridSize;
  const int cell_w = pw / kGridSize;
  const double area = static_cast<double>(cell_h) * cell_w;
  for (int i = 0; i < kGridSize; ++i) {
    const int y0 = i * cell_h;
    const int real_rows = std::clamp(h - y0, 0, cell_h);
    for (int j = 0; j < kGridSize; ++j) {
      const int x0 = j * cell_w;
      const int real_cols = std::clamp(w - x0, 0, cell_w);
      const double real = static_cast<double>(real_rows) * real_cols;
      const double pad = area - real;
      if (pad <= 0)
        continue;
      auto& st = scene.cell_stats[i][j];
      st.missing_fraction = std::clamp((st.missing_fraction * real + pad) / area, 0.0, 1.0);
    }
  }
}

inline void validate_scene(const SceneImage& scene)
{
  require(scene.height() > 0 && scene.width() > 0, ErrorCode::format, "empty raster");
  require(scene.height() % kGridSize == 0 && scene.width() % kGridSize == 0, ErrorCode::format,
          "raster size must be divisible by the grid size");
  for (const auto& row : scene.cell_stats)
    for (const auto& c : row)
      require(c.cloud_fraction >= 0 && c.cloud_fraction <= 1 && c.missing_fraction >= 0 &&
                  c.missing_fraction <= 1,
              ErrorCode::format, "cell statistics must lie in [0,1]");
  for (float v : scene.pixels.data())
    require(v >= 0.0f && v <= 1.0f, ErrorCode::format, "pixel value outside [0,1]");
}

/// Point annotation of a flying-airplane pattern center (the green blob).
/// Coordinates: x right-positive, y down-positive, origin at the top-left pixel center.
struct Annotation {
  std::string image_id;
  double x = 0;
  double y = 0;
  std::string source;
  bool operator==(const Annotation&) const = default;
};

}  // namespace skywatch::imagery

#pragma once

#include <skywatch/core/error.hpp>

#include <cmath>
#include <string>

namespace skywatch::imagery {

inline constexpr int kGridSize = 7;
inline constexpr double kAoiWidthLon = 1.05;
inline constexpr double kAoiHeightLat = 0.7;
inline constexpr double kMaxCenterLat = 90.0 - kAoiHeightLat / 2.0;

struct GeoBounds {
  double min_lon = 0;
  double max_lon = 0;
  double min_lat = 0;
  double max_lat = 0;
};

/// Fixed-size area of interest centered on an airport and tiled into a 7x7 grid.
/// Row 0 is the northern edge so that grid rows follow image rows.
struct Aoi {
  std::string id;
  double center_lat = 0;
  double center_lon = 0;
  double width_lon = kAoiWidthLon;
  double height_lat = kAoiHeightLat;
  int grid_rows = kGridSize;
  int grid_cols = kGridSize;

  double cell_width_lon() const { return width_lon / grid_cols; }
  double cell_height_lat() const { return height_lat / grid_rows; }

  GeoBounds bounds() const
  {
    return {center_lon - width_lon / 2, center_lon + width_lon / 2, center_lat - height_lat / 2,
            center_lat + height_lat / 2};
  }

  GeoBounds cell_bounds(int row, int col) const
  {
    require(row >= 0 && row < grid_rows && col >= 0 && col < grid_cols,
            ErrorCode::invalid_argument, "cell index out of range");
    const GeoBounds b = bounds();
    // Edges are computed from integer multiples so neighbouring cells share
    // exactly the same boundary value.
    const auto lon_edge = [&](int k) { return b.min_lon + width_lon * k / grid_cols; };
    const auto lat_edge = [&](int k) { return b.max_lat - height_lat * k / grid_rows; };
    return {lon_edge(col), lon_edge(col + 1), lat_edge(row + 1), lat_edge(row)};
  }
};

inline Aoi define_aoi(double center_lat, double center_lon, std::string id)
{
  require(std::isfinite(center_lat) && std::isfinite(center_lon), ErrorCode::invalid_argument,
          "AOI center must be finite");
  require(std::abs(center_lat) <= kMaxCenterLat, ErrorCode::invalid_argument,
          "AOI center latitude must satisfy |lat| <= 89.65");
  Aoi aoi;
  aoi.id = std::move(id);
  aoi.center_lat = center_lat;
  aoi.center_lon = center_lon;
  return aoi;
}

}  // namespace skywatch::imagery

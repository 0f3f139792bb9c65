#pragma once

#include <skywatch/core/error.hpp>
#include <skywatch/core/time.hpp>
#include <skywatch/detect/detection.hpp>
#include <skywatch/imagery/aoi.hpp>
#include <skywatch/imagery/scene.hpp>
#include <skywatch/series/timeseries.hpp>

#include <array>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace skywatch::series {

using imagery::kGridSize;

inline constexpr int kNoisyCellThreshold = 5;
inline constexpr int kWindowDays = 30;

struct CellCounts {
  std::string image_id;
  Timestamp timestamp{};
  std::array<std::array<int, kGridSize>, kGridSize> counts{};
  std::array<std::array<bool, kGridSize>, kGridSize> viable{};

  bool operator==(const CellCounts&) const = default;
};

/// What counting needs to know about a scene, without its pixels.
struct SceneMeta {
  std::string image_id;
  std::string aoi_id;
  Timestamp timestamp{};
  int width = 0;
  int height = 0;
  imagery::CellViability viability;
};

inline SceneMeta scene_meta(const imagery::SceneImage& s)
{
  return {s.image_id, s.aoi_id, s.timestamp, s.width(), s.height(), imagery::assess_viability(s)};
}

/// Bins one image's detections into the 7x7 grid. Detections in non-viable
/// cells contribute nothing: such cells carry count 0.
inline CellCounts count_cells(const SceneMeta& meta, std::span<const detect::Detection> detections)
{
  require(meta.width % kGridSize == 0 && meta.height % kGridSize == 0 && meta.width > 0 && meta.height > 0,
          ErrorCode::invalid_argument, "scene size must be a positive multiple of the grid size");
  CellCounts c;
  c.image_id = meta.image_id;
  c.timestamp = meta.timestamp;
  c.viable = meta.viability.viable;
  for (const auto& d : detections) {
    require(d.image_id == meta.image_id, ErrorCode::invalid_argument,
            "detection of '" + d.image_id + "' counted against '" + meta.image_id + "'");
    const auto cell = imagery::cell_of(d.x, d.y, meta.height, meta.width);
    if (c.viable[cell.row][cell.col])
      ++c.counts[cell.row][cell.col];
  }
  return c;
}

/// Cells with more than 5 detections are treated as artifact noise.
inline CellCounts suppress_noisy(CellCounts c, int max_count = kNoisyCellThreshold)
{
  for (int i = 0; i < kGridSize; ++i)
    for (int j = 0; j < kGridSize; ++j)
      if (c.counts[i][j] > max_count) {
        c.counts[i][j] = 0;
        c.viable[i][j] = false;
      }
  return c;
}

/// Sum over cells of (summed counts) / max(1, number of viable observations).
inline double window_count(std::span<const CellCounts> cells)
{
  double total = 0;
  for (int i = 0; i < kGridSize; ++i)
    for (int j = 0; j < kGridSize; ++j) {
      long count = 0, viable = 0;
      for (const auto& c : cells) {
        count += c.counts[i][j];
        viable += c.viable[i][j] ? 1 : 0;
      }
      total += static_cast<double>(count) / static_cast<double>(std::max(1L, viable));
    }
  return total;
}

/// One value per day d (stepping by `step` from the first full window) over
/// the images whose acquisition day lies in [d - window + 1, d]. Input order
/// does not matter; suppression must already have been applied.
inline TimeSeries build_series(std::vector<CellCounts> cells, const std::string& aoi_id, int window = kWindowDays,
                               int step = 1)
{
  require(!cells.empty(), ErrorCode::invalid_argument, "no images to build a series from");
  require(window >= 1 && step >= 1, ErrorCode::invalid_argument, "window and step must be positive");
  std::stable_sort(cells.begin(), cells.end(),
                   [](const CellCounts& a, const CellCounts& b) { return a.timestamp < b.timestamp; });
  const Day first = day_of(cells.front().timestamp);
  const Day last = day_of(cells.back().timestamp);
  require(days_between(first, last) + 1 >= window, ErrorCode::invalid_argument,
          "images span " + std::to_string(days_between(first, last) + 1) + " days, less than the " +
              std::to_string(window) + "-day window");

  TimeSeries out;
  out.aoi_id = aoi_id;
  out.window_days = window;
  out.step_days = step;
  std::size_t lo = 0, hi = 0;  // cells[lo, hi) fall inside the current window
  for (Day d = first + std::chrono::days(window - 1); d <= last; d += std::chrono::days(step)) {
    const Day start = d - std::chrono::days(window - 1);
    while (hi < cells.size() && day_of(cells[hi].timestamp) <= d)
      ++hi;
    while (lo < hi && day_of(cells[lo].timestamp) < start)
      ++lo;
    out.dates.push_back(d);
    out.values.push_back(window_count(std::span(cells).subspan(lo, hi - lo)));
  }
  return out;
}

/// Groups per-image detections, counts, suppresses and builds one series per AOI.
inline std::map<std::string, TimeSeries> series_by_aoi(const std::vector<SceneMeta>& scenes,
                                                      const std::vector<detect::Detection>& detections,
                                                      int window = kWindowDays, int step = 1)
{
  std::unordered_map<std::string, std::vector<detect::Detection>> by_image;
  for (const auto& d : detections)
    by_image[d.image_id].push_back(d);
  std::map<std::string, std::vector<CellCounts>> per_aoi;
  for (const auto& s : scenes) {
    const auto it = by_image.find(s.image_id);
    const std::vector<detect::Detection> none;
    per_aoi[s.aoi_id].push_back(suppress_noisy(count_cells(s, it == by_image.end() ? none : it->second)));
  }
  std::map<std::string, TimeSeries> out;
  for (auto& [aoi, cells] : per_aoi)
    out.emplace(aoi, build_series(std::move(cells), aoi, window, step));
  return out;
}

}  // namespace skywatch::series

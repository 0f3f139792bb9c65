#pragma once

#include <skywatch/detect/detection.hpp>
#include <skywatch/detect/model.hpp>
#include <skywatch/imagery/scene.hpp>
#include <skywatch/net/model.hpp>

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

namespace skywatch::detect {

inline constexpr double kDetectionThreshold = 0.5;
inline constexpr int kNmsRadius = 12;

struct DetectOptions {
  double threshold = kDetectionThreshold;
  int nms_radius = kNmsRadius;
  // Peaks closer than this to a border are not reported: there the receptive
  // field reaches into zero padding, a context the detector is never trained on.
  int border_margin = kPatchRadius;
};

inline net::Tensor<float> scene_tensor(const imagery::RgbRaster& raster)
{
  net::Tensor<float> t(3, raster.height(), raster.width());
  std::copy(raster.data().begin(), raster.data().end(), t.data());
  return t;
}

/// Eval-mode, same-padded forward pass: one probability per pixel.
inline net::Tensor<float> probability_map(const net::FcnModel<float>& model, const imagery::RgbRaster& raster)
{
  return net::forward(model, scene_tensor(raster), net::Mode::eval);
}

struct Peak {
  int x = 0;
  int y = 0;
  float score = 0;
};

/// Local maxima (3x3, ties allowed) at or above `threshold`, reduced by greedy
/// non-maximum suppression in (score desc, y, x) order: a candidate is dropped
/// when an accepted peak lies within `radius` in Chebyshev distance.
inline std::vector<Peak> find_peaks(std::span<const float> prob, int height, int width, double threshold,
                                    int radius)
{
  require(prob.size() == static_cast<std::size_t>(height) * width, ErrorCode::shape,
          "probability map size mismatch");
  require(radius >= 0, ErrorCode::invalid_argument, "nms radius must be non-negative");
  std::vector<Peak> candidates;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const float v = prob[static_cast<std::size_t>(y) * width + x];
      if (!(v >= threshold))
        continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= height || xx < 0 || xx >= width)
            continue;
          if (prob[static_cast<std::size_t>(yy) * width + xx] > v) {
            is_max = false;
            break;
          }
        }
      if (is_max)
        candidates.push_back({x, y, v});
    }
  std::sort(candidates.begin(), candidates.end(), [](const Peak& a, const Peak& b) {
    if (a.score != b.score)
      return a.score > b.score;
    return std::pair(a.y, a.x) < std::pair(b.y, b.x);
  });

  // Accepted peaks stamp their suppression square into a mask.
  std::vector<unsigned char> suppressed(prob.size(), 0);
  std::vector<Peak> kept;
  for (const Peak& c : candidates) {
    if (suppressed[static_cast<std::size_t>(c.y) * width + c.x])
      continue;
    kept.push_back(c);
    for (int y = std::max(0, c.y - radius); y <= std::min(height - 1, c.y + radius); ++y)
      std::fill_n(suppressed.begin() + static_cast<std::ptrdiff_t>(y) * width + std::max(0, c.x - radius),
                  std::min(width - 1, c.x + radius) - std::max(0, c.x - radius) + 1, 1);
  }
  return kept;
}

inline std::vector<Detection> detect_scene(const net::FcnModel<float>& model, const imagery::SceneImage& scene,
                                           const DetectOptions& opts = {})
{
  const auto prob = probability_map(model, scene.pixels);
  std::vector<Detection> out;
  const int m = opts.border_margin;
  for (const Peak& p : find_peaks(prob.values(), prob.h(), prob.w(), opts.threshold, opts.nms_radius))
    if (p.x >= m && p.y >= m && p.x < prob.w() - m && p.y < prob.h() - m)
      out.push_back({scene.image_id, double(p.x), double(p.y), double(p.score)});
  return out;
}

inline int default_jobs()
{
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

/// Runs detect_scene over every scene, `jobs` scenes at a time against the
/// shared model. Results are concatenated in scene order regardless of jobs.
inline std::vector<Detection> detect_scenes(const net::FcnModel<float>& model,
                                            std::span<const imagery::SceneImage> scenes,
                                            const DetectOptions& opts = {}, int jobs = 1)
{
  std::vector<std::vector<Detection>> per_scene(scenes.size());
  const int workers = std::clamp(jobs, 1, static_cast<int>(std::max<std::size_t>(1, scenes.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < scenes.size(); ++i)
      per_scene[i] = detect_scene(model, scenes[i], opts);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < scenes.size();) {
          try {
            per_scene[i] = detect_scene(model, scenes[i], opts);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error)
              error = std::current_exception();
          }
        }
      });
    for (auto& th : pool)
      th.join();
    if (error)
      std::rethrow_exception(error);
  }
  std::vector<Detection> all;
  for (auto& v : per_scene)
    all.insert(all.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
  return all;
}

}  // namespace skywatch::detect

#pragma once

// Seeded generator of Sentinel-2-like tri-band scenes with planted flying
// airplane patterns and hard-negative distractors (clouds with parallax
// fringes, band-misalignment stripes, sun glint).

#include <skywatch/core/error.hpp>
#include <skywatch/core/time.hpp>
#include <skywatch/imagery/scene.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace skywatch::imagery {

struct Range {
  double lo = 0;
  double hi = 0;
  bool operator==(const Range&) const = default;
};

/// Multiplies the expected plane count over scene indices: flat until
/// `drop_index`, linear decline to `floor` at `trough_index`, then exponential
/// return towards 1 at `recovery_rate` per scene.
struct ActivityProfile {
  int drop_index = 60;
  int trough_index = 90;
  double floor = 0.1;
  double recovery_rate = 0.03;

  double multiplier(int scene_index) const
  {
    if (scene_index < drop_index)
      return 1.0;
    if (scene_index <= trough_index) {
      const double span = std::max(1, trough_index - drop_index);
      return 1.0 - (1.0 - floor) * (scene_index - drop_index) / span;
    }
    return 1.0 - (1.0 - floor) * std::exp(-recovery_rate * (scene_index - trough_index));
  }
  bool operator==(const ActivityProfile&) const = default;
};

struct SynthConfig {
  std::uint64_t rng_seed = 0;
  int image_size = 448;
  double planes_per_image = 2.0;
  Range speed_range_kmh{200, 900};
  Range parallax_offset_range{0, 10};
  Range plane_size_range{2, 6};
  Range plane_amplitude_range{0.4, 0.9};
  double cloud_density = 0.05;  // expected fraction of the scene under cloud
  double artifact_rate = 0.05;  // per-scene probability of each artifact injector
  double band_gap_s = 0.5;
  double gsd_m = kSentinelGsdMeters;
  int plane_margin = 32;        // green center distance from every border
  int min_plane_separation = 40;
  std::string aoi_id = "SYN";
  Timestamp start_time = parse_timestamp("2020-01-01T10:30:00Z");
  int revisit_days = 1;
  std::optional<ActivityProfile> activity;
};

inline constexpr double kMaxPatternSpanPx = 50.0;

/// Per band-gap displacement in pixels for a given speed and parallax offset.
inline double band_displacement_px(double speed_kmh, double parallax_px, double band_gap_s,
                                   double gsd_m)
{
  return speed_kmh / 3.6 * band_gap_s / gsd_m + parallax_px;
}

inline void validate(const SynthConfig& cfg)
{
  const auto range_ok = [](const Range& r) { return std::isfinite(r.lo) && r.lo <= r.hi; };
  require(range_ok(cfg.speed_range_kmh) && cfg.speed_range_kmh.lo >= 0,
          ErrorCode::invalid_argument, "speed_range must be a non-empty non-negative interval");
  require(range_ok(cfg.parallax_offset_range) && cfg.parallax_offset_range.lo >= 0,
          ErrorCode::invalid_argument, "parallax_offset_range must be non-empty and >= 0");
  require(range_ok(cfg.plane_size_range) && cfg.plane_size_range.lo > 0,
          ErrorCode::invalid_argument, "plane_size_range must be non-empty and positive");
  require(range_ok(cfg.plane_amplitude_range) && cfg.plane_amplitude_range.lo > 0 &&
              cfg.plane_amplitude_range.hi <= 1,
          ErrorCode::invalid_argument, "plane_amplitude_range must lie in (0,1]");
  require(cfg.planes_per_image >= 0, ErrorCode::invalid_argument, "planes_per_image must be >= 0");
  require(cfg.cloud_density >= 0 && cfg.cloud_density <= 1, ErrorCode::invalid_argument,
          "cloud_density must be a ratio");
  require(cfg.artifact_rate >= 0 && cfg.artifact_rate <= 1, ErrorCode::invalid_argument,
          "artifact_rate must be a ratio");
  require(cfg.image_size > 0 && cfg.image_size % kGridSize == 0, ErrorCode::invalid_argument,
          "image_size must be a positive multiple of 7");
  require(cfg.plane_margin >= 0 && 2 * cfg.plane_margin < cfg.image_size,
          ErrorCode::invalid_argument, "plane_margin leaves no room for planes");
  require(cfg.band_gap_s > 0 && cfg.gsd_m > 0 && cfg.revisit_days >= 1,
          ErrorCode::invalid_argument, "band_gap_s and gsd_m must be positive, revisit_days >= 1");
  const double max_span = 2.0 * band_displacement_px(cfg.speed_range_kmh.hi,
                                                     cfg.parallax_offset_range.hi, cfg.band_gap_s,
                                                     cfg.gsd_m);
  require(max_span <= kMaxPatternSpanPx, ErrorCode::invalid_argument,
          "configured speed/parallax exceed the 50 px red-blue span bound");
}

struct PlantedPlane {
  double x = 0;  // green center
  double y = 0;
  double heading_rad = 0;
  double displacement_px = 0;  // per band gap
  double sigma_px = 0;
  double amplitude = 0;

  double red_x() const { return x - displacement_px * std::cos(heading_rad); }
  double red_y() const { return y - displacement_px * std::sin(heading_rad); }
  double blue_x() const { return x + displacement_px * std::cos(heading_rad); }
  double blue_y() const { return y + displacement_px * std::sin(heading_rad); }
};

enum class DistractorKind { cloud, misalignment, glint };

struct DistractorRegion {
  DistractorKind kind = DistractorKind::cloud;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // axis-aligned extent, inclusive

  bool contains(double x, double y, double margin = 0) const
  {
    return x >= x0 - margin && x <= x1 + margin && y >= y0 - margin && y <= y1 + margin;
  }
};

struct SynthScene {
  SceneImage scene;
  std::vector<Annotation> annotations;
  std::vector<PlantedPlane> planes;
  std::vector<DistractorRegion> distractors;
  double background_mean_green = 0;
};

namespace synth_detail {

using Plane = std::vector<float>;

inline void blur(Plane& img, int h, int w, double sigma)
{
  const int radius = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  std::vector<float> kernel(2 * radius + 1);
  double sum = 0;
  for (int k = -radius; k <= radius; ++k)
    sum += kernel[k + radius] = static_cast<float>(std::exp(-0.5 * k * k / (sigma * sigma)));
  for (auto& k : kernel)
    k = static_cast<float>(k / sum);

  Plane tmp(img.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0;
      for (int k = -radius; k <= radius; ++k)
        acc += kernel[k + radius] * img[y * w + std::clamp(x + k, 0, w - 1)];
      tmp[y * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0;
      for (int k = -radius; k <= radius; ++k)
        acc += kernel[k + radius] * tmp[std::clamp(y + k, 0, h - 1) * w + x];
      img[y * w + x] = acc;
    }
}

inline Plane noise_field(std::mt19937_64& rng, int h, int w, double sigma_blur)
{
  std::normal_distribution<float> n01(0.0f, 1.0f);
  Plane p(static_cast<std::size_t>(h) * w);
  for (auto& v : p)
    v = n01(rng);
  blur(p, h, w, sigma_blur);
  double sq = 0;
  for (float v : p)
    sq += static_cast<double>(v) * v;
  const float scale = static_cast<float>(1.0 / std::sqrt(std::max(sq / p.size(), 1e-12)));
  for (auto& v : p)
    v *= scale;
  return p;
}

inline void splat(RgbRaster& img, int band, double cx, double cy, double sigma, double amplitude)
{
  const int radius = static_cast<int>(std::ceil(3 * sigma));
  const int x0 = std::max(0, static_cast<int>(std::floor(cx)) - radius);
  const int x1 = std::min(img.width() - 1, static_cast<int>(std::ceil(cx)) + radius);
  const int y0 = std::max(0, static_cast<int>(std::floor(cy)) - radius);
  const int y1 = std::min(img.height() - 1, static_cast<int>(std::ceil(cy)) + radius);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      img.at(band, y, x) += static_cast<float>(amplitude * std::exp(-0.5 * d2 / (sigma * sigma)));
    }
}

inline double smooth_alpha(double r)
{
  // 1 inside the core, smooth falloff to 0 at the rim (r = 1).
  if (r >= 1)
    return 0;
  if (r <= 0.6)
    return 1;
  const double t = (1 - r) / 0.4;
  return t * t * (3 - 2 * t);
}

inline int poisson(std::mt19937_64& rng, double mean)
{
  if (mean <= 0)
    return 0;
  return std::poisson_distribution<int>(mean)(rng);
}

}  // namespace synth_detail

/// Deterministic in (cfg.rng_seed, scene_index) regardless of call order.
inline SynthScene synth_scene(const SynthConfig& cfg, int scene_index)
{
  using namespace synth_detail;
  validate(cfg);
  require(scene_index >= 0, ErrorCode::invalid_argument, "scene_index must be >= 0");

  std::seed_seq seq{static_cast<std::uint32_t>(cfg.rng_seed),
                    static_cast<std::uint32_t>(cfg.rng_seed >> 32),
                    static_cast<std::uint32_t>(scene_index), 0x5c3e7u};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  const int n = cfg.image_size;
  SynthScene out;
  SceneImage& scene = out.scene;
  scene.aoi_id = cfg.aoi_id;
  scene.image_id = cfg.aoi_id + "_" + std::to_string(scene_index);
  scene.timestamp = cfg.start_time + std::chrono::days{cfg.revisit_days * scene_index};
  scene.gsd_m = cfg.gsd_m;
  scene.pixels = RgbRaster(n, n);

  // Muted earth-tone background: coarse terrain shared by all bands plus fine texture.
  const Plane coarse = noise_field(rng, n, n, 12.0);
  const Plane fine = noise_field(rng, n, n, 1.5);
  const double base[3] = {uniform(0.22, 0.32), uniform(0.24, 0.32), uniform(0.18, 0.26)};
  for (int b = 0; b < 3; ++b) {
    const Plane band_noise = noise_field(rng, n, n, 1.0);
    auto px = scene.pixels.plane(b);
    for (std::size_t i = 0; i < px.size(); ++i)
      px[i] = static_cast<float>(base[b] + 0.05 * coarse[i] + 0.015 * fine[i] + 0.006 * band_noise[i]);
  }

  // Clouds: soft ellipses; red/blue alpha masks are shifted to leave parallax fringes.
  Plane cloud_mask(static_cast<std::size_t>(n) * n, 0.0f);
  {
    const double mean_area = std::numbers::pi * 25.0 * 25.0;
    const int count = poisson(rng, cfg.cloud_density * n * n / mean_area);
    for (int c = 0; c < count; ++c) {
      const double cx = uniform(0, n - 1), cy = uniform(0, n - 1);
      const double ax = uniform(10, 40), ay = uniform(10, 40);
      const double angle = uniform(0, std::numbers::pi);
      const double shift = uniform(1, 3);
      const double shift_dir = uniform(0, 2 * std::numbers::pi);
      const double sx = shift * std::cos(shift_dir), sy = shift * std::sin(shift_dir);
      const double brightness = uniform(0.75, 0.95);
      const double ca = std::cos(angle), sa = std::sin(angle);
      const double reach = std::max(ax, ay) + 4;
      const int x0 = std::max(0, static_cast<int>(cx - reach));
      const int x1 = std::min(n - 1, static_cast<int>(cx + reach));
      const int y0 = std::max(0, static_cast<int>(cy - reach));
      const int y1 = std::min(n - 1, static_cast<int>(cy + reach));
      const auto alpha_at = [&](double x, double y) {
        const double dx = x - cx, dy = y - cy;
        const double u = (dx * ca + dy * sa) / ax, v = (-dx * sa + dy * ca) / ay;
        return smooth_alpha(std::sqrt(u * u + v * v));
      };
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const double alpha[3] = {alpha_at(x + sx, y + sy), alpha_at(x, y), alpha_at(x - sx, y - sy)};
          for (int b = 0; b < 3; ++b) {
            float& v = scene.pixels.at(b, y, x);
            v = static_cast<float>(v * (1 - alpha[b]) + brightness * alpha[b]);
          }
          auto& m = cloud_mask[static_cast<std::size_t>(y) * n + x];
          m = std::max(m, static_cast<float>(alpha[1]));
        }
      out.distractors.push_back({DistractorKind::cloud, cx - reach, cy - reach, cx + reach, cy + reach});
    }
  }

  // Band misalignment: a textured stripe whose bands are shifted horizontally.
  if (u01(rng) < cfg.artifact_rate) {
    const int height = static_cast<int>(uniform(10, 30));
    const int y0 = static_cast<int>(uniform(0, std::max(1, n - height)));
    const int shift = static_cast<int>(uniform(2, 7));
    Plane texture = noise_field(rng, height, n, 0.8);
    for (int y = 0; y < height && y0 + y < n; ++y)
      for (int x = 0; x < n; ++x)
        for (int b = 0; b < 3; ++b) {
          const int sx = std::clamp(x + (b - 1) * shift, 0, n - 1);
          scene.pixels.at(b, y0 + y, x) += static_cast<float>(0.12 * texture[y * n + sx]);
        }
    out.distractors.push_back({DistractorKind::misalignment, 0, double(y0), double(n - 1),
                               double(std::min(n - 1, y0 + height - 1))});
  }

  // Sun glint: bright patch with independent per-band speckle.
  if (u01(rng) < cfg.artifact_rate) {
    const double cx = uniform(0, n - 1), cy = uniform(0, n - 1);
    const double radius = uniform(8, 25);
    std::normal_distribution<double> speckle(0.0, 0.12);
    const int x0 = std::max(0, static_cast<int>(cx - radius));
    const int x1 = std::min(n - 1, static_cast<int>(cx + radius));
    const int y0 = std::max(0, static_cast<int>(cy - radius));
    const int y1 = std::min(n - 1, static_cast<int>(cy + radius));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double r = std::hypot(x - cx, y - cy) / radius;
        const double a = smooth_alpha(r);
        for (int b = 0; b < 3; ++b)
          scene.pixels.at(b, y, x) += static_cast<float>(a * (0.45 + speckle(rng)));
      }
    out.distractors.push_back({DistractorKind::glint, double(x0), double(y0), double(x1), double(y1)});
  }

  // Background statistics before planes are planted.
  {
    double sum = 0;
    for (float v : scene.pixels.plane(1))
      sum += std::clamp(v, 0.0f, 1.0f);
    out.background_mean_green = sum / scene.pixels.plane_size();
  }

  // Planes.
  const double mult = cfg.activity ? cfg.activity->multiplier(scene_index) : 1.0;
  const int wanted = poisson(rng, cfg.planes_per_image * mult);
  for (int p = 0; p < wanted; ++p) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double x = std::floor(uniform(cfg.plane_margin, n - cfg.plane_margin));
      const double y = std::floor(uniform(cfg.plane_margin, n - cfg.plane_margin));
      if (x > n - 1 - cfg.plane_margin || y > n - 1 - cfg.plane_margin)
        continue;
      const bool crowded = std::any_of(out.planes.begin(), out.planes.end(), [&](const auto& q) {
        return std::hypot(q.x - x, q.y - y) < cfg.min_plane_separation;
      });
      const bool covered = std::any_of(out.distractors.begin(), out.distractors.end(),
                                       [&](const auto& d) { return d.contains(x, y, 30); });
      if (crowded || covered)
        continue;
      PlantedPlane plane;
      plane.x = x;
      plane.y = y;
      plane.heading_rad = uniform(0, 2 * std::numbers::pi);
      plane.displacement_px = band_displacement_px(
          uniform(cfg.speed_range_kmh.lo, cfg.speed_range_kmh.hi),
          uniform(cfg.parallax_offset_range.lo, cfg.parallax_offset_range.hi), cfg.band_gap_s,
          cfg.gsd_m);
      plane.sigma_px = uniform(cfg.plane_size_range.lo, cfg.plane_size_range.hi) / 3.0;
      plane.amplitude = uniform(cfg.plane_amplitude_range.lo, cfg.plane_amplitude_range.hi);
      out.planes.push_back(plane);
      break;
    }
  }
  for (const auto& plane : out.planes) {
    splat(scene.pixels, 0, plane.red_x(), plane.red_y(), plane.sigma_px, plane.amplitude);
    splat(scene.pixels, 1, plane.x, plane.y, plane.sigma_px, plane.amplitude);
    splat(scene.pixels, 2, plane.blue_x(), plane.blue_y(), plane.sigma_px, plane.amplitude);
    out.annotations.push_back({scene.image_id, plane.x, plane.y, "synthetic"});
  }

  // Clip and quantize to the 8-bit storage grid so that the scene store round-trips exactly.
  for (float& v : scene.pixels.data())
    v = static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;

  const int cell = n / kGridSize;
  for (int i = 0; i < kGridSize; ++i)
    for (int j = 0; j < kGridSize; ++j) {
      int cloudy = 0;
      for (int y = i * cell; y < (i + 1) * cell; ++y)
        for (int x = j * cell; x < (j + 1) * cell; ++x)
          cloudy += cloud_mask[static_cast<std::size_t>(y) * n + x] > 0.5f;
      scene.cell_stats[i][j] = {static_cast<double>(cloudy) / (cell * cell), 0.0};
    }
  return out;
}

}  // namespace skywatch::imagery

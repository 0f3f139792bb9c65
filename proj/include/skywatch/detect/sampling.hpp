#pragma once

// Training patches are kept as references (scene, center) and cut out of the
// source raster when a batch is assembled.

#include <skywatch/core/error.hpp>
#include <skywatch/detect/model.hpp>
#include <skywatch/imagery/scene.hpp>
#include <skywatch/net/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace skywatch::detect {

enum class SampleOrigin { annotation_center, annotation_jitter, ring_negative, random_negative, hard_negative };

inline std::string_view to_string(SampleOrigin o)
{
  switch (o) {
    case SampleOrigin::annotation_center: return "annotation-center";
    case SampleOrigin::annotation_jitter: return "annotation-jitter";
    case SampleOrigin::ring_negative: return "ring-negative";
    case SampleOrigin::random_negative: return "random-negative";
    case SampleOrigin::hard_negative: return "hard-negative";
  }
  return "?";
}

struct PatchSample {
  int scene = 0;  // index into the scene list the set was built from
  int x = 0;      // patch center
  int y = 0;
  bool positive = false;
  SampleOrigin origin = SampleOrigin::random_negative;
};

struct SamplingConfig {
  int d_p = 3;              // positive jitter
  int d_n = 25;             // ring offset and minimum distance of random negatives
  int neg_ratio = 2;        // negatives per positive
  int max_attempts = 1000;  // per random negative
};

struct SampleSet {
  std::vector<PatchSample> samples;
  int skipped_annotations = 0;
  int dropped_ring = 0;  // ring negatives whose patch would leave the image

  std::size_t positives() const
  {
    return std::count_if(samples.begin(), samples.end(), [](const auto& s) { return s.positive; });
  }
  std::size_t negatives() const { return samples.size() - positives(); }
};

/// Whether a 51x51 patch centered on (x, y) lies fully inside the raster.
inline bool patch_fits(int x, int y, int height, int width)
{
  return x >= kPatchRadius && y >= kPatchRadius && x + kPatchRadius < width && y + kPatchRadius < height;
}

inline std::unordered_map<std::string, int> scene_index(std::span<const imagery::SceneImage> scenes)
{
  std::unordered_map<std::string, int> out;
  for (std::size_t i = 0; i < scenes.size(); ++i)
    out.emplace(scenes[i].image_id, static_cast<int>(i));
  return out;
}

/// Initial training set: per annotation, 9 positives on the {-d_p, 0, d_p}^2
/// grid and 8 ring negatives on the {-d_n, 0, d_n}^2 grid, then random
/// negatives at least d_n from every annotation of their scene until the set
/// holds neg_ratio negatives per positive. Annotations whose jittered
/// positives do not fit inside the image are skipped.
inline SampleSet sample_initial(std::span<const imagery::SceneImage> scenes,
                                const std::vector<imagery::Annotation>& annotations, const SamplingConfig& cfg,
                                std::mt19937_64& rng)
{
  require(cfg.d_p >= 0 && cfg.d_n > 0 && cfg.neg_ratio > 0 && cfg.max_attempts > 0, ErrorCode::invalid_argument,
          "sampling parameters must be positive");
  const auto index = scene_index(scenes);
  std::vector<std::vector<const imagery::Annotation*>> per_scene(scenes.size());
  for (const auto& a : annotations) {
    const auto it = index.find(a.image_id);
    require(it != index.end(), ErrorCode::invalid_argument,
            "annotation references unknown image '" + a.image_id + "'");
    per_scene[it->second].push_back(&a);
  }

  SampleSet set;
  std::size_t n_pos = 0;
  for (const auto& a : annotations) {
    const int s = index.at(a.image_id);
    const int h = scenes[s].height(), w = scenes[s].width();
    const int cx = static_cast<int>(std::lround(a.x));
    const int cy = static_cast<int>(std::lround(a.y));
    if (!patch_fits(cx - cfg.d_p, cy - cfg.d_p, h, w) || !patch_fits(cx + cfg.d_p, cy + cfg.d_p, h, w)) {
      ++set.skipped_annotations;
      continue;
    }
    for (int oy = -1; oy <= 1; ++oy)
      for (int ox = -1; ox <= 1; ++ox) {
        const auto origin =
            ox == 0 && oy == 0 ? SampleOrigin::annotation_center : SampleOrigin::annotation_jitter;
        set.samples.push_back({s, cx + ox * cfg.d_p, cy + oy * cfg.d_p, true, origin});
        ++n_pos;
      }
    for (int oy = -1; oy <= 1; ++oy)
      for (int ox = -1; ox <= 1; ++ox) {
        if (ox == 0 && oy == 0)
          continue;
        const int x = cx + ox * cfg.d_n, y = cy + oy * cfg.d_n;
        if (patch_fits(x, y, h, w))
          set.samples.push_back({s, x, y, false, SampleOrigin::ring_negative});
        else
          ++set.dropped_ring;
      }
  }
  if (n_pos == 0)
    return set;

  const std::size_t wanted = n_pos * cfg.neg_ratio;
  std::uniform_int_distribution<int> pick_scene(0, static_cast<int>(scenes.size()) - 1);
  const double min_dist2 = static_cast<double>(cfg.d_n) * cfg.d_n;
  for (std::size_t have = set.negatives(); have < wanted; ++have) {
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_attempts && !placed; ++attempt) {
      const int s = pick_scene(rng);
      const int h = scenes[s].height(), w = scenes[s].width();
      if (h < kPatchSize || w < kPatchSize)
        continue;
      const int x = std::uniform_int_distribution<int>(kPatchRadius, w - 1 - kPatchRadius)(rng);
      const int y = std::uniform_int_distribution<int>(kPatchRadius, h - 1 - kPatchRadius)(rng);
      const bool near = std::any_of(per_scene[s].begin(), per_scene[s].end(), [&](const auto* a) {
        return (a->x - x) * (a->x - x) + (a->y - y) * (a->y - y) < min_dist2;
      });
      if (near)
        continue;
      set.samples.push_back({s, x, y, false, SampleOrigin::random_negative});
      placed = true;
    }
    if (!placed)
      fail(ErrorCode::sampling, "could not place a random negative after " + std::to_string(cfg.max_attempts) +
                                    " attempts");
  }
  return set;
}

/// Writes the 3x51x51 patch centered on (x, y) into `out`, transformed by one
/// of the eight dihedral symmetries of the square: `k & 3` quarter turns, then
/// a horizontal flip when `k & 4`.
inline void extract_patch(const imagery::RgbRaster& raster, int x, int y, int k, float* out)
{
  require(patch_fits(x, y, raster.height(), raster.width()), ErrorCode::invalid_argument,
          "patch leaves the image");
  const int r = kPatchRadius;
  for (int b = 0; b < 3; ++b)
    for (int i = 0; i < kPatchSize; ++i)
      for (int j = 0; j < kPatchSize; ++j) {
        int u = j - r, v = i - r;  // destination offsets (x, y)
        if (k & 4)
          u = -u;
        for (int t = 0; t < (k & 3); ++t) {
          const int nu = v, nv = -u;  // inverse of a quarter turn
          u = nu;
          v = nv;
        }
        out[(static_cast<std::size_t>(b) * kPatchSize + i) * kPatchSize + j] = raster.at(b, y + v, x + u);
      }
}

/// Batch tensor (n, 3, 51, 51) for the given samples and symmetry indices.
inline net::Tensor<float> assemble_batch(std::span<const imagery::SceneImage> scenes,
                                         std::span<const PatchSample> samples, std::span<const int> symmetry)
{
  require(samples.size() == symmetry.size(), ErrorCode::shape, "one symmetry index per sample");
  net::Tensor<float> batch(static_cast<int>(samples.size()), 3, kPatchSize, kPatchSize);
  for (std::size_t i = 0; i < samples.size(); ++i)
    extract_patch(scenes[samples[i].scene].pixels, samples[i].x, samples[i].y, symmetry[i],
                  batch.sample(static_cast<int>(i)));
  return batch;
}

}  // namespace skywatch::detect

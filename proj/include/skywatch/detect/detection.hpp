#pragma once

#include <skywatch/core/error.hpp>
#include <skywatch/imagery/scene.hpp>
#include <skywatch/imagery/scene_store.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

namespace skywatch::detect {

struct Detection {
  std::string image_id;
  double x = 0;
  double y = 0;
  double score = 0;
  bool operator==(const Detection&) const = default;
};

inline nlohmann::json to_json(const Detection& d)
{
  return {{"image_id", d.image_id}, {"x", d.x}, {"y", d.y}, {"score", d.score}};
}

inline Detection detection_from_json(const nlohmann::json& j)
{
  using imagery::store_detail::field;
  return {field<std::string>(j, "image_id"), field<double>(j, "x"), field<double>(j, "y"),
          field<double>(j, "score")};
}

inline std::vector<Detection> read_detections(const std::filesystem::path& path)
{
  return imagery::read_json_lines<Detection>(path, detection_from_json);
}

inline void write_detections(const std::filesystem::path& path, const std::vector<Detection>& detections)
{
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  const std::string text = imagery::json_lines(detections, [](const Detection& d) { return to_json(d); });
  imagery::write_file_bytes(path, text.data(), text.size());
}

struct EvalReport {
  long tp = 0;
  long fa = 0;
  long fn = 0;
  double dr = 0;
  double fdr = 0;
  double score = 0;
};

inline EvalReport make_report(long tp, long fa, long fn)
{
  require(tp >= 0 && fa >= 0 && fn >= 0, ErrorCode::invalid_argument, "negative detection counts");
  EvalReport r{tp, fa, fn};
  r.dr = static_cast<double>(tp) / std::max(1L, tp + fn);
  r.fdr = static_cast<double>(fa) / std::max(1L, tp + fa);
  r.score = r.dr * (1 - r.fdr);
  return r;
}

inline constexpr double kMatchRadius = 25.0;

struct MatchResult {
  EvalReport report;
  std::vector<bool> true_positive;          // per detection
  std::vector<long> matched_detection;      // per annotation, -1 if missed
};

/// Greedy per-annotation matching in input order. Each annotation claims the
/// closest detection of the same image that is not already a true positive
/// (distance ties broken by detection y, then x); it counts as a hit when the
/// distance is at most `radius`.
inline MatchResult match_detections(const std::vector<Detection>& detections,
                                    const std::vector<imagery::Annotation>& annotations,
                                    double radius = kMatchRadius)
{
  std::unordered_map<std::string, std::vector<std::size_t>> by_image;
  for (std::size_t i = 0; i < detections.size(); ++i)
    by_image[detections[i].image_id].push_back(i);

  MatchResult out;
  out.true_positive.assign(detections.size(), false);
  out.matched_detection.assign(annotations.size(), -1);
  long tp = 0;
  for (std::size_t a = 0; a < annotations.size(); ++a) {
    const auto& ann = annotations[a];
    const auto it = by_image.find(ann.image_id);
    if (it == by_image.end())
      continue;
    long best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t i : it->second) {
      if (out.true_positive[i])
        continue;
      const auto& d = detections[i];
      const double dist = std::hypot(d.x - ann.x, d.y - ann.y);
      const bool closer = dist < best_dist ||
                          (dist == best_dist && best >= 0 &&
                           std::pair(d.y, d.x) < std::pair(detections[best].y, detections[best].x));
      if (closer) {
        best = static_cast<long>(i);
        best_dist = dist;
      }
    }
    if (best >= 0 && best_dist <= radius) {
      out.true_positive[best] = true;
      out.matched_detection[a] = best;
      ++tp;
    }
  }
  const long n_det = static_cast<long>(detections.size());
  const long n_ann = static_cast<long>(annotations.size());
  out.report = make_report(tp, n_det - tp, n_ann - tp);
  return out;
}

}  // namespace skywatch::detect

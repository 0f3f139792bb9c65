#pragma once

#include <skywatch/core/error.hpp>
#include <skywatch/detect/detection.hpp>
#include <skywatch/imagery/scene.hpp>

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace skywatch::detect {

enum class Decision { accept, reject };

inline std::string_view to_string(Decision d) { return d == Decision::accept ? "accept" : "reject"; }

inline Decision decision_from_string(std::string_view s)
{
  if (s == "accept")
    return Decision::accept;
  if (s == "reject")
    return Decision::reject;
  fail(ErrorCode::invalid_verdict, "decision must be 'accept' or 'reject', got '" + std::string(s) + "'");
}

struct Verdict {
  std::size_t detection_index = 0;
  Decision decision = Decision::reject;
  double dx = 0;  // reviewer adjustment, accept only
  double dy = 0;
};

struct ImageExtent {
  int width = 0;
  int height = 0;

  bool contains(double x, double y) const { return x >= 0 && y >= 0 && x <= width - 1 && y <= height - 1; }
};

using ExtentMap = std::map<std::string, ImageExtent, std::less<>>;

/// Accepted detections become annotations at the adjusted position; rejected
/// and unreviewed ones are dropped. Later verdicts for the same detection
/// override earlier ones. Output follows detection order.
inline std::vector<imagery::Annotation> bootstrap_annotations(const std::vector<Detection>& detections,
                                                              const std::vector<Verdict>& verdicts,
                                                              const ExtentMap& extents,
                                                              std::string_view source = "review")
{
  std::vector<std::optional<Verdict>> effective(detections.size());
  for (const auto& v : verdicts) {
    require(v.detection_index < detections.size(), ErrorCode::not_found,
            "verdict references detection " + std::to_string(v.detection_index) + " of " +
                std::to_string(detections.size()));
    effective[v.detection_index] = v;
  }
  std::vector<imagery::Annotation> out;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const auto& v = effective[i];
    if (!v || v->decision != Decision::accept)
      continue;
    const auto& d = detections[i];
    const double x = d.x + v->dx, y = d.y + v->dy;
    const auto it = extents.find(d.image_id);
    require(it != extents.end(), ErrorCode::not_found, "no extent known for image '" + d.image_id + "'");
    require(it->second.contains(x, y), ErrorCode::invalid_verdict,
            "adjusted point of detection " + std::to_string(i) + " lies outside its image");
    out.push_back({d.image_id, x, y, std::string(source)});
  }
  return out;
}

}  // namespace skywatch::detect

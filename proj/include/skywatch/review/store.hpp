#pragma once

// Persistent state of the annotation review loop. Each run lives in
// <data_dir>/runs/<run_id>/ as
//   run.json            run metadata, written once
//   detections.jsonl    immutable snapshot of the reviewed detections
//   journal.jsonl       append-only verdict log; state is its replay

#include <skywatch/core/error.hpp>
#include <skywatch/core/time.hpp>
#include <skywatch/detect/bootstrap.hpp>
#include <skywatch/detect/detection.hpp>
#include <skywatch/imagery/png_io.hpp>
#include <skywatch/imagery/scene_store.hpp>

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace skywatch::review {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kPatchSide = 101;
inline constexpr int kPatchHalf = kPatchSide / 2;
inline constexpr double kMaxAdjustment = 25;

struct ReviewRun {
  std::string run_id;
  std::string checkpoint;
  std::string detections_source;
  Timestamp created_at{};
  std::vector<detect::Detection> detections;
};

struct VerdictRecord {
  std::size_t detection_index = 0;
  detect::Decision decision = detect::Decision::reject;
  double dx = 0;
  double dy = 0;
  std::string reviewer;
  Timestamp decided_at{};
};

struct Summary {
  long accepted = 0;
  long rejected = 0;
  long pending = 0;
  std::optional<double> fdr_estimate;  // rejected / reviewed, undefined before any verdict
};

struct Patch {
  int origin_x = 0;  // image coordinates of the crop's top-left pixel
  int origin_y = 0;
  bool clipped = false;
  std::vector<std::uint8_t> png;
};

struct PendingItem {
  std::size_t detection_index = 0;
  detect::Detection detection;
  Patch patch;
};

struct Export {
  std::string run_id;
  Summary summary;
  std::vector<imagery::Annotation> annotations;
};

inline json to_json(const Summary& s)
{
  return {{"accepted", s.accepted},
          {"rejected", s.rejected},
          {"pending", s.pending},
          {"fdr_estimate", s.fdr_estimate ? json(*s.fdr_estimate) : json(nullptr)}};
}

inline json to_json(const VerdictRecord& v)
{
  return {{"detection_index", v.detection_index},
          {"decision", std::string(detect::to_string(v.decision))},
          {"dx", v.dx},
          {"dy", v.dy},
          {"reviewer", v.reviewer},
          {"decided_at", format_timestamp(v.decided_at)}};
}

inline VerdictRecord verdict_from_json(const json& j)
{
  using imagery::store_detail::field;
  VerdictRecord v;
  const json index = field<json>(j, "detection_index");
  require(index.is_number_unsigned() || (index.is_number_integer() && index.get<long>() >= 0),
          ErrorCode::invalid_verdict, "detection_index must be a non-negative integer");
  v.detection_index = index.get<std::size_t>();
  v.decision = detect::decision_from_string(field<std::string>(j, "decision"));
  v.dx = j.contains("dx") ? field<double>(j, "dx") : 0.0;
  v.dy = j.contains("dy") ? field<double>(j, "dy") : 0.0;
  v.reviewer = j.contains("reviewer") ? field<std::string>(j, "reviewer") : "";
  if (j.contains("decided_at"))
    v.decided_at = parse_timestamp(field<std::string>(j, "decided_at"));
  return v;
}

/// The export document: run id, summary and accepted annotations. Its text is
/// a pure function of the run's effective verdicts.
inline json to_json(const Export& e)
{
  json anns = json::array();
  for (const auto& a : e.annotations)
    anns.push_back(imagery::to_json(a));
  return {{"run_id", e.run_id}, {"summary", to_json(e.summary)}, {"annotations", std::move(anns)}};
}

/// 101x101 RGB crop centered on (cx, cy); pixels outside the image are black.
inline Patch crop_patch(const imagery::RgbRaster& raster, int cx, int cy)
{
  imagery::Rgb8Image img;
  img.width = img.height = kPatchSide;
  img.rgb.assign(static_cast<std::size_t>(kPatchSide) * kPatchSide * 3, 0);
  Patch p;
  p.origin_x = cx - kPatchHalf;
  p.origin_y = cy - kPatchHalf;
  for (int y = 0; y < kPatchSide; ++y)
    for (int x = 0; x < kPatchSide; ++x) {
      const int sy = p.origin_y + y, sx = p.origin_x + x;
      if (sy < 0 || sx < 0 || sy >= raster.height() || sx >= raster.width()) {
        p.clipped = true;
        continue;
      }
      for (int b = 0; b < 3; ++b) {
        const float v = std::clamp(raster.at(b, sy, sx), 0.0f, 1.0f);
        img.rgb[(static_cast<std::size_t>(y) * kPatchSide + x) * 3 + b] = static_cast<std::uint8_t>(std::lround(v * 255));
      }
    }
  p.png = imagery::encode_png(img);
  return p;
}

struct StoreOptions {
  std::function<Timestamp()> clock = [] {
    return std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
  };
  std::size_t scene_cache = 32;  // decoded scenes kept for patch rendering
};

/// Thread-safe: reads share a lock, run creation and verdicts take it
/// exclusively, so a verdict is visible to every request after it returns.
class ReviewStore {
 public:
  ReviewStore(fs::path data_dir, imagery::SceneCatalog scenes, StoreOptions options = {})
      : dir_(std::move(data_dir)), scenes_(std::move(scenes)), options_(std::move(options))
  {
    fs::create_directories(runs_dir());
    std::vector<fs::path> found;
    for (const auto& entry : fs::directory_iterator(runs_dir()))
      if (entry.is_directory() && fs::exists(entry.path() / "run.json"))
        found.push_back(entry.path());
    std::sort(found.begin(), found.end());
    for (const auto& p : found)
      load_run(p);
  }

  const fs::path& data_dir() const { return dir_; }

  /// Registers a snapshot of `detections_file`. Without an explicit id the
  /// next free "run-NNNN" is used.
  ReviewRun create_run(const fs::path& detections_file, const std::string& checkpoint,
                       std::optional<std::string> run_id = std::nullopt)
  {
    require(fs::exists(detections_file), ErrorCode::not_found,
            "detections file not found: " + detections_file.string());
    auto detections = detect::read_detections(detections_file);
    std::unique_lock lock(mutex_);
    std::string id = run_id ? *run_id : next_id();
    require(valid_id(id), ErrorCode::invalid_argument,
            "run id may contain only letters, digits, '-', '_' and '.', got '" + id + "'");
    require(!runs_.count(id) && !fs::exists(runs_dir() / id), ErrorCode::conflict, "run '" + id + "' already exists");

    auto state = std::make_unique<RunState>();
    state->run.run_id = id;
    state->run.checkpoint = checkpoint;
    state->run.detections_source = detections_file.string();
    state->run.created_at = options_.clock();
    state->run.detections = std::move(detections);
    state->effective.resize(state->run.detections.size());
    state->order = review_order(state->run.detections);

    const fs::path run_dir = runs_dir() / id;
    fs::create_directories(run_dir);
    detect::write_detections(run_dir / "detections.jsonl", state->run.detections);
    std::ofstream(run_dir / "journal.jsonl", std::ios::binary | std::ios::app);
    write_text(run_dir / "run.json", json{{"run_id", id},
                                          {"checkpoint", checkpoint},
                                          {"detections_source", state->run.detections_source},
                                          {"created_at", format_timestamp(state->run.created_at)},
                                          {"detection_count", state->run.detections.size()}}
                                         .dump(1) +
                                         "\n");
    ReviewRun copy = state->run;
    runs_.emplace(id, std::move(state));
    return copy;
  }

  std::vector<std::string> run_ids() const
  {
    std::shared_lock lock(mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, _] : runs_)
      ids.push_back(id);
    return ids;
  }

  ReviewRun run(const std::string& id) const
  {
    std::shared_lock lock(mutex_);
    return state(id).run;
  }

  Summary summary(const std::string& id) const
  {
    std::shared_lock lock(mutex_);
    return summarize(state(id));
  }

  std::vector<VerdictRecord> journal(const std::string& id) const
  {
    std::shared_lock lock(mutex_);
    return state(id).journal;
  }

  /// Up to `limit` unreviewed detections in (image_id, y, x) order.
  std::vector<PendingItem> next_pending(const std::string& id, std::size_t limit, bool with_patches = true) const
  {
    std::vector<PendingItem> items;
    {
      std::shared_lock lock(mutex_);
      const RunState& s = state(id);
      for (std::size_t i : s.order) {
        if (items.size() >= limit)
          break;
        if (!s.effective[i])
          items.push_back({i, s.run.detections[i], {}});
      }
    }
    if (with_patches)
      for (auto& item : items) {
        const auto scene = scene_for(item.detection.image_id);
        item.patch = crop_patch(scene->pixels, static_cast<int>(std::lround(item.detection.x)),
                                static_cast<int>(std::lround(item.detection.y)));
      }
    return items;
  }

  /// Validates, journals and applies a verdict; returns the new summary.
  Summary submit(const std::string& id, VerdictRecord v)
  {
    require(std::isfinite(v.dx) && std::isfinite(v.dy), ErrorCode::invalid_verdict, "adjustment must be finite");
    require(std::abs(v.dx) <= kMaxAdjustment && std::abs(v.dy) <= kMaxAdjustment, ErrorCode::invalid_verdict,
            "adjustment (" + num(v.dx) + ", " + num(v.dy) + ") exceeds 25 px");
    require(v.decision == detect::Decision::accept || (v.dx == 0 && v.dy == 0), ErrorCode::invalid_verdict,
            "only accepted detections can be adjusted");
    std::string image_id;
    double x = 0, y = 0;
    {
      std::shared_lock lock(mutex_);
      const RunState& s = state(id);
      require(v.detection_index < s.run.detections.size(), ErrorCode::not_found,
              "run '" + id + "' has no detection " + std::to_string(v.detection_index));
      const auto& d = s.run.detections[v.detection_index];
      image_id = d.image_id;
      x = d.x + v.dx;
      y = d.y + v.dy;
    }
    if (v.decision == detect::Decision::accept)
      require(extent_of(image_id).contains(x, y), ErrorCode::invalid_verdict,
              "adjusted point (" + num(x) + ", " + num(y) + ") lies outside image '" + image_id + "'");

    std::unique_lock lock(mutex_);
    RunState& s = state(id);
    v.decided_at = options_.clock();
    append_line(runs_dir() / id / "journal.jsonl", to_json(v).dump());
    apply(s, v);
    return summarize(s);
  }

  Export export_annotations(const std::string& id) const
  {
    std::vector<detect::Detection> detections;
    std::vector<detect::Verdict> verdicts;
    Export e;
    {
      std::shared_lock lock(mutex_);
      const RunState& s = state(id);
      detections = s.run.detections;
      for (const auto& v : s.journal)
        verdicts.push_back({v.detection_index, v.decision, v.dx, v.dy});
      e.run_id = id;
      e.summary = summarize(s);
    }
    detect::ExtentMap extents;
    for (const auto& v : verdicts)
      if (v.decision == detect::Decision::accept) {
        const auto& image = detections[v.detection_index].image_id;
        if (!extents.count(image))
          extents.emplace(image, extent_of(image));
      }
    e.annotations = detect::bootstrap_annotations(detections, verdicts, extents, "review");
    return e;
  }

  detect::ImageExtent extent_of(const std::string& image_id) const
  {
    {
      std::lock_guard lock(cache_mutex_);
      if (const auto it = extents_.find(image_id); it != extents_.end())
        return it->second;
    }
    const auto scene = scene_for(image_id);
    return {scene->width(), scene->height()};
  }

 private:
  struct RunState {
    ReviewRun run;
    std::vector<std::size_t> order;
    std::vector<std::optional<VerdictRecord>> effective;
    std::vector<VerdictRecord> journal;
  };

  fs::path runs_dir() const { return dir_ / "runs"; }

  static bool valid_id(const std::string& id)
  {
    if (id.empty() || id == "." || id == "..")
      return false;
    return std::all_of(id.begin(), id.end(),
                       [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.'; });
  }

  static std::string num(double v)
  {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
  }

  std::string next_id() const
  {
    for (int n = static_cast<int>(runs_.size()) + 1;; ++n) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "run-%04d", n);
      if (!runs_.count(buf) && !fs::exists(runs_dir() / buf))
        return buf;
    }
  }

  static std::vector<std::size_t> review_order(const std::vector<detect::Detection>& d)
  {
    std::vector<std::size_t> order(d.size());
    for (std::size_t i = 0; i < order.size(); ++i)
      order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return std::tie(d[a].image_id, d[a].y, d[a].x) < std::tie(d[b].image_id, d[b].y, d[b].x);
    });
    return order;
  }

  static void apply(RunState& s, const VerdictRecord& v)
  {
    s.journal.push_back(v);
    s.effective[v.detection_index] = v;
  }

  static Summary summarize(const RunState& s)
  {
    Summary out;
    for (const auto& v : s.effective) {
      if (!v)
        ++out.pending;
      else if (v->decision == detect::Decision::accept)
        ++out.accepted;
      else
        ++out.rejected;
    }
    if (out.accepted + out.rejected > 0)
      out.fdr_estimate = static_cast<double>(out.rejected) / static_cast<double>(out.accepted + out.rejected);
    return out;
  }

  const RunState& state(const std::string& id) const
  {
    const auto it = runs_.find(id);
    require(it != runs_.end(), ErrorCode::not_found, "unknown run '" + id + "'");
    return *it->second;
  }

  RunState& state(const std::string& id)
  {
    const auto it = runs_.find(id);
    require(it != runs_.end(), ErrorCode::not_found, "unknown run '" + id + "'");
    return *it->second;
  }

  void load_run(const fs::path& run_dir)
  {
    using imagery::store_detail::field;
    const json meta = imagery::store_detail::parse_json_file(run_dir / "run.json");
    auto s = std::make_unique<RunState>();
    s->run.run_id = field<std::string>(meta, "run_id");
    s->run.checkpoint = field<std::string>(meta, "checkpoint");
    s->run.detections_source = meta.value("detections_source", "");
    s->run.created_at = parse_timestamp(field<std::string>(meta, "created_at"));
    s->run.detections = detect::read_detections(run_dir / "detections.jsonl");
    s->effective.resize(s->run.detections.size());
    s->order = review_order(s->run.detections);
    std::ifstream in(run_dir / "journal.jsonl");
    std::string line;
    for (long n = 1; std::getline(in, line); ++n) {
      if (line.find_first_not_of(" \t\r") == std::string::npos)
        continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error& e) {
        fail(ErrorCode::format, (run_dir / "journal.jsonl").string() + ":" + std::to_string(n) + ": " + e.what());
      }
      const VerdictRecord v = verdict_from_json(j);
      require(v.detection_index < s->run.detections.size(), ErrorCode::format,
              (run_dir / "journal.jsonl").string() + ":" + std::to_string(n) + ": detection index out of range");
      apply(*s, v);
    }
    runs_.emplace(s->run.run_id, std::move(s));
  }

  std::shared_ptr<const imagery::SceneImage> scene_for(const std::string& image_id) const
  {
    {
      std::lock_guard lock(cache_mutex_);
      if (const auto it = scene_cache_.find(image_id); it != scene_cache_.end())
        return it->second;
    }
    auto scene = std::make_shared<const imagery::SceneImage>(scenes_.load(image_id));
    std::lock_guard lock(cache_mutex_);
    if (scene_cache_.size() >= options_.scene_cache)
      scene_cache_.clear();
    scene_cache_[image_id] = scene;
    extents_[image_id] = {scene->width(), scene->height()};
    return scene;
  }

  static void write_text(const fs::path& path, const std::string& text)
  {
    imagery::write_file_bytes(path, text.data(), text.size());
  }

  static void append_line(const fs::path& path, const std::string& line)
  {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    require(static_cast<bool>(out), ErrorCode::io, "cannot append to " + path.string());
    out << line << '\n';
    out.flush();
    require(static_cast<bool>(out), ErrorCode::io, "write failed for " + path.string());
  }

  fs::path dir_;
  imagery::SceneCatalog scenes_;
  StoreOptions options_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::unique_ptr<RunState>> runs_;
  mutable std::mutex cache_mutex_;
  mutable std::map<std::string, std::shared_ptr<const imagery::SceneImage>> scene_cache_;
  mutable std::map<std::string, detect::ImageExtent> extents_;
};

}  // namespace skywatch::review

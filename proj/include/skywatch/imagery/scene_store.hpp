#pragma once

// On-disk scene layout: <root>/<aoi_id>/<ISO8601 timestamp>.png with a
// same-stem .json sidecar, plus JSON-lines annotation files.

#include <skywatch/core/error.hpp>
#include <skywatch/core/time.hpp>
#include <skywatch/imagery/png_io.hpp>
#include <skywatch/imagery/scene.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace skywatch::imagery {

namespace fs = std::filesystem;
using nlohmann::json;

inline Rgb8Image to_rgb8(const RgbRaster& raster)
{
  Rgb8Image img;
  img.width = raster.width();
  img.height = raster.height();
  img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int b = 0; b < 3; ++b) {
        const float v = std::clamp(raster.at(b, y, x), 0.0f, 1.0f);
        img.rgb[(static_cast<std::size_t>(y) * img.width + x) * 3 + b] =
            static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
  return img;
}

inline RgbRaster from_rgb8(const Rgb8Image& img)
{
  RgbRaster raster(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int b = 0; b < 3; ++b)
        raster.at(b, y, x) =
            img.rgb[(static_cast<std::size_t>(y) * img.width + x) * 3 + b] / 255.0f;
  return raster;
}

inline json sidecar_json(const SceneImage& scene)
{
  json stats = json::array();
  for (const auto& row : scene.cell_stats) {
    json r = json::array();
    for (const auto& c : row)
      r.push_back({{"cloud", c.cloud_fraction}, {"missing", c.missing_fraction}});
    stats.push_back(std::move(r));
  }
  return {{"image_id", scene.image_id},
          {"aoi_id", scene.aoi_id},
          {"timestamp", format_timestamp(scene.timestamp)},
          {"gsd_m", scene.gsd_m},
          {"width", scene.width()},
          {"height", scene.height()},
          {"cell_stats", std::move(stats)}};
}

namespace store_detail {

template <typename T>
T field(const json& j, const char* name)
{
  if (!j.is_object() || !j.contains(name))
    fail(ErrorCode::format, std::string("record lacks '") + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::format, std::string("bad field '") + name + "': " + e.what());
  }
}

inline json parse_json_file(const fs::path& path)
{
  std::ifstream in(path);
  if (!in)
    fail(ErrorCode::io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::format, "corrupt JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace store_detail

/// Fills everything except pixels from a sidecar document.
inline SceneImage scene_from_sidecar(const json& meta)
{
  using store_detail::field;
  SceneImage scene;
  scene.image_id = field<std::string>(meta, "image_id");
  scene.aoi_id = field<std::string>(meta, "aoi_id");
  scene.timestamp = parse_timestamp(field<std::string>(meta, "timestamp"));
  scene.gsd_m = field<double>(meta, "gsd_m");
  const json stats = field<json>(meta, "cell_stats");
  if (!stats.is_array() || stats.size() != kGridSize)
    fail(ErrorCode::format, "cell_stats must be a 7x7 array");
  for (int i = 0; i < kGridSize; ++i) {
    if (!stats[i].is_array() || stats[i].size() != kGridSize)
      fail(ErrorCode::format, "cell_stats must be a 7x7 array");
    for (int j = 0; j < kGridSize; ++j)
      scene.cell_stats[i][j] = {field<double>(stats[i][j], "cloud"),
                                field<double>(stats[i][j], "missing")};
  }
  return scene;
}

inline fs::path scene_png_path(const fs::path& root, const SceneImage& scene)
{
  return root / scene.aoi_id / (format_timestamp(scene.timestamp) + ".png");
}

/// Writes PNG + sidecar; returns the PNG path.
inline fs::path store_scene(const SceneImage& scene, const fs::path& root)
{
  validate_scene(scene);
  const fs::path png_path = scene_png_path(root, scene);
  fs::create_directories(png_path.parent_path());
  const auto bytes = encode_png(to_rgb8(scene.pixels));
  write_file_bytes(png_path, bytes.data(), bytes.size());
  const std::string meta = sidecar_json(scene).dump(1) + "\n";
  fs::path json_path = png_path;
  json_path.replace_extension(".json");
  write_file_bytes(json_path, meta.data(), meta.size());
  return png_path;
}

/// Accepts either the .png or the .json path of a stored scene. Rasters whose
/// sides are not multiples of 7 are zero-padded (see pad_to_grid).
inline SceneImage load_scene(const fs::path& path)
{
  fs::path png_path = path;
  png_path.replace_extension(".png");
  fs::path json_path = path;
  json_path.replace_extension(".json");
  if (!fs::exists(png_path))
    fail(ErrorCode::io, "missing scene raster " + png_path.string());
  if (!fs::exists(json_path))
    fail(ErrorCode::io, "missing scene sidecar " + json_path.string());

  const json meta = store_detail::parse_json_file(json_path);
  SceneImage scene = scene_from_sidecar(meta);
  scene.pixels = from_rgb8(decode_png(read_file_bytes(png_path)));
  if (meta.contains("width") || meta.contains("height")) {
    const int w = store_detail::field<int>(meta, "width");
    const int h = store_detail::field<int>(meta, "height");
    if (w != scene.width() || h != scene.height())
      fail(ErrorCode::format, "sidecar size " + std::to_string(w) + "x" + std::to_string(h) +
                                  " does not match raster " + std::to_string(scene.width()) + "x" +
                                  std::to_string(scene.height()));
  }
  pad_to_grid(scene);
  validate_scene(scene);
  return scene;
}

/// All scene PNGs below `root`, sorted by (aoi directory, timestamp stem).
inline std::vector<fs::path> list_scenes(const fs::path& root)
{
  if (!fs::is_directory(root))
    fail(ErrorCode::io, "scene directory not found: " + root.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      fs::path sidecar = entry.path();
      sidecar.replace_extension(".json");
      if (fs::exists(sidecar))
        out.push_back(entry.path());
    }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<SceneImage> load_scenes(const fs::path& root)
{
  std::vector<SceneImage> scenes;
  for (const auto& p : list_scenes(root))
    scenes.push_back(load_scene(p));
  return scenes;
}

/// image_id -> raster path, built from sidecars without decoding rasters.
class SceneCatalog {
 public:
  SceneCatalog() = default;
  explicit SceneCatalog(const fs::path& root)
  {
    for (const auto& png : list_scenes(root)) {
      fs::path sidecar = png;
      sidecar.replace_extension(".json");
      const json meta = store_detail::parse_json_file(sidecar);
      paths_[store_detail::field<std::string>(meta, "image_id")] = png;
    }
  }

  void add(const std::string& image_id, fs::path png) { paths_[image_id] = std::move(png); }
  bool contains(const std::string& image_id) const { return paths_.count(image_id) != 0; }
  std::size_t size() const { return paths_.size(); }

  const fs::path& path_of(const std::string& image_id) const
  {
    const auto it = paths_.find(image_id);
    if (it == paths_.end())
      fail(ErrorCode::not_found, "unknown image_id '" + image_id + "'");
    return it->second;
  }

  SceneImage load(const std::string& image_id) const { return load_scene(path_of(image_id)); }

 private:
  std::map<std::string, fs::path> paths_;
};

// ---- annotations ---------------------------------------------------------

inline json to_json(const Annotation& a)
{
  return {{"image_id", a.image_id}, {"x", a.x}, {"y", a.y}, {"source", a.source}};
}

inline Annotation annotation_from_json(const json& j)
{
  using store_detail::field;
  return {field<std::string>(j, "image_id"), field<double>(j, "x"), field<double>(j, "y"),
          j.contains("source") ? field<std::string>(j, "source") : std::string{}};
}

/// Parses a JSON-lines stream; blank lines are ignored.
template <typename T, typename FromJson>
std::vector<T> read_json_lines(const fs::path& path, FromJson&& from_json)
{
  std::ifstream in(path);
  if (!in)
    fail(ErrorCode::io, "cannot open " + path.string());
  std::vector<T> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(ErrorCode::format,
           path.string() + ":" + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    out.push_back(from_json(j));
  }
  return out;
}

template <typename Range, typename ToJson>
std::string json_lines(const Range& items, ToJson&& to_json_fn)
{
  std::string out;
  for (const auto& item : items)
    out += to_json_fn(item).dump() + "\n";
  return out;
}

inline std::vector<Annotation> read_annotations(const fs::path& path)
{
  return read_json_lines<Annotation>(path, annotation_from_json);
}

inline void write_annotations(const fs::path& path, const std::vector<Annotation>& annotations)
{
  if (path.has_parent_path())
    fs::create_directories(path.parent_path());
  const std::string text =
      json_lines(annotations, [](const Annotation& a) { return to_json(a); });
  write_file_bytes(path, text.data(), text.size());
}

}  // namespace skywatch::imagery

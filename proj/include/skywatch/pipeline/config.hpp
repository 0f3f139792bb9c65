#pragma once

// Pipeline configuration. Precedence is flags > --config file > defaults;
// the JSON form is the merge carrier, so a config file is just a partial
// document of the same shape as `to_json(PipelineConfig{})`.

#include <skywatch/core/error.hpp>
#include <skywatch/core/time.hpp>
#include <skywatch/detect/inference.hpp>
#include <skywatch/detect/train.hpp>
#include <skywatch/imagery/synth.hpp>
#include <skywatch/series/analysis.hpp>
#include <skywatch/series/breaks.hpp>
#include <skywatch/series/counts.hpp>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

namespace skywatch::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

struct Paths {
  std::string work_dir = ".";
  // empty entries resolve below work_dir
  std::string scenes;
  std::string annotations;
  std::string checkpoint;
  std::string detections;
  std::string series;
  std::string reports;
  std::string data_dir;
  std::string epi;
  std::string reference;

  fs::path resolve(const std::string& value, const char* fallback) const
  {
    return value.empty() ? fs::path(work_dir) / fallback : fs::path(value);
  }
  fs::path scenes_dir() const { return resolve(scenes, "scenes"); }
  fs::path annotations_file() const { return resolve(annotations, "annotations.jsonl"); }
  fs::path checkpoint_dir() const { return resolve(checkpoint, "checkpoint"); }
  fs::path detections_file() const { return resolve(detections, "detections.jsonl"); }
  fs::path series_path() const { return resolve(series, "series"); }
  fs::path reports_dir() const { return resolve(reports, "reports"); }
  fs::path review_dir() const { return resolve(data_dir, "review"); }
};

struct SynthSection {
  std::uint64_t seed = 0;
  int scenes = 200;
  int image_size = 448;
  double planes_per_image = 2.0;
  std::string aoi_id = "SYN";
  std::string start = "2020-01-01T10:30:00Z";
  int revisit_days = 1;
  bool activity = true;  // COVID-like drop and recovery over scene index
  int drop_index = 60;
  int trough_index = 90;
  double floor = 0.1;
  double recovery_rate = 0.03;
};

struct TrainSection {
  int batch_size = 256;
  int iterations = 3000;
  double lr = 1e-4;
  int patience = 10;
  int max_epochs = 50;
  std::uint64_t seed = 0;
};

struct DetectSection {
  double threshold = detect::kDetectionThreshold;
  int nms_radius = detect::kNmsRadius;
  int border_margin = detect::kPatchRadius;
  int jobs = detect::default_jobs();
};

struct SeriesSection {
  int window = series::kWindowDays;
  int step = 1;
  std::string method = "sma";
  int short_window = series::kShortWindow;
  int long_window = series::kLongWindow;
  int msize = series::kEdmMinSize;
  double beta = series::kEdmBeta;
  int permutations = series::kEdmPermutations;
  std::uint64_t seed = 0;
  std::string disruption_date = "2020-03-01";
  std::string until;  // optional end of the recovery fit
  std::string observed_break_date;
  std::string channel = "cases";
  std::string correlate_from;
  bool normalize = true;
};

struct ServeSection {
  std::string host = "127.0.0.1";
  int port = 8080;
};

struct PipelineConfig {
  Paths paths;
  SynthSection synth;
  TrainSection train;
  DetectSection detect;
  SeriesSection series;
  ServeSection serve;
};

inline json to_json(const PipelineConfig& c)
{
  const auto& p = c.paths;
  const auto& s = c.synth;
  const auto& t = c.train;
  const auto& d = c.detect;
  const auto& r = c.series;
  return {
      {"paths",
       {{"work_dir", p.work_dir},
        {"scenes", p.scenes},
        {"annotations", p.annotations},
        {"checkpoint", p.checkpoint},
        {"detections", p.detections},
        {"series", p.series},
        {"reports", p.reports},
        {"data_dir", p.data_dir},
        {"epi", p.epi},
        {"reference", p.reference}}},
      {"synth",
       {{"seed", s.seed},
        {"scenes", s.scenes},
        {"image_size", s.image_size},
        {"planes_per_image", s.planes_per_image},
        {"aoi_id", s.aoi_id},
        {"start", s.start},
        {"revisit_days", s.revisit_days},
        {"activity", s.activity},
        {"drop_index", s.drop_index},
        {"trough_index", s.trough_index},
        {"floor", s.floor},
        {"recovery_rate", s.recovery_rate}}},
      {"train",
       {{"batch_size", t.batch_size},
        {"iterations", t.iterations},
        {"lr", t.lr},
        {"patience", t.patience},
        {"max_epochs", t.max_epochs},
        {"seed", t.seed}}},
      {"detect",
       {{"threshold", d.threshold}, {"nms_radius", d.nms_radius}, {"border_margin", d.border_margin}, {"jobs", d.jobs}}},
      {"series",
       {{"window", r.window},
        {"step", r.step},
        {"method", r.method},
        {"short", r.short_window},
        {"long", r.long_window},
        {"msize", r.msize},
        {"beta", r.beta},
        {"permutations", r.permutations},
        {"seed", r.seed},
        {"disruption_date", r.disruption_date},
        {"until", r.until},
        {"observed_break_date", r.observed_break_date},
        {"channel", r.channel},
        {"correlate_from", r.correlate_from},
        {"normalize", r.normalize}}},
      {"serve", {{"host", c.serve.host}, {"port", c.serve.port}}},
  };
}

namespace config_detail {

template <typename T>
void take(const json& j, const char* key, T& out, const std::string& where)
{
  if (!j.contains(key))
    return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::invalid_argument, "config '" + where + "." + key + "': " + e.what());
  }
}

// Unknown keys are rejected so a typo cannot silently fall back to a default.
inline void check_keys(const json& j, const json& reference, const std::string& where)
{
  require(j.is_object(), ErrorCode::invalid_argument, "config '" + where + "' must be an object");
  for (const auto& [k, v] : j.items())
    require(reference.contains(k), ErrorCode::invalid_argument,
            "unknown config key '" + (where.empty() ? k : where + "." + k) + "'");
}

}  // namespace config_detail

/// Overlays a (possibly partial) config document onto `base`.
inline PipelineConfig merge(PipelineConfig base, const json& j)
{
  using config_detail::take;
  const json ref = to_json(base);
  config_detail::check_keys(j, ref, "");
  auto section = [&](const char* name) -> json {
    if (!j.contains(name))
      return json::object();
    config_detail::check_keys(j.at(name), ref.at(name), name);
    return j.at(name);
  };
  const json p = section("paths"), s = section("synth"), t = section("train"), d = section("detect"),
             r = section("series"), v = section("serve");
  auto& P = base.paths;
  take(p, "work_dir", P.work_dir, "paths");
  take(p, "scenes", P.scenes, "paths");
  take(p, "annotations", P.annotations, "paths");
  take(p, "checkpoint", P.checkpoint, "paths");
  take(p, "detections", P.detections, "paths");
  take(p, "series", P.series, "paths");
  take(p, "reports", P.reports, "paths");
  take(p, "data_dir", P.data_dir, "paths");
  take(p, "epi", P.epi, "paths");
  take(p, "reference", P.reference, "paths");
  auto& S = base.synth;
  take(s, "seed", S.seed, "synth");
  take(s, "scenes", S.scenes, "synth");
  take(s, "image_size", S.image_size, "synth");
  take(s, "planes_per_image", S.planes_per_image, "synth");
  take(s, "aoi_id", S.aoi_id, "synth");
  take(s, "start", S.start, "synth");
  take(s, "revisit_days", S.revisit_days, "synth");
  take(s, "activity", S.activity, "synth");
  take(s, "drop_index", S.drop_index, "synth");
  take(s, "trough_index", S.trough_index, "synth");
  take(s, "floor", S.floor, "synth");
  take(s, "recovery_rate", S.recovery_rate, "synth");
  auto& T = base.train;
  take(t, "batch_size", T.batch_size, "train");
  take(t, "iterations", T.iterations, "train");
  take(t, "lr", T.lr, "train");
  take(t, "patience", T.patience, "train");
  take(t, "max_epochs", T.max_epochs, "train");
  take(t, "seed", T.seed, "train");
  auto& D = base.detect;
  take(d, "threshold", D.threshold, "detect");
  take(d, "nms_radius", D.nms_radius, "detect");
  take(d, "border_margin", D.border_margin, "detect");
  take(d, "jobs", D.jobs, "detect");
  auto& R = base.series;
  take(r, "window", R.window, "series");
  take(r, "step", R.step, "series");
  take(r, "method", R.method, "series");
  take(r, "short", R.short_window, "series");
  take(r, "long", R.long_window, "series");
  take(r, "msize", R.msize, "series");
  take(r, "beta", R.beta, "series");
  take(r, "permutations", R.permutations, "series");
  take(r, "seed", R.seed, "series");
  take(r, "disruption_date", R.disruption_date, "series");
  take(r, "until", R.until, "series");
  take(r, "observed_break_date", R.observed_break_date, "series");
  take(r, "channel", R.channel, "series");
  take(r, "correlate_from", R.correlate_from, "series");
  take(r, "normalize", R.normalize, "series");
  take(v, "host", base.serve.host, "serve");
  take(v, "port", base.serve.port, "serve");
  return base;
}

inline PipelineConfig load_config(const fs::path& path, PipelineConfig base = {})
{
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::not_found, "config file not found: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::invalid_argument, "config " + path.string() + ": " + e.what());
  }
  return merge(std::move(base), j);
}

// ---- typed views used by the stages ---------------------------------------

inline imagery::SynthConfig synth_config(const PipelineConfig& c)
{
  imagery::SynthConfig s;
  s.rng_seed = c.synth.seed;
  s.image_size = c.synth.image_size;
  s.planes_per_image = c.synth.planes_per_image;
  s.aoi_id = c.synth.aoi_id;
  s.start_time = parse_timestamp(c.synth.start);
  s.revisit_days = c.synth.revisit_days;
  if (c.synth.activity)
    s.activity = imagery::ActivityProfile{c.synth.drop_index, c.synth.trough_index, c.synth.floor,
                                          c.synth.recovery_rate};
  imagery::validate(s);
  require(c.synth.scenes > 0, ErrorCode::invalid_argument, "synth needs at least one scene");
  return s;
}

inline detect::DetectOptions detect_options(const PipelineConfig& c)
{
  require(c.detect.threshold > 0 && c.detect.threshold < 1, ErrorCode::invalid_argument,
          "detection threshold must lie in (0, 1)");
  require(c.detect.nms_radius >= 0 && c.detect.border_margin >= 0 && c.detect.jobs > 0,
          ErrorCode::invalid_argument, "nms radius, border margin and jobs must be non-negative");
  detect::DetectOptions o;
  o.threshold = c.detect.threshold;
  o.nms_radius = c.detect.nms_radius;
  o.border_margin = c.detect.border_margin;
  return o;
}

inline detect::TrainConfig train_config(const PipelineConfig& c)
{
  detect::TrainConfig t;
  t.batch_size = c.train.batch_size;
  t.iterations_per_epoch = c.train.iterations;
  t.lr = c.train.lr;
  t.patience = c.train.patience;
  t.max_epochs = c.train.max_epochs;
  t.rng_seed = c.train.seed;
  t.detect = detect_options(c);
  t.jobs = c.detect.jobs;
  t.validate();
  return t;
}

inline series::BreakMethod break_method(const PipelineConfig& c)
{
  if (c.series.method == "sma")
    return series::BreakMethod::sma_crossover;
  return series::break_method_from_string(c.series.method);
}

inline series::EdmOptions edm_options(const PipelineConfig& c)
{
  series::EdmOptions o;
  o.msize = c.series.msize;
  o.beta = c.series.beta;
  o.permutations = c.series.permutations;
  o.seed = c.series.seed;
  return o;
}

inline Day disruption_day(const PipelineConfig& c) { return parse_day(c.series.disruption_date); }

inline std::optional<Day> until_day(const PipelineConfig& c)
{
  if (c.series.until.empty())
    return std::nullopt;
  return parse_day(c.series.until);
}

/// The parameters a report depends on, without paths, so reports do not
/// change with the directory they were produced in. With `keys`, only those
/// entries of a single section are kept.
inline json echo(const PipelineConfig& c, std::initializer_list<const char*> sections,
                 std::initializer_list<const char*> keys = {})
{
  const json all = to_json(c);
  json out = json::object();
  for (const char* s : sections) {
    if (keys.size() == 0) {
      out[s] = all.at(s);
      continue;
    }
    out[s] = json::object();
    for (const char* k : keys)
      out[s][k] = all.at(s).at(k);
  }
  if (out.contains("detect"))
    out["detect"].erase("jobs");  // affects speed only
  return out;
}

}  // namespace skywatch::pipeline

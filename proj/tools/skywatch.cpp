// skywatch: flying-airplane detection and airport activity time series.
//
// Exit status: 0 ok, 2 missing input, 3 invalid configuration or data.
// Failures also print one JSON line on stderr: {"error":..,"message":..,"exit":..}.

#include <skywatch/pipeline/config.hpp>
#include <skywatch/pipeline/stages.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <list>
#include <map>
#include <string>
#include <vector>

using namespace skywatch;
using namespace skywatch::pipeline;
using nlohmann::json;

namespace {

enum class Kind { integer, unsigned_integer, real, text, boolean };

struct FlagSpec {
  std::string name;  // without dashes
  std::vector<std::string> pointers;
  Kind kind;
  std::string help;
};

// One entry per flag; the same flag may write several config keys (e.g. the
// `all` seed).
const std::map<std::string, FlagSpec>& flag_table()
{
  static const std::map<std::string, FlagSpec> table = [] {
    std::map<std::string, FlagSpec> t;
    auto add = [&](std::string id, std::string name, std::vector<std::string> ptrs, Kind k, std::string help) {
      t.emplace(std::move(id), FlagSpec{std::move(name), std::move(ptrs), k, std::move(help)});
    };
    add("work-dir", "work-dir", {"/paths/work_dir"}, Kind::text, "Directory the default paths resolve under");
    add("scenes-dir", "scenes-dir", {"/paths/scenes"}, Kind::text, "Scene store root [<work-dir>/scenes]");
    add("annotations", "annotations", {"/paths/annotations"}, Kind::text,
        "Annotation JSON lines [<work-dir>/annotations.jsonl]");
    add("checkpoint", "checkpoint", {"/paths/checkpoint"}, Kind::text, "Checkpoint directory [<work-dir>/checkpoint]");
    add("detections", "detections", {"/paths/detections"}, Kind::text,
        "Detection JSON lines [<work-dir>/detections.jsonl]");
    add("series", "series", {"/paths/series"}, Kind::text, "Series CSV file or directory [<work-dir>/series]");
    add("reports", "reports", {"/paths/reports"}, Kind::text, "Report directory [<work-dir>/reports]");
    add("data-dir", "data-dir", {"/paths/data_dir"}, Kind::text,
        "Review data directory [<work-dir>/review, env SKYWATCH_DATA_DIR]");
    add("epi", "epi", {"/paths/epi"}, Kind::text, "Epidemiological CSV (date,new_cases,new_deaths)");
    add("reference", "reference", {"/paths/reference"}, Kind::text,
        "Reference monthly CSV (month,value), or a directory of <aoi>.csv");

    add("synth-seed", "seed", {"/synth/seed"}, Kind::unsigned_integer, "Generator seed");
    add("scenes", "scenes", {"/synth/scenes"}, Kind::integer, "Number of scenes to generate");
    add("image-size", "image-size", {"/synth/image_size"}, Kind::integer, "Scene side in pixels (multiple of 7)");
    add("planes", "planes", {"/synth/planes_per_image"}, Kind::real, "Expected planes per scene before activity scaling");
    add("aoi", "aoi", {"/synth/aoi_id"}, Kind::text, "AOI id of generated scenes");
    add("start", "start", {"/synth/start"}, Kind::text, "Acquisition time of the first scene (ISO 8601, UTC)");
    add("revisit-days", "revisit-days", {"/synth/revisit_days"}, Kind::integer, "Days between acquisitions");
    add("activity", "activity", {"/synth/activity"}, Kind::boolean, "Apply the drop-and-recovery activity profile");
    add("drop-index", "drop-index", {"/synth/drop_index"}, Kind::integer, "Scene index where activity starts to fall");
    add("trough-index", "trough-index", {"/synth/trough_index"}, Kind::integer, "Scene index of the activity minimum");
    add("floor", "floor", {"/synth/floor"}, Kind::real, "Activity multiplier at the trough");
    add("recovery-rate", "recovery-rate", {"/synth/recovery_rate"}, Kind::real, "Recovery rate per scene after the trough");

    add("batch", "batch", {"/train/batch_size"}, Kind::integer, "Patches per training batch");
    add("iterations", "iterations", {"/train/iterations"}, Kind::integer, "Batches per epoch");
    add("lr", "lr", {"/train/lr"}, Kind::real, "Adam learning rate");
    add("patience", "patience", {"/train/patience"}, Kind::integer, "Stop after this many epochs without a save (N)");
    add("max-epochs", "max-epochs", {"/train/max_epochs"}, Kind::integer, "Epoch limit (M)");
    add("train-seed", "seed", {"/train/seed"}, Kind::unsigned_integer, "Initialization and sampling seed");

    add("threshold", "threshold", {"/detect/threshold"}, Kind::real, "Detection probability threshold");
    add("nms-radius", "nms-radius", {"/detect/nms_radius"}, Kind::integer, "Peak suppression radius in pixels");
    add("border-margin", "border-margin", {"/detect/border_margin"}, Kind::integer,
        "Drop detections closer than this to the image border");
    add("jobs", "jobs", {"/detect/jobs"}, Kind::integer, "Scenes processed in parallel [available parallelism]");

    add("window", "window", {"/series/window"}, Kind::integer, "Series aggregation window in days");
    add("step", "step", {"/series/step"}, Kind::integer, "Days between series values");
    add("method", "method", {"/series/method"}, Kind::text, "Break method: sma or edm");
    add("short", "short", {"/series/short"}, Kind::integer, "Short moving-average window in days");
    add("long", "long", {"/series/long"}, Kind::integer, "Long moving-average window in days");
    add("msize", "msize", {"/series/msize"}, Kind::integer, "EDM minimum segment size");
    add("beta", "beta", {"/series/beta"}, Kind::real, "EDM significance margin over the permutation 95th percentile");
    add("permutations", "permutations", {"/series/permutations"}, Kind::integer, "EDM permutation count");
    add("series-seed", "seed", {"/series/seed"}, Kind::unsigned_integer, "EDM permutation seed");
    add("disruption", "disruption", {"/series/disruption_date"}, Kind::text,
        "Disruption date; the recovery baseline uses dates before it");
    add("until", "until", {"/series/until"}, Kind::text, "Last date used by the recovery fit");
    add("observed", "observed", {"/series/observed_break_date"}, Kind::text, "Observed break date for eval-breaks");
    add("channel", "channel", {"/series/channel"}, Kind::text, "Epidemiological channel: cases or deaths");
    add("from", "from", {"/series/correlate_from"}, Kind::text, "First date of the correlation [disruption date]");
    add("normalize", "normalize", {"/series/normalize"}, Kind::boolean, "Divide both series by their maximum");

    add("host", "host", {"/serve/host"}, Kind::text, "Listen address");
    add("port", "port", {"/serve/port"}, Kind::integer, "Listen port");

    add("all-seed", "seed", {"/synth/seed", "/train/seed", "/series/seed"}, Kind::unsigned_integer,
        "Seed for generation, training and permutations");
    return t;
  }();
  return table;
}

const std::map<std::string, std::vector<std::string>>& stage_flags()
{
  static const std::vector<std::string> synth = {"scenes-dir", "annotations", "synth-seed", "scenes", "image-size",
                                                 "planes", "aoi", "start", "revisit-days", "activity", "drop-index",
                                                 "trough-index", "floor", "recovery-rate"};
  static const std::vector<std::string> train = {"scenes-dir", "annotations", "checkpoint", "reports", "batch",
                                                 "iterations", "lr", "patience", "max-epochs", "train-seed",
                                                 "threshold", "nms-radius", "border-margin", "jobs"};
  static const std::vector<std::string> det = {"scenes-dir", "checkpoint", "detections", "annotations", "reports",
                                               "threshold", "nms-radius", "border-margin", "jobs"};
  static const std::vector<std::string> ser = {"scenes-dir", "detections", "series", "window", "step"};
  static const std::vector<std::string> brk = {"series", "reports", "method", "short", "long", "msize", "beta",
                                               "permutations", "series-seed"};
  static const std::vector<std::string> rec = {"series", "reports", "disruption", "until", "short"};
  static const std::vector<std::string> cor = {"series", "reports", "epi", "channel", "from", "disruption"};
  static const std::vector<std::string> evb = {"series", "reports", "method", "observed", "permutations",
                                               "series-seed"};
  static const std::vector<std::string> cmp = {"series", "reports", "reference", "normalize"};
  static const std::vector<std::string> srv = {"data-dir", "scenes-dir", "host", "port"};
  static const std::vector<std::string> exp = {"data-dir", "scenes-dir", "reports"};
  static const std::map<std::string, std::vector<std::string>> m = [&] {
    std::map<std::string, std::vector<std::string>> out = {
        {"synth", synth}, {"train", train}, {"detect", det}, {"series", ser},  {"break", brk}, {"recover", rec},
        {"correlate", cor}, {"eval-breaks", evb}, {"compare", cmp}, {"serve", srv}, {"export", exp}};
    std::vector<std::string> all;
    for (const auto* part : {&synth, &train, &det, &ser, &brk, &rec, &cor, &evb, &cmp}) {
      for (const auto& f : *part)
        if (std::find(all.begin(), all.end(), f) == all.end() && !f.ends_with("-seed"))
          all.push_back(f);
    }
    all.push_back("all-seed");
    out["all"] = all;
    return out;
  }();
  return m;
}

const std::map<std::string, std::string>& stage_help()
{
  static const std::map<std::string, std::string> h = {
      {"synth", "Generate a seeded synthetic scene corpus with ground-truth annotations"},
      {"train", "Train the detector with hard-negative mining"},
      {"detect", "Run the detector over a scene store"},
      {"series", "Count detections per image and build the 30-day series per AOI"},
      {"break", "Find the structural break of each series"},
      {"recover", "Fit the exponential recovery model after each break"},
      {"correlate", "Correlate activity with epidemiological data"},
      {"eval-breaks", "Grid-search break parameters against an observed break date"},
      {"compare", "Compare monthly estimates with a reference series"},
      {"serve", "Serve the review HTTP API"},
      {"export", "Export the annotations accepted in a review run"},
      {"all", "synth, train, detect, series, break and recover in one run"},
  };
  return h;
}

struct Given {
  const FlagSpec* spec;
  std::string value;
  CLI::Option* option = nullptr;
};

json parse_value(const FlagSpec& f, const std::string& v)
{
  auto bad = [&]() -> json {
    fail(ErrorCode::invalid_argument, "--" + f.name + ": invalid value '" + v + "'");
  };
  switch (f.kind) {
    case Kind::integer: {
      long n = 0;
      const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
      return ec == std::errc() && p == v.data() + v.size() ? json(n) : bad();
    }
    case Kind::unsigned_integer: {
      std::uint64_t n = 0;
      const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
      return ec == std::errc() && p == v.data() + v.size() ? json(n) : bad();
    }
    case Kind::real: {
      double x = 0;
      const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
      return ec == std::errc() && p == v.data() + v.size() && std::isfinite(x) ? json(x) : bad();
    }
    case Kind::boolean:
      return v == "true" ? json(true) : v == "false" ? json(false) : bad();
    case Kind::text:
      return v;
  }
  return bad();
}

std::string default_text(const json& defaults, const FlagSpec& f)
{
  const json& v = defaults.at(json::json_pointer(f.pointers.front()));
  if (v.is_string())
    return v.get<std::string>().empty() ? std::string() : v.get<std::string>();
  return v.dump();
}

int exit_code(ErrorCode code) { return code == ErrorCode::not_found || code == ErrorCode::io ? 2 : 3; }

int report_error(const std::string& code, const std::string& message, int status)
{
  std::cerr << json{{"error", code}, {"message", message}, {"exit", status}}.dump() << std::endl;
  return status;
}

PipelineConfig effective_config(const std::string& config_path, const std::vector<Given>& given, bool serve)
{
  PipelineConfig cfg;
  if (!config_path.empty())
    cfg = load_config(config_path, cfg);
  json patch = json::object();
  if (serve) {
    if (const char* d = std::getenv("SKYWATCH_DATA_DIR"))
      patch["/paths/data_dir"_json_pointer] = std::string(d);
    if (const char* h = std::getenv("SKYWATCH_HOST"))
      patch["/serve/host"_json_pointer] = std::string(h);
    if (const char* p = std::getenv("SKYWATCH_PORT"))
      patch["/serve/port"_json_pointer] = parse_value(flag_table().at("port"), p);
  }
  for (const auto& g : given)
    if (g.option->count() > 0)
      for (const auto& ptr : g.spec->pointers)
        patch[json::json_pointer(ptr)] = parse_value(*g.spec, g.value);
  return merge(cfg, patch);
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"skywatch: flying-airplane detection in Sentinel-2 style imagery and airport activity analysis"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "skywatch 0.1.0");
  const json defaults = to_json(PipelineConfig{});

  std::string config_path, run_id, export_out;
  std::map<std::string, std::list<Given>> given;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [stage, flags] : stage_flags()) {
    CLI::App* sub = app.add_subcommand(stage, stage_help().at(stage));
    subs[stage] = sub;
    sub->add_option("--config", config_path, "JSON config file; flags override it");
    auto& list = given[stage];
    for (const auto& id : std::vector<std::string>{"work-dir"}) {
      const FlagSpec& f = flag_table().at(id);
      list.push_back({&f, {}, nullptr});
      list.back().option = sub->add_option("--" + f.name, list.back().value, f.help + " [.]");
    }
    for (const auto& id : flags) {
      const FlagSpec& f = flag_table().at(id);
      const std::string def = default_text(defaults, f);
      const std::string help = f.help + (def.empty() ? "" : " (default " + def + ")");
      list.push_back({&f, {}, nullptr});
      Given& g = list.back();
      if (f.kind == Kind::boolean) {
        g.option = sub->add_flag("--" + f.name + "{true},!--no-" + f.name, g.value, help);
      } else {
        g.option = sub->add_option("--" + f.name, g.value, help);
      }
    }
    if (stage == "export") {
      sub->add_option("--run", run_id, "Review run id")->required();
      sub->add_option("--out", export_out, "Annotation file to write [<reports>/<run>.annotations.jsonl]");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), 3);
  }

  std::string stage;
  for (const auto& [name, sub] : subs)
    if (sub->parsed())
      stage = name;

  try {
    const std::vector<Given> flags(given[stage].begin(), given[stage].end());
    const PipelineConfig cfg = effective_config(config_path, flags, stage == "serve");
    std::ostream& log = std::cout;
    if (stage == "synth")
      run_synth(cfg, log);
    else if (stage == "train")
      run_train(cfg, log);
    else if (stage == "detect")
      run_detect(cfg, log);
    else if (stage == "series")
      run_series(cfg, log);
    else if (stage == "break")
      run_break(cfg, log);
    else if (stage == "recover")
      run_recover(cfg, log);
    else if (stage == "correlate")
      run_correlate(cfg, log);
    else if (stage == "eval-breaks")
      run_eval_breaks(cfg, log);
    else if (stage == "compare")
      run_compare(cfg, log);
    else if (stage == "serve")
      run_serve(cfg, log);
    else if (stage == "export")
      run_export(cfg, run_id, export_out, log);
    else if (stage == "all")
      run_all(cfg, log);
  } catch (const Error& e) {
    return report_error(std::string(to_string(e.code())), e.what(), exit_code(e.code()));
  } catch (const fs::filesystem_error& e) {
    return report_error("io", e.what(), 2);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), 3);
  }
  return 0;
}

#pragma once

// The pipeline stages. Each reads and writes only the documented formats:
//   scenes/<aoi>/<timestamp>.png + .json   scene store
//   annotations.jsonl, detections.jsonl    JSON lines
//   checkpoint/model.json + model.bin      detector checkpoint
//   series/<aoi>.csv, <aoi>_monthly.csv    date,value and month,value
//   reports/*.json, *.csv, *.svg           stage reports and plots

#include <skywatch/detect/detection.hpp>
#include <skywatch/detect/inference.hpp>
#include <skywatch/detect/train.hpp>
#include <skywatch/imagery/scene_store.hpp>
#include <skywatch/imagery/synth.hpp>
#include <skywatch/net/checkpoint.hpp>
#include <skywatch/pipeline/config.hpp>
#include <skywatch/pipeline/svg.hpp>
#include <skywatch/review/service.hpp>
#include <skywatch/review/store.hpp>
#include <skywatch/series/analysis.hpp>
#include <skywatch/series/breaks.hpp>
#include <skywatch/series/counts.hpp>
#include <skywatch/series/edm.hpp>
#include <skywatch/series/io.hpp>

#include <json.hpp>

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

namespace skywatch::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

inline void write_json(const fs::path& path, const json& j)
{
  series::io_detail::write_text(path, j.dump(2) + "\n");
}

inline json read_json(const fs::path& path)
{
  require(fs::exists(path), ErrorCode::not_found, "missing input " + path.string());
  return imagery::store_detail::parse_json_file(path);
}

inline void require_input(const fs::path& path, const std::string& what)
{
  require(!path.empty() && fs::exists(path), ErrorCode::not_found,
          "missing " + what + (path.empty() ? std::string() : ": " + path.string()));
}

/// Daily series files at `path`: the file itself, or every <aoi>.csv in the
/// directory (monthly companions excluded), sorted by name.
inline std::vector<fs::path> series_files(const fs::path& path)
{
  require_input(path, "series");
  if (fs::is_regular_file(path))
    return {path};
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(path)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && e.path().extension() == ".csv" && !name.ends_with("_monthly.csv"))
      out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  require(!out.empty(), ErrorCode::not_found, "no series files in " + path.string());
  return out;
}

/// Scene metadata from sidecars alone; rasters are not decoded.
inline std::vector<series::SceneMeta> scene_metas(const fs::path& root)
{
  require_input(root, "scene directory");
  std::vector<series::SceneMeta> out;
  for (const auto& png : imagery::list_scenes(root)) {
    fs::path sidecar = png;
    sidecar.replace_extension(".json");
    const json meta = imagery::store_detail::parse_json_file(sidecar);
    const auto scene = imagery::scene_from_sidecar(meta);
    const int w = imagery::store_detail::field<int>(meta, "width");
    const int h = imagery::store_detail::field<int>(meta, "height");
    out.push_back({scene.image_id, scene.aoi_id, scene.timestamp, imagery::padded_extent(w),
                   imagery::padded_extent(h), imagery::assess_viability(scene)});
  }
  return out;
}

// ---- synth ------------------------------------------------------------------

inline void run_synth(const PipelineConfig& cfg, std::ostream& log)
{
  const auto sc = synth_config(cfg);
  const fs::path root = cfg.paths.scenes_dir();
  require(!fs::exists(root) || fs::is_empty(root), ErrorCode::conflict,
          "scene directory " + root.string() + " is not empty");
  std::vector<imagery::Annotation> truth;
  for (int i = 0; i < cfg.synth.scenes; ++i) {
    auto s = imagery::synth_scene(sc, i);
    imagery::store_scene(s.scene, root);
    truth.insert(truth.end(), s.annotations.begin(), s.annotations.end());
  }
  imagery::write_annotations(cfg.paths.annotations_file(), truth);
  log << "synth: " << cfg.synth.scenes << " scenes, " << truth.size() << " planes -> " << root.string() << "\n";
}

// ---- train ------------------------------------------------------------------

inline void run_train(const PipelineConfig& cfg, std::ostream& log)
{
  const auto tc = train_config(cfg);
  require_input(cfg.paths.scenes_dir(), "scene directory");
  require_input(cfg.paths.annotations_file(), "annotations");
  const auto scenes = imagery::load_scenes(cfg.paths.scenes_dir());
  const auto annotations = imagery::read_annotations(cfg.paths.annotations_file());
  const auto result = detect::train(scenes, annotations, tc, [&](const detect::EpochRecord& r, const auto&) {
    log << "train: epoch " << r.epoch << " loss " << r.loss << " dr " << r.report.dr << " fdr " << r.report.fdr
        << (r.saved ? " saved" : "") << "\n";
  });
  net::save_checkpoint(result.model, cfg.paths.checkpoint_dir(), result.adam_step);

  const fs::path reports = cfg.paths.reports_dir();
  series::io_detail::write_text(reports / "training.csv", detect::history_csv(result.history));
  Chart chart{"Training score per epoch", "epoch", "score", false, {}, {}, {}};
  Line score{"score (DR - FDR)", {}, {}, "#1f77b4"}, loss{"loss", {}, {}, "#ff7f0e"};
  for (const auto& r : result.history) {
    score.x.push_back(r.epoch);
    score.y.push_back(r.report.score);
    loss.x.push_back(r.epoch);
    loss.y.push_back(r.loss);
  }
  chart.lines = {score, loss};
  chart.vertical.push_back({"saved epoch", static_cast<double>(result.best_epoch), "#2ca02c"});
  series::io_detail::write_text(reports / "training.svg", render_svg(chart));
  write_json(reports / "train.json", {{"best_epoch", result.best_epoch},
                                      {"best_score", result.best_score},
                                      {"epochs", result.history.size()},
                                      {"diverged", result.diverged},
                                      {"annotations", annotations.size()},
                                      {"scenes", scenes.size()},
                                      {"config", echo(cfg, {"train", "detect"})}});
  log << "train: best epoch " << result.best_epoch << " score " << result.best_score << " -> "
      << cfg.paths.checkpoint_dir().string() << "\n";
}

// ---- detect -----------------------------------------------------------------

inline void run_detect(const PipelineConfig& cfg, std::ostream& log)
{
  const auto opts = detect_options(cfg);
  require_input(cfg.paths.checkpoint_dir() / "model.json", "checkpoint");
  require_input(cfg.paths.scenes_dir(), "scene directory");
  const auto model = net::load_checkpoint(cfg.paths.checkpoint_dir());
  const auto scenes = imagery::load_scenes(cfg.paths.scenes_dir());
  const auto dets = detect::detect_scenes(model, scenes, opts, cfg.detect.jobs);
  detect::write_detections(cfg.paths.detections_file(), dets);
  json report = {{"scenes", scenes.size()}, {"detections", dets.size()}, {"config", echo(cfg, {"detect"})}};
  // score against generator truth when it is around
  if (fs::exists(cfg.paths.annotations_file())) {
    const auto truth = imagery::read_annotations(cfg.paths.annotations_file());
    const auto m = detect::match_detections(dets, truth);
    report["evaluation"] = {{"tp", m.report.tp}, {"fa", m.report.fa}, {"fn", m.report.fn},
                            {"dr", m.report.dr}, {"fdr", m.report.fdr}};
  }
  write_json(cfg.paths.reports_dir() / "detect.json", report);
  log << "detect: " << dets.size() << " detections in " << scenes.size() << " scenes -> "
      << cfg.paths.detections_file().string() << "\n";
}

// ---- series -----------------------------------------------------------------

inline Chart series_chart(const series::TimeSeries& s, const std::string& title)
{
  Chart c{title, "date", "flying airplanes (30-day window)", true, {}, {}, {}};
  Line l{s.aoi_id, {}, s.values, "#1f77b4"};
  for (const auto d : s.dates)
    l.x.push_back(day_number(d));
  c.lines.push_back(std::move(l));
  return c;
}

inline void run_series(const PipelineConfig& cfg, std::ostream& log)
{
  require(cfg.series.window >= 1 && cfg.series.step >= 1, ErrorCode::invalid_argument,
          "series window and step must be positive");
  require_input(cfg.paths.detections_file(), "detections");
  const auto metas = scene_metas(cfg.paths.scenes_dir());
  const auto dets = detect::read_detections(cfg.paths.detections_file());

  std::unordered_map<std::string, std::vector<detect::Detection>> by_image;
  for (const auto& d : dets)
    by_image[d.image_id].push_back(d);
  std::map<std::string, std::vector<series::CellCounts>> per_aoi;
  for (const auto& m : metas) {
    const auto it = by_image.find(m.image_id);
    const std::vector<detect::Detection> none;
    per_aoi[m.aoi_id].push_back(series::suppress_noisy(series::count_cells(m, it == by_image.end() ? none : it->second)));
  }
  const fs::path out = cfg.paths.series_path();
  for (auto& [aoi, cells] : per_aoi) {
    const auto monthly = series::monthly_means(cells, aoi);
    const auto s = series::build_series(std::move(cells), aoi, cfg.series.window, cfg.series.step);
    series::write_series_csv(out / (aoi + ".csv"), s);
    series::write_series_csv(out / (aoi + "_monthly.csv"), monthly, true);
    series::io_detail::write_text(out / (aoi + ".svg"), render_svg(series_chart(s, aoi + " daily estimate")));
    log << "series: " << aoi << " " << s.size() << " days, " << monthly.size() << " months -> " << out.string() << "\n";
  }
}

// ---- break ------------------------------------------------------------------

inline std::optional<series::BreakResult> find_break(const PipelineConfig& cfg, const series::TimeSeries& s)
{
  if (break_method(cfg) == series::BreakMethod::sma_crossover)
    return series::sma_crossover_break(s, cfg.series.short_window, cfg.series.long_window);
  return series::edm_break(s, edm_options(cfg));
}

inline json break_report(const PipelineConfig& cfg, const std::string& aoi, const std::optional<series::BreakResult>& b)
{
  json j;
  if (b) {
    j = series::report_json(aoi, *b);
  } else {
    const auto method = break_method(cfg);
    series::BreakConfig bc{method, cfg.series.short_window, cfg.series.long_window, cfg.series.msize, cfg.series.beta};
    j = {{"aoi_id", aoi},           {"method", series::to_string(method)}, {"params", series::params_json(bc.params())},
         {"break_date", nullptr},   {"diagnostic", nullptr},              {"lambda", nullptr},
         {"r_squared", nullptr},    {"n_points", nullptr}};
  }
  j["config"] = echo(cfg, {"series"}, {"method", "short", "long", "msize", "beta", "permutations", "seed"});
  return j;
}

inline fs::path break_report_path(const PipelineConfig& cfg, const std::string& aoi)
{
  return cfg.paths.reports_dir() / (aoi + ".break.json");
}

inline void run_break(const PipelineConfig& cfg, std::ostream& log)
{
  for (const auto& file : series_files(cfg.paths.series_path())) {
    const auto s = series::read_series_csv(file);
    const auto b = find_break(cfg, s);
    write_json(break_report_path(cfg, s.aoi_id), break_report(cfg, s.aoi_id, b));
    log << "break: " << s.aoi_id << " " << (b ? format_day(b->break_date) : std::string("none")) << "\n";
  }
}

// ---- recover ----------------------------------------------------------------

inline void run_recover(const PipelineConfig& cfg, std::ostream& log)
{
  const Day disruption = disruption_day(cfg);
  const auto until = until_day(cfg);
  for (const auto& file : series_files(cfg.paths.series_path())) {
    const auto s = series::read_series_csv(file);
    const fs::path bpath = break_report_path(cfg, s.aoi_id);
    require(fs::exists(bpath), ErrorCode::not_found,
            "no break report for " + s.aoi_id + " (" + bpath.string() + "); run the break stage first");
    const json bj = read_json(bpath);
    json report;
    std::optional<series::RecoveryFit> fit;
    std::string status = "fitted", reason;
    if (bj.value("break_date", json()).is_null()) {
      status = "no_break";
      report = bj;
    } else {
      const auto b = series::break_from_json(bj);
      try {
        fit = series::recovery_fit(s, b.break_date, disruption, cfg.series.short_window, until);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::insufficient_data && e.code() != ErrorCode::degenerate_input)
          throw;
        status = "no_fit";
        reason = e.what();
      }
      report = series::report_json(s.aoi_id, b, fit);
    }
    report["status"] = status;
    if (!reason.empty())
      report["reason"] = reason;
    report["disruption_date"] = format_day(disruption);
    report["config"] = echo(cfg, {"series"}, {"short", "disruption_date", "until"});
    write_json(cfg.paths.reports_dir() / (s.aoi_id + ".recovery.json"), report);

    Chart c = series_chart(s, s.aoi_id + " recovery");
    const auto fast = series::sma(s, cfg.series.short_window);
    Line l{"short SMA", c.lines[0].x, fast.values, "#ff7f0e"};
    c.lines.push_back(std::move(l));
    if (!bj.value("break_date", json()).is_null())
      c.vertical.push_back({"break", day_number(parse_day(bj.at("break_date").get<std::string>())), "#d62728"});
    if (fit)
      c.horizontal.push_back({"baseline", fit->baseline, "#2ca02c"});
    series::io_detail::write_text(cfg.paths.reports_dir() / (s.aoi_id + ".recovery.svg"), render_svg(c));
    log << "recover: " << s.aoi_id << " " << status;
    if (fit)
      log << " lambda " << fit->lambda << " r2 " << fit->r_squared;
    log << "\n";
  }
}

// ---- correlate --------------------------------------------------------------

inline void run_correlate(const PipelineConfig& cfg, std::ostream& log)
{
  const fs::path epi_path = cfg.paths.epi.empty() ? fs::path() : fs::path(cfg.paths.epi);
  require_input(epi_path, "epidemiological data (--epi)");
  const auto channel = series::epi_channel_from_string(cfg.series.channel);
  const auto epi = series::read_epi_csv(epi_path);
  const Day from = cfg.series.correlate_from.empty() ? disruption_day(cfg) : parse_day(cfg.series.correlate_from);
  for (const auto& file : series_files(cfg.paths.series_path())) {
    const auto s = series::read_series_csv(file);
    const double r = series::correlate(s, epi, channel, from);
    write_json(cfg.paths.reports_dir() / (s.aoi_id + ".correlation.json"),
               {{"aoi_id", s.aoi_id},
                {"region", epi.region},
                {"channel", series::to_string(channel)},
                {"from", format_day(from)},
                {"pearson_r", r},
                {"config", echo(cfg, {"series"}, {"channel", "correlate_from", "disruption_date"})}});
    log << "correlate: " << s.aoi_id << " vs " << epi.region << " " << series::to_string(channel) << " r = " << r
        << "\n";
  }
}

// ---- eval-breaks ------------------------------------------------------------

inline void run_eval_breaks(const PipelineConfig& cfg, std::ostream& log)
{
  require(!cfg.series.observed_break_date.empty(), ErrorCode::invalid_argument,
          "eval-breaks needs an observed break date (--observed)");
  const Day observed = parse_day(cfg.series.observed_break_date);
  const auto method = break_method(cfg);
  std::vector<series::TimeSeries> all;
  for (const auto& file : series_files(cfg.paths.series_path()))
    all.push_back(series::read_series_csv(file));
  const auto ev = series::break_eval(all, observed, method, series::BreakGrid::defaults(), cfg.series.seed);

  std::ostringstream csv;
  const bool sma = method == series::BreakMethod::sma_crossover;
  csv << (sma ? "short,long" : "msize,beta") << ",missed,mae,rmse";
  for (const auto& s : all)
    csv << ',' << s.aoi_id;
  csv << '\n';
  using series::io_detail::format_number;
  for (const auto& row : ev.table) {
    if (sma)
      csv << row.config.short_window << ',' << row.config.long_window;
    else
      csv << row.config.msize << ',' << format_number(row.config.beta);
    csv << ',' << row.missed << ',' << format_number(row.mae) << ',' << format_number(row.rmse);
    for (const auto& p : row.predicted)
      csv << ',' << (p ? format_day(*p) : std::string());
    csv << '\n';
  }
  const std::string stem = "break_eval_" + std::string(sma ? "sma" : "edm");
  series::io_detail::write_text(cfg.paths.reports_dir() / (stem + ".csv"), csv.str());
  const auto& best = ev.table[ev.best];
  auto finite = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json predicted = json::object();
  for (std::size_t i = 0; i < all.size(); ++i)
    predicted[all[i].aoi_id] = best.predicted[i] ? json(format_day(*best.predicted[i])) : json(nullptr);
  write_json(cfg.paths.reports_dir() / (stem + ".json"), {{"method", series::to_string(method)},
                                                          {"observed", format_day(observed)},
                                                          {"configs", ev.table.size()},
                                                          {"best",
                                                           {{"params", series::params_json(best.config.params())},
                                                            {"missed", best.missed},
                                                            {"mae", finite(best.mae)},
                                                            {"rmse", finite(best.rmse)},
                                                            {"predicted", predicted}}},
                                                          {"config", echo(cfg, {"series"}, {"method", "observed_break_date", "permutations", "seed"})}});
  log << "eval-breaks: " << ev.table.size() << " configs, best " << series::params_json(best.config.params()).dump()
      << " mae " << best.mae << "\n";
}

// ---- compare ----------------------------------------------------------------

inline void run_compare(const PipelineConfig& cfg, std::ostream& log)
{
  const fs::path ref = cfg.paths.reference.empty() ? fs::path() : fs::path(cfg.paths.reference);
  require_input(ref, "reference series (--reference)");
  for (const auto& file : series_files(cfg.paths.series_path())) {
    const std::string aoi = file.stem().string();
    const fs::path ours_path = file.parent_path() / (aoi + "_monthly.csv");
    require_input(ours_path, "monthly estimate");
    const fs::path ref_path = fs::is_directory(ref) ? ref / (aoi + ".csv") : ref;
    if (fs::is_directory(ref) && !fs::exists(ref_path)) {
      log << "compare: " << aoi << " has no reference, skipped\n";
      continue;
    }
    const auto ours = series::read_monthly_csv(ours_path, aoi);
    const auto theirs = series::read_monthly_csv(ref_path, aoi);
    const auto c = series::compare_series(ours, theirs, cfg.series.normalize);
    write_json(cfg.paths.reports_dir() / (aoi + ".compare.json"), {{"aoi_id", aoi},
                                                                  {"rmse", c.rmse},
                                                                  {"msd", c.msd},
                                                                  {"mae", c.mae},
                                                                  {"n", c.n},
                                                                  {"normalized", cfg.series.normalize},
                                                                  {"config", echo(cfg, {"series"}, {"normalize"})}});
    Chart chart{aoi + " monthly comparison", "month", "mean count per image", true, {}, {}, {}};
    for (const auto* s : {&ours, &theirs}) {
      Line l{s == &ours ? "estimate" : "reference", {}, s->values, s == &ours ? "#1f77b4" : "#7f7f7f"};
      for (const auto d : s->dates)
        l.x.push_back(day_number(d));
      chart.lines.push_back(std::move(l));
    }
    series::io_detail::write_text(cfg.paths.reports_dir() / (aoi + ".compare.svg"), render_svg(chart));
    log << "compare: " << aoi << " rmse " << c.rmse << " msd " << c.msd << " over " << c.n << " months\n";
  }
}

// ---- review -----------------------------------------------------------------

inline std::unique_ptr<review::ReviewStore> open_review_store(const PipelineConfig& cfg)
{
  const fs::path scenes = cfg.paths.scenes_dir();
  return std::make_unique<review::ReviewStore>(
      cfg.paths.review_dir(), fs::exists(scenes) ? imagery::SceneCatalog(scenes) : imagery::SceneCatalog());
}

inline void run_export(const PipelineConfig& cfg, const std::string& run_id, const fs::path& out, std::ostream& log)
{
  require(!run_id.empty(), ErrorCode::invalid_argument, "export needs a run id (--run)");
  require(fs::exists(cfg.paths.review_dir() / "runs" / run_id), ErrorCode::not_found,
          "unknown review run '" + run_id + "' in " + cfg.paths.review_dir().string());
  const auto store = open_review_store(cfg);
  const auto e = store->export_annotations(run_id);
  const fs::path target = out.empty() ? cfg.paths.reports_dir() / (run_id + ".annotations.jsonl") : out;
  imagery::write_annotations(target, e.annotations);
  fs::path summary = target;
  summary.replace_extension(".summary.json");
  write_json(summary, {{"run_id", run_id}, {"summary", review::to_json(e.summary)}});
  log << "export: " << e.annotations.size() << " annotations -> " << target.string() << "\n";
}

inline void run_serve(const PipelineConfig& cfg, std::ostream& log)
{
  const auto store = open_review_store(cfg);
  review::ReviewService service(*store);
  log << "serve: http://" << cfg.serve.host << ":" << cfg.serve.port << " data " << cfg.paths.review_dir().string()
      << std::endl;
  require(service.listen(cfg.serve.host, cfg.serve.port), ErrorCode::io,
          "cannot listen on " + cfg.serve.host + ":" + std::to_string(cfg.serve.port));
}

// ---- all --------------------------------------------------------------------

/// synth -> train -> detect -> series -> break -> recover, plus correlate,
/// compare and eval-breaks when their extra inputs are configured.
inline void run_all(const PipelineConfig& cfg, std::ostream& log)
{
  run_synth(cfg, log);
  run_train(cfg, log);
  run_detect(cfg, log);
  run_series(cfg, log);
  run_break(cfg, log);
  run_recover(cfg, log);
  if (!cfg.paths.epi.empty())
    run_correlate(cfg, log);
  if (!cfg.paths.reference.empty())
    run_compare(cfg, log);
  if (!cfg.series.observed_break_date.empty())
    run_eval_breaks(cfg, log);
}

}  // namespace skywatch::pipeline

#pragma once

#include <skywatch/core/error.hpp>
#include <skywatch/core/time.hpp>
#include <skywatch/series/analysis.hpp>
#include <skywatch/series/timeseries.hpp>

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace skywatch::series {

namespace fs = std::filesystem;
using nlohmann::json;

namespace io_detail {

inline std::vector<std::string> split(std::string_view line)
{
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    std::string_view cell = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t'))
      cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r'))
      cell.remove_suffix(1);
    out.emplace_back(cell);
    if (comma == std::string_view::npos)
      return out;
    start = comma + 1;
  }
}

/// Rows of a CSV whose header matches `columns` exactly. Blank lines are skipped.
inline std::vector<std::vector<std::string>> read_table(const fs::path& path, const std::vector<std::string>& columns)
{
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open " + path.string());
  std::string line;
  std::vector<std::vector<std::string>> rows;
  bool header = false;
  for (long lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    auto cells = split(line);
    if (!header) {
      require(cells == columns, ErrorCode::format, path.string() + ": expected header '" + [&] {
                std::string h;
                for (const auto& c : columns)
                  h += (h.empty() ? "" : ",") + c;
                return h;
              }() + "'");
      header = true;
      continue;
    }
    require(cells.size() == columns.size(), ErrorCode::format,
            path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(columns.size()) + " fields");
    rows.push_back(std::move(cells));
  }
  require(header, ErrorCode::format, path.string() + ": empty file");
  return rows;
}

inline double parse_number(const std::string& s, const fs::path& path)
{
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(v), ErrorCode::format,
          path.string() + ": bad number '" + s + "'");
  return v;
}

/// Shortest text that reads back to the same double.
inline std::string format_number(double v)
{
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline void write_text(const fs::path& path, const std::string& text)
{
  if (path.has_parent_path())
    fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorCode::io, "write failed for " + path.string());
}

}  // namespace io_detail

inline std::string series_csv(const TimeSeries& s, bool monthly = false)
{
  std::ostringstream out;
  out << (monthly ? "month,value\n" : "date,value\n");
  for (std::size_t i = 0; i < s.size(); ++i)
    out << (monthly ? format_month(s.dates[i]) : format_day(s.dates[i])) << ','
        << io_detail::format_number(s.values[i]) << '\n';
  return out.str();
}

inline void write_series_csv(const fs::path& path, const TimeSeries& s, bool monthly = false)
{
  io_detail::write_text(path, series_csv(s, monthly));
}

/// `date,value` daily series; the AOI id defaults to the file stem.
inline TimeSeries read_series_csv(const fs::path& path, std::optional<std::string> aoi_id = std::nullopt)
{
  TimeSeries s;
  s.aoi_id = aoi_id.value_or(path.stem().string());
  for (const auto& row : io_detail::read_table(path, {"date", "value"})) {
    s.dates.push_back(parse_day(row[0]));
    s.values.push_back(io_detail::parse_number(row[1], path));
  }
  s.validate();
  return s;
}

/// `month,value` reference series, dated on the first of each month.
inline TimeSeries read_monthly_csv(const fs::path& path, std::optional<std::string> aoi_id = std::nullopt)
{
  TimeSeries s;
  s.aoi_id = aoi_id.value_or(path.stem().string());
  s.window_days = 0;
  s.step_days = 0;
  for (const auto& row : io_detail::read_table(path, {"month", "value"})) {
    s.dates.push_back(parse_month(row[0]));
    s.values.push_back(io_detail::parse_number(row[1], path));
  }
  s.validate();
  return s;
}

/// `date,new_cases,new_deaths`.
inline EpiSeries read_epi_csv(const fs::path& path, std::optional<std::string> region = std::nullopt)
{
  std::vector<Day> dates;
  std::vector<double> cases, deaths;
  for (const auto& row : io_detail::read_table(path, {"date", "new_cases", "new_deaths"})) {
    dates.push_back(parse_day(row[0]));
    cases.push_back(io_detail::parse_number(row[1], path));
    deaths.push_back(io_detail::parse_number(row[2], path));
  }
  for (std::size_t i = 1; i < dates.size(); ++i)
    require(dates[i - 1] < dates[i], ErrorCode::format, path.string() + ": dates must be strictly increasing");
  return make_epi(region.value_or(path.stem().string()), std::move(dates), std::move(cases), std::move(deaths));
}

inline std::string epi_csv(const EpiSeries& e)
{
  std::ostringstream out;
  out << "date,new_cases,new_deaths\n";
  for (std::size_t i = 0; i < e.dates.size(); ++i)
    out << format_day(e.dates[i]) << ',' << io_detail::format_number(e.new_cases[i]) << ','
        << io_detail::format_number(e.new_deaths[i]) << '\n';
  return out.str();
}

// ---- reports --------------------------------------------------------------

inline json params_json(const std::map<std::string, double>& params)
{
  json j = json::object();
  for (const auto& [k, v] : params) {
    if (v == std::floor(v) && std::abs(v) < 1e9)
      j[k] = static_cast<long>(v);
    else
      j[k] = v;
  }
  return j;
}

/// {aoi_id, method, params, break_date, lambda, r_squared, n_points}; the
/// recovery fields are null when no fit was made.
inline json report_json(const std::string& aoi_id, const BreakResult& b, const std::optional<RecoveryFit>& fit = {})
{
  json j;
  j["aoi_id"] = aoi_id;
  j["method"] = to_string(b.method);
  j["params"] = params_json(b.params);
  j["break_date"] = format_day(b.break_date);
  j["diagnostic"] = b.diagnostic;
  j["lambda"] = fit ? json(fit->lambda) : json(nullptr);
  j["r_squared"] = fit ? json(fit->r_squared) : json(nullptr);
  j["n_points"] = fit ? json(fit->n_points) : json(nullptr);
  if (fit)
    j["baseline"] = fit->baseline;
  return j;
}

inline BreakResult break_from_json(const json& j)
{
  require(j.is_object() && j.contains("method") && j.contains("break_date"), ErrorCode::format,
          "break report lacks 'method' or 'break_date'");
  BreakResult b;
  try {
    b.method = break_method_from_string(j.at("method").get<std::string>());
    b.break_date = parse_day(j.at("break_date").get<std::string>());
    if (j.contains("params"))
      for (const auto& [k, v] : j.at("params").items())
        b.params[k] = v.get<double>();
    b.diagnostic = j.value("diagnostic", 0.0);
  } catch (const json::exception& e) {
    fail(ErrorCode::format, std::string("bad break report: ") + e.what());
  }
  return b;
}

}  // namespace skywatch::series

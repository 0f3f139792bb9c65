#pragma once

#include <skywatch/core/error.hpp>
#include <skywatch/core/time.hpp>
#include <skywatch/series/breaks.hpp>
#include <skywatch/series/counts.hpp>
#include <skywatch/series/edm.hpp>
#include <skywatch/series/stats.hpp>
#include <skywatch/series/timeseries.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace skywatch::series {

// ---- recovery rate --------------------------------------------------------

inline constexpr double kRecoveryEpsilon = 1e-6;

struct RecoveryFit {
  double lambda = 0;     // per day
  double intercept = 0;  // of -ln(Y_B - Y_t) at the break
  double baseline = 0;   // Y_B
  double r_squared = 0;
  int n_points = 0;
  Day break_date{};
};

/// Fits dy/dt = -lambda (Y_B - Y_t) after `break_date` by regressing
/// -ln(Y_B - Y_t) on days since the break. Y_B is the mean short-window SMA
/// over all dates before `disruption`. Points with Y_B - Y_t < epsilon have
/// recovered fully and are left out. `until` (inclusive) bounds the fit.
inline RecoveryFit recovery_fit(const TimeSeries& s, Day break_date, Day disruption, int short_window = kShortWindow,
                                std::optional<Day> until = std::nullopt)
{
  s.validate();
  require(!s.empty() && break_date >= s.dates.front() && break_date <= s.dates.back(), ErrorCode::invalid_argument,
          "break date " + format_day(break_date) + " lies outside the series");
  const TimeSeries fast = sma(s, short_window);
  double sum = 0;
  int count = 0;
  for (std::size_t i = 0; i < s.size() && s.dates[i] < disruption; ++i) {
    sum += fast.values[i];
    ++count;
  }
  require(count > 0, ErrorCode::insufficient_data,
          "no series dates before the disruption date " + format_day(disruption) + " to form a baseline");

  RecoveryFit fit;
  fit.baseline = sum / count;
  fit.break_date = break_date;
  std::vector<double> x, y;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.dates[i] <= break_date || (until && s.dates[i] > *until))
      continue;
    const double gap = fit.baseline - s.values[i];
    if (gap < kRecoveryEpsilon)
      continue;
    x.push_back(static_cast<double>(days_between(break_date, s.dates[i])));
    y.push_back(-std::log(gap));
  }
  fit.n_points = static_cast<int>(x.size());
  require(fit.n_points >= 3, ErrorCode::insufficient_data,
          "only " + std::to_string(fit.n_points) + " usable points after the break (need 3)");
  const LineFit line = least_squares(x, y);
  fit.lambda = line.slope;
  fit.intercept = line.intercept;
  std::vector<double> predicted(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    predicted[i] = line.intercept + line.slope * x[i];
  fit.r_squared = r_squared(y, predicted);
  return fit;
}

// ---- break-method evaluation ---------------------------------------------

struct BreakConfig {
  BreakMethod method = BreakMethod::sma_crossover;
  int short_window = kShortWindow;
  int long_window = kLongWindow;
  int msize = kEdmMinSize;
  double beta = kEdmBeta;

  std::map<std::string, double> params() const
  {
    if (method == BreakMethod::sma_crossover)
      return {{"short", short_window}, {"long", long_window}};
    return {{"msize", msize}, {"beta", beta}};
  }
};

struct BreakGrid {
  std::vector<int> shorts;
  std::vector<int> longs;
  std::vector<int> msizes;
  std::vector<double> betas;

  static BreakGrid defaults()
  {
    BreakGrid g;
    for (int s = 7; s <= 49; s += 7)
      g.shorts.push_back(s);
    for (int l = 14; l <= 98; l += 7)
      g.longs.push_back(l);
    for (int m = 64; m <= 128; m += 8)
      g.msizes.push_back(m);
    for (int b = 1; b <= 10; ++b)
      g.betas.push_back(b / 10.0);
    return g;
  }

  std::vector<BreakConfig> configs(BreakMethod method) const
  {
    std::vector<BreakConfig> out;
    if (method == BreakMethod::sma_crossover) {
      for (int s : shorts)
        for (int l : longs)
          if (l > s)
            out.push_back({method, s, l, kEdmMinSize, kEdmBeta});
    } else {
      for (int m : msizes)
        for (double b : betas)
          out.push_back({method, kShortWindow, kLongWindow, m, b});
    }
    return out;
  }
};

struct ConfigScore {
  BreakConfig config;
  std::vector<std::optional<Day>> predicted;  // one per series, in input order
  int missed = 0;
  double mae = std::numeric_limits<double>::infinity();
  double rmse = std::numeric_limits<double>::infinity();
};

/// Fills missed / MAE / RMSE from `row.predicted`; MAE and RMSE stay
/// infinite when nothing was detected.
inline void score_predictions(ConfigScore& row, Day observed)
{
  double abs_sum = 0, sq_sum = 0;
  int n = 0;
  row.missed = 0;
  for (const auto& p : row.predicted) {
    if (!p) {
      ++row.missed;
      continue;
    }
    const double e = static_cast<double>(days_between(observed, *p));
    abs_sum += std::abs(e);
    sq_sum += e * e;
    ++n;
  }
  row.mae = n > 0 ? abs_sum / n : std::numeric_limits<double>::infinity();
  row.rmse = n > 0 ? std::sqrt(sq_sum / n) : std::numeric_limits<double>::infinity();
}

struct BreakEvaluation {
  std::vector<ConfigScore> table;
  std::size_t best = 0;
};

/// MAE / RMSE in days between each config's break and `observed`. Series
/// where a config finds no break count as missed; the best config has the
/// fewest misses, then the lowest MAE, then the lowest RMSE (first in grid
/// order on a full tie).
inline BreakEvaluation break_eval(const std::vector<TimeSeries>& series, Day observed, BreakMethod method,
                                  const BreakGrid& grid = BreakGrid::defaults(), std::uint64_t seed = 0)
{
  const auto configs = grid.configs(method);
  require(!configs.empty(), ErrorCode::invalid_argument, "break-evaluation grid is empty");
  require(!series.empty(), ErrorCode::invalid_argument, "no series to evaluate");

  BreakEvaluation out;
  for (const auto& c : configs) {
    ConfigScore row;
    row.config = c;
    out.table.push_back(std::move(row));
  }

  for (const auto& s : series) {
    if (method == BreakMethod::sma_crossover) {
      for (auto& row : out.table)
        row.predicted.push_back(
            [&]() -> std::optional<Day> {
              const auto r = sma_crossover_break(s, row.config.short_window, row.config.long_window);
              return r ? std::optional(r->break_date) : std::nullopt;
            }());
    } else {
      int min_size = std::numeric_limits<int>::max();
      for (const auto& c : configs)
        min_size = std::min(min_size, c.msize);
      for (const auto& c : configs)
        require(static_cast<long>(s.size()) >= 2L * c.msize, ErrorCode::invalid_argument,
                "series '" + s.aoi_id + "' is too short for msize " + std::to_string(c.msize));
      EdmOptions opt;
      opt.seed = seed;
      const EdmAnalysis analysis(s, min_size, opt);
      for (auto& row : out.table) {
        const auto r = analysis.result(row.config.msize, row.config.beta);
        row.predicted.push_back(r ? std::optional(r->break_date) : std::nullopt);
      }
    }
  }

  for (auto& row : out.table)
    score_predictions(row, observed);
  for (std::size_t i = 1; i < out.table.size(); ++i) {
    const auto& a = out.table[i];
    const auto& b = out.table[out.best];
    if (std::tie(a.missed, a.mae, a.rmse) < std::tie(b.missed, b.mae, b.rmse))
      out.best = i;
  }
  return out;
}

// ---- series comparison ----------------------------------------------------

struct Comparison {
  double rmse = 0;
  double msd = 0;  // mean(ours - reference)
  double mae = 0;
  int n = 0;
};

inline Comparison compare_series(const TimeSeries& ours, const TimeSeries& reference, bool normalize_max = false)
{
  Aligned al = align(ours, reference);
  require(!al.dates.empty(), ErrorCode::invalid_argument,
          "series '" + ours.aoi_id + "' and its reference share no dates");
  if (normalize_max) {
    for (auto* v : {&al.a, &al.b}) {
      const double mx = *std::max_element(v->begin(), v->end());
      require(mx > 0, ErrorCode::degenerate_input, "cannot normalize a series whose maximum is not positive");
      for (double& x : *v)
        x /= mx;
    }
  }
  Comparison c;
  c.n = static_cast<int>(al.dates.size());
  double sq = 0, sd = 0, ad = 0;
  for (std::size_t i = 0; i < al.dates.size(); ++i) {
    const double d = al.a[i] - al.b[i];
    sq += d * d;
    sd += d;
    ad += std::abs(d);
  }
  c.rmse = std::sqrt(sq / c.n);
  c.msd = sd / c.n;
  c.mae = ad / c.n;
  return c;
}

/// Mean per-image total count for each calendar month that has images; each
/// value is dated on the first of its month.
inline TimeSeries monthly_means(const std::vector<CellCounts>& cells, const std::string& aoi_id)
{
  std::map<Day, std::pair<double, int>> months;
  for (const auto& c : cells) {
    int total = 0;
    for (const auto& row : c.counts)
      for (int v : row)
        total += v;
    auto& m = months[first_of_month(day_of(c.timestamp))];
    m.first += total;
    ++m.second;
  }
  TimeSeries out;
  out.aoi_id = aoi_id;
  out.window_days = 0;  // calendar months
  out.step_days = 0;
  for (const auto& [month, acc] : months) {
    out.dates.push_back(month);
    out.values.push_back(acc.first / acc.second);
  }
  return out;
}

// ---- epidemiological data -------------------------------------------------

inline constexpr int kEpiWindow = 14;

struct EpiSeries {
  std::string region;
  std::vector<Day> dates;
  std::vector<double> new_cases;
  std::vector<double> new_deaths;
  std::vector<double> smoothed_cases;   // trailing 14-day means, truncated at the start
  std::vector<double> smoothed_deaths;
};

inline EpiSeries make_epi(std::string region, std::vector<Day> dates, std::vector<double> cases,
                          std::vector<double> deaths, int window = kEpiWindow)
{
  require(dates.size() == cases.size() && dates.size() == deaths.size(), ErrorCode::invalid_argument,
          "epidemiological columns differ in length");
  for (std::size_t i = 0; i < dates.size(); ++i)
    require(cases[i] >= 0 && deaths[i] >= 0, ErrorCode::invalid_argument,
            "negative case or death count on " + format_day(dates[i]));
  EpiSeries e;
  e.region = std::move(region);
  TimeSeries c{e.region, dates, cases, window, 1};
  TimeSeries d{e.region, dates, deaths, window, 1};
  e.smoothed_cases = sma(c, window).values;
  e.smoothed_deaths = sma(d, window).values;
  e.dates = std::move(dates);
  e.new_cases = std::move(cases);
  e.new_deaths = std::move(deaths);
  return e;
}

enum class EpiChannel { cases, deaths };

inline std::string to_string(EpiChannel c) { return c == EpiChannel::cases ? "cases" : "deaths"; }

inline EpiChannel epi_channel_from_string(const std::string& s)
{
  if (s == "cases")
    return EpiChannel::cases;
  if (s == "deaths")
    return EpiChannel::deaths;
  fail(ErrorCode::invalid_argument, "unknown epidemiological channel '" + s + "' (expected cases or deaths)");
}

/// Pearson r between activity and the smoothed channel over their common
/// dates on or after `from`.
inline double correlate(const TimeSeries& activity, const EpiSeries& epi, EpiChannel channel, Day from)
{
  TimeSeries e{epi.region, epi.dates, channel == EpiChannel::cases ? epi.smoothed_cases : epi.smoothed_deaths, 1, 1};
  const Aligned al = align(activity, e);
  std::vector<double> x, y;
  for (std::size_t i = 0; i < al.dates.size(); ++i)
    if (al.dates[i] >= from) {
      x.push_back(al.a[i]);
      y.push_back(al.b[i]);
    }
  require(x.size() >= 3, ErrorCode::insufficient_data,
          "only " + std::to_string(x.size()) + " common dates from " + format_day(from) + " (need 3)");
  return pearson(x, y);
}

}  // namespace skywatch::series

#pragma once

#include <skywatch/core/error.hpp>
#include <skywatch/series/edm.hpp>
#include <skywatch/series/timeseries.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace skywatch::series {

/// Trailing mean over the dates in [d - window + 1, d]; windows are truncated
/// at the start of the series.
inline TimeSeries sma(const TimeSeries& s, int window_days)
{
  require(window_days >= 1, ErrorCode::invalid_argument, "moving-average window must be at least 1 day");
  s.validate();
  TimeSeries out = s;
  std::size_t lo = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Day start = s.dates[i] - std::chrono::days(window_days - 1);
    while (s.dates[lo] < start)
      ++lo;
    double sum = 0;
    for (std::size_t k = lo; k <= i; ++k)
      sum += s.values[k];
    out.values[i] = sum / static_cast<double>(i - lo + 1);
  }
  return out;
}

inline constexpr int kShortWindow = 14;
inline constexpr int kLongWindow = 49;

/// Upward crossover of the short over the long moving average: the short
/// average is at most the long one on the previous date and above it on this
/// one. Only dates where both the current and previous long averages cover a
/// full window are searched. If several crossings qualify, the one nearest
/// the minimum of the long average wins (later one on a tie).
inline std::optional<BreakResult> sma_crossover_break(const TimeSeries& s, int short_window = kShortWindow,
                                                      int long_window = kLongWindow)
{
  require(short_window >= 1 && long_window > short_window, ErrorCode::invalid_argument,
          "crossover needs 1 <= short < long windows");
  require(static_cast<long>(s.size()) > long_window, ErrorCode::invalid_argument,
          "series of length " + std::to_string(s.size()) + " is too short for a " + std::to_string(long_window) +
              "-day long average");
  const TimeSeries fast = sma(s, short_window);
  const TimeSeries slow = sma(s, long_window);
  const std::size_t first = static_cast<std::size_t>(long_window);

  std::size_t argmin = first - 1;
  for (std::size_t i = first; i < s.size(); ++i)
    if (slow.values[i] < slow.values[argmin])
      argmin = i;

  std::optional<std::size_t> best;
  for (std::size_t i = first; i < s.size(); ++i) {
    const bool cross = fast.values[i - 1] <= slow.values[i - 1] && fast.values[i] > slow.values[i];
    if (!cross)
      continue;
    const auto dist = [&](std::size_t k) { return k > argmin ? k - argmin : argmin - k; };
    if (!best || dist(i) <= dist(*best))
      best = i;
  }
  if (!best)
    return std::nullopt;
  BreakResult r;
  r.method = BreakMethod::sma_crossover;
  r.break_date = s.dates[*best];
  r.params = {{"short", short_window}, {"long", long_window}};
  r.diagnostic = fast.values[*best] - slow.values[*best];
  return r;
}

}  // namespace skywatch::series

#pragma once

#include <skywatch/core/error.hpp>
#include <skywatch/core/time.hpp>

#include <algorithm>
#include <map>
#include <string>
#include <vector>

namespace skywatch::series {

struct TimeSeries {
  std::string aoi_id;
  std::vector<Day> dates;
  std::vector<double> values;
  int window_days = 30;
  int step_days = 1;

  std::size_t size() const { return dates.size(); }
  bool empty() const { return dates.empty(); }
  bool operator==(const TimeSeries&) const = default;

  void validate() const
  {
    require(dates.size() == values.size(), ErrorCode::invalid_argument, "dates and values differ in length");
    for (std::size_t i = 1; i < dates.size(); ++i)
      require(dates[i - 1] < dates[i], ErrorCode::invalid_argument, "series dates must be strictly increasing");
  }

  /// Index of `day`, or -1.
  long index_of(Day day) const
  {
    const auto it = std::lower_bound(dates.begin(), dates.end(), day);
    return it != dates.end() && *it == day ? static_cast<long>(it - dates.begin()) : -1;
  }
};

enum class BreakMethod { sma_crossover, edm };

inline std::string to_string(BreakMethod m) { return m == BreakMethod::sma_crossover ? "sma-crossover" : "edm"; }

inline BreakMethod break_method_from_string(const std::string& s)
{
  if (s == "sma-crossover" || s == "sma")
    return BreakMethod::sma_crossover;
  if (s == "edm")
    return BreakMethod::edm;
  fail(ErrorCode::invalid_argument, "unknown break method '" + s + "' (expected sma-crossover or edm)");
}

struct BreakResult {
  BreakMethod method = BreakMethod::sma_crossover;
  Day break_date{};
  std::map<std::string, double> params;  // {short, long} or {msize, beta}
  double diagnostic = 0;                 // crossover margin or divergence statistic
};

/// Inner join on exact dates.
struct Aligned {
  std::vector<Day> dates;
  std::vector<double> a;
  std::vector<double> b;
};

inline Aligned align(const TimeSeries& x, const TimeSeries& y)
{
  Aligned out;
  std::size_t i = 0, j = 0;
  while (i < x.size() && j < y.size()) {
    if (x.dates[i] < y.dates[j]) {
      ++i;
    } else if (y.dates[j] < x.dates[i]) {
      ++j;
    } else {
      out.dates.push_back(x.dates[i]);
      out.a.push_back(x.values[i++]);
      out.b.push_back(y.values[j++]);
    }
  }
  return out;
}

}  // namespace skywatch::series

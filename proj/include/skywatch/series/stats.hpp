#pragma once

#include <skywatch/core/error.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

namespace skywatch::series {

struct WilcoxonResult {
  double statistic = 0;  // W+, sum of ranks of positive differences a - b
  double p_value = 1;    // two-sided
  int n = 0;             // nonzero differences
  bool exact = false;
};

inline constexpr int kWilcoxonExactMax = 12;

/// Average ranks (1-based) of |d|; ties share the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> v)
{
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]])
      ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1;
    for (std::size_t k = i; k <= j; ++k)
      rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

/// Wilcoxon signed-rank test on paired samples. Zero differences are dropped.
/// Exact null distribution for up to 12 differences (ties included, since
/// doubled average ranks are integers), normal approximation with tie
/// correction above that.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b)
{
  require(a.size() == b.size(), ErrorCode::invalid_argument, "paired samples differ in length");
  std::vector<double> mag;
  std::vector<bool> positive;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    require(std::isfinite(d), ErrorCode::invalid_argument, "paired samples must be finite");
    if (d != 0) {
      mag.push_back(std::abs(d));
      positive.push_back(d > 0);
    }
  }
  require(!mag.empty(), ErrorCode::degenerate_input, "all paired differences are zero");
  const auto rank = average_ranks(mag);
  WilcoxonResult r;
  r.n = static_cast<int>(mag.size());
  for (std::size_t i = 0; i < mag.size(); ++i)
    if (positive[i])
      r.statistic += rank[i];
  const double n = r.n;

  if (r.n <= kWilcoxonExactMax) {
    r.exact = true;
    // ways[s] = number of sign patterns whose doubled W+ equals s
    std::vector<int> twice(rank.size());
    int total = 0;
    for (std::size_t i = 0; i < rank.size(); ++i) {
      twice[i] = static_cast<int>(std::lround(2 * rank[i]));
      total += twice[i];
    }
    std::vector<double> ways(static_cast<std::size_t>(total) + 1, 0.0);
    ways[0] = 1;
    for (int t : twice)
      for (int s = total; s >= t; --s)
        ways[s] += ways[s - t];
    const int w = static_cast<int>(std::lround(2 * r.statistic));
    double lower = 0, upper = 0;
    for (int s = 0; s <= total; ++s) {
      if (s <= w)
        lower += ways[s];
      if (s >= w)
        upper += ways[s];
    }
    const double patterns = std::ldexp(1.0, r.n);
    r.p_value = std::min(1.0, 2 * std::min(lower, upper) / patterns);
    return r;
  }

  double ties = 0;
  auto sorted = mag;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i])
      ++j;
    const double t = static_cast<double>(j - i);
    ties += t * t * t - t;
    i = j;
  }
  const double mean = n * (n + 1) / 4;
  const double var = n * (n + 1) * (2 * n + 1) / 24 - ties / 48;
  const double z = (r.statistic - mean) / std::sqrt(var);
  r.p_value = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
  return r;
}

/// 1 - SS_res / SS_tot.
inline double r_squared(std::span<const double> observed, std::span<const double> predicted)
{
  require(observed.size() == predicted.size() && observed.size() >= 2, ErrorCode::invalid_argument,
          "r_squared needs two equal-length samples of at least 2 points");
  const double mean = std::accumulate(observed.begin(), observed.end(), 0.0) / static_cast<double>(observed.size());
  double res = 0, tot = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    res += (observed[i] - predicted[i]) * (observed[i] - predicted[i]);
    tot += (observed[i] - mean) * (observed[i] - mean);
  }
  require(tot > 0, ErrorCode::degenerate_input, "observed values have zero variance");
  return 1 - res / tot;
}

struct LineFit {
  double slope = 0;
  double intercept = 0;
};

/// Ordinary least squares y = intercept + slope * x.
inline LineFit least_squares(std::span<const double> x, std::span<const double> y)
{
  require(x.size() == y.size() && x.size() >= 2, ErrorCode::invalid_argument,
          "line fit needs two equal-length samples of at least 2 points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  require(sxx > 0, ErrorCode::degenerate_input, "regressor has zero variance");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  return f;
}

inline double pearson(std::span<const double> x, std::span<const double> y)
{
  require(x.size() == y.size() && x.size() >= 2, ErrorCode::invalid_argument,
          "correlation needs two equal-length samples of at least 2 points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0 && syy > 0, ErrorCode::degenerate_input, "correlation of a constant sample");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace skywatch::series

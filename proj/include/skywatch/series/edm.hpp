#pragma once

// E-divisive with medians: a robust two-sample divergence scanned over every
// admissible split, with a permutation null. Permutations reorder the raw
// values and are then smoothed like the observed series, so the null keeps the
// autocorrelation the smoothing introduces.

#include <skywatch/core/error.hpp>
#include <skywatch/series/timeseries.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace skywatch::series {

inline constexpr int kEdmMinSize = 64;
inline constexpr double kEdmBeta = 0.2;
inline constexpr int kEdmPermutations = 199;
inline constexpr int kEdmBlockLength = 1;
inline constexpr int kEdmSmoothing = 7;

namespace edm_detail {

// Order statistics of pairwise absolute differences, computed from sorted
// samples without materializing the pairs. All comparisons are made on the
// rounded differences themselves, so results equal a brute-force median of
// |x_i - x_j| bit for bit.

/// #{i < j : x[j] - x[i] <= t}, x sorted.
inline long count_within(const std::vector<double>& x, double t)
{
  long n = 0;
  std::size_t j = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (j < i + 1)
      j = i + 1;
    while (j < x.size() && x[j] - x[i] <= t)
      ++j;
    n += static_cast<long>(j - i - 1);
  }
  return n;
}

/// Smallest x[j] - x[i] (i < j) strictly above lo, or +inf.
inline double min_within_above(const std::vector<double>& x, double lo)
{
  double best = std::numeric_limits<double>::infinity();
  std::size_t j = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (j < i + 1)
      j = i + 1;
    while (j < x.size() && x[j] - x[i] <= lo)
      ++j;
    if (j < x.size())
      best = std::min(best, x[j] - x[i]);
  }
  return best;
}

/// #{(a, b) : |a - b| <= t}, a and b sorted.
inline long count_between(const std::vector<double>& a, const std::vector<double>& b, double t)
{
  long n = 0;
  std::size_t hi = 0, lo = 0;  // b[0, hi): b - a <= t; b[0, lo): a - b > t
  for (double v : a) {
    while (hi < b.size() && b[hi] - v <= t)
      ++hi;
    while (lo < b.size() && v - b[lo] > t)
      ++lo;
    n += static_cast<long>(hi) - static_cast<long>(std::min(lo, hi));
  }
  return n;
}

inline double min_between_above(const std::vector<double>& a, const std::vector<double>& b, double lo)
{
  double best = std::numeric_limits<double>::infinity();
  std::size_t up = 0, down = 0;  // b[up]: first with b - a > lo; b[0, down): a - b > lo
  for (double v : a) {
    while (up < b.size() && b[up] - v <= lo)
      ++up;
    if (up < b.size())
      best = std::min(best, b[up] - v);
    while (down < b.size() && v - b[down] > lo)
      ++down;
    if (down > 0)
      best = std::min(best, v - b[down - 1]);
  }
  return best;
}

/// Smallest value v of the implicit multiset with count(v) >= k (1-based k).
/// `hint` only affects speed.
template <class Count, class MinAbove>
double kth(long k, double hint, double span, const Count& count, const MinAbove& min_above)
{
  if (count(0.0) >= k)
    return 0.0;
  double lo = 0, hi = span;  // count(lo) < k <= count(hi)
  if (hint > 0 && hint <= span) {
    double step = std::max(span * 1e-3, 1e-12);
    if (count(hint) >= k) {
      hi = hint;
      for (double c = hint - step; c > 0; c -= step, step *= 4) {
        if (count(c) < k) {
          lo = c;
          break;
        }
        hi = c;
      }
    } else {
      lo = hint;
      for (double c = hint + step; c < span; c += step, step *= 4) {
        if (count(c) >= k) {
          hi = c;
          break;
        }
        lo = c;
      }
    }
  }
  for (;;) {
    const double m = min_above(lo);
    if (count(m) >= k)
      return m;
    lo = m;
    const double mid = lo + 0.5 * (hi - lo);
    if (mid > lo && mid < hi) {
      if (count(mid) >= k)
        hi = mid;
      else
        lo = mid;
    }
  }
}

template <class Count, class MinAbove>
double median_of(long pairs, double& hint, double span, const Count& count, const MinAbove& min_above)
{
  if (pairs % 2 == 1)
    return hint = kth((pairs + 1) / 2, hint, span, count, min_above);
  const double a = kth(pairs / 2, hint, span, count, min_above);
  const double b = kth(pairs / 2 + 1, a, span, count, min_above);
  hint = a;
  return 0.5 * (a + b);
}

inline void insert_sorted(std::vector<double>& v, double x) { v.insert(std::upper_bound(v.begin(), v.end(), x), x); }

inline void erase_sorted(std::vector<double>& v, double x) { v.erase(std::lower_bound(v.begin(), v.end(), x)); }

}  // namespace edm_detail

/// Q for every split tau in [first, n - first], where the segments are
/// [0, tau) and [tau, n):
///   Q(tau) = n1 n2 / (n1 + n2) * (2 m_AB - m_AA - m_BB)
/// with m the median absolute pairwise difference within/between segments.
struct EdmProfile {
  long first = 0;
  std::vector<double> q;

  long last() const { return first + static_cast<long>(q.size()) - 1; }

  /// Best split with both segments holding at least `msize` points; ties keep
  /// the earliest split.
  std::pair<long, double> best(int msize) const
  {
    const long n = last() + first;
    require(msize >= first && n - msize >= msize, ErrorCode::invalid_argument, "msize outside the scanned range");
    long tau = msize;
    double val = q[msize - first];
    for (long t = msize + 1; t <= n - msize; ++t)
      if (q[t - first] > val) {
        tau = t;
        val = q[t - first];
      }
    return {tau, val};
  }
};

inline EdmProfile edm_profile(const std::vector<double>& x, int first)
{
  using namespace edm_detail;
  const long n = static_cast<long>(x.size());
  require(first >= 2 && n >= 2L * first, ErrorCode::invalid_argument,
          "EDM needs at least 2*msize points (got " + std::to_string(n) + ", msize " + std::to_string(first) + ")");
  const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
  const double span = *mx - *mn;

  std::vector<double> a(x.begin(), x.begin() + first), b(x.begin() + first, x.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double ha = -1, hb = -1, hab = -1;
  EdmProfile out;
  out.first = first;
  for (long tau = first; tau <= n - first; ++tau) {
    if (tau > first) {
      insert_sorted(a, x[tau - 1]);
      erase_sorted(b, x[tau - 1]);
    }
    const long na = static_cast<long>(a.size()), nb = static_cast<long>(b.size());
    const double maa = median_of(
        na * (na - 1) / 2, ha, span, [&](double t) { return count_within(a, t); },
        [&](double t) { return min_within_above(a, t); });
    const double mbb = median_of(
        nb * (nb - 1) / 2, hb, span, [&](double t) { return count_within(b, t); },
        [&](double t) { return min_within_above(b, t); });
    const double mab = median_of(
        na * nb, hab, span, [&](double t) { return count_between(a, b, t); },
        [&](double t) { return min_between_above(a, b, t); });
    const double n1 = static_cast<double>(na), n2 = static_cast<double>(nb);
    out.q.push_back(n1 * n2 / (n1 + n2) * (2 * mab - maa - mbb));
  }
  return out;
}

/// Random reordering of whole blocks of `block` consecutive points.
inline std::vector<double> block_permute(const std::vector<double>& x, int block, std::mt19937_64& rng)
{
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s < x.size(); s += static_cast<std::size_t>(block))
    starts.push_back(s);
  std::shuffle(starts.begin(), starts.end(), rng);
  std::vector<double> out;
  out.reserve(x.size());
  for (std::size_t s : starts)
    for (std::size_t i = s; i < std::min(x.size(), s + block); ++i)
      out.push_back(x[i]);
  return out;
}

/// 95th percentile, nearest-rank definition.
inline double percentile95(std::vector<double> v)
{
  require(!v.empty(), ErrorCode::invalid_argument, "percentile of an empty sample");
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(v.size()) - 1e-9));
  return v[std::max<std::size_t>(rank, 1) - 1];
}

/// Centered moving average of odd width, truncated at both ends.
inline std::vector<double> centered_average(const std::vector<double>& x, int width)
{
  require(width >= 1 && width % 2 == 1, ErrorCode::invalid_argument, "centered average needs an odd width");
  const long half = width / 2, n = static_cast<long>(x.size());
  std::vector<double> out(x.size());
  for (long i = 0; i < n; ++i) {
    const long lo = std::max(0L, i - half), hi = std::min(n - 1, i + half);
    double sum = 0;
    for (long k = lo; k <= hi; ++k)
      sum += x[k];
    out[i] = sum / static_cast<double>(hi - lo + 1);
  }
  return out;
}

struct EdmOptions {
  int msize = kEdmMinSize;
  double beta = kEdmBeta;
  int permutations = kEdmPermutations;
  int block = kEdmBlockLength;  // permute whole runs of this many points
  int smoothing = kEdmSmoothing;  // centered moving-average width; 1 disables
  std::uint64_t seed = 0;
};

/// Observed and permuted profiles for one series. Any msize >= min_size and
/// any beta can be evaluated from it without rescanning.
class EdmAnalysis {
public:
  EdmAnalysis(const TimeSeries& s, int min_size, const EdmOptions& opt = {}) : series_(s)
  {
    s.validate();
    require(opt.permutations >= 1 && opt.block >= 1, ErrorCode::invalid_argument,
            "permutation count and block length must be positive");
    smoothed_ = opt.smoothing > 1 ? centered_average(s.values, opt.smoothing) : s.values;
    observed_ = edm_profile(smoothed_, min_size);
    std::mt19937_64 rng(opt.seed);
    for (int p = 0; p < opt.permutations; ++p) {
      auto permuted = block_permute(s.values, opt.block, rng);
      if (opt.smoothing > 1)
        permuted = centered_average(permuted, opt.smoothing);
      null_.push_back(edm_profile(permuted, min_size));
    }
  }

  const std::vector<double>& smoothed() const { return smoothed_; }
  const EdmProfile& observed() const { return observed_; }

  double null_p95(int msize) const
  {
    std::vector<double> maxima;
    for (const auto& p : null_)
      maxima.push_back(p.best(msize).second);
    return percentile95(std::move(maxima));
  }

  std::optional<BreakResult> result(int msize, double beta) const
  {
    require(beta >= 0, ErrorCode::invalid_argument, "beta must be non-negative");
    const auto [tau, q] = observed_.best(msize);
    if (!(q > (1 + beta) * null_p95(msize)))
      return std::nullopt;
    BreakResult r;
    r.method = BreakMethod::edm;
    r.break_date = series_.dates[static_cast<std::size_t>(tau)];
    r.params = {{"msize", msize}, {"beta", beta}};
    r.diagnostic = q;
    return r;
  }

private:
  TimeSeries series_;
  std::vector<double> smoothed_;
  EdmProfile observed_;
  std::vector<EdmProfile> null_;
};

/// Best split, reported only if its divergence exceeds (1 + beta) times the
/// 95th percentile of permutation maxima.
inline std::optional<BreakResult> edm_break(const TimeSeries& s, const EdmOptions& opt = {})
{
  require(static_cast<long>(s.size()) >= 2L * opt.msize, ErrorCode::invalid_argument,
          "EDM needs at least 2*msize points (got " + std::to_string(s.size()) + ", msize " +
              std::to_string(opt.msize) + ")");
  require(opt.beta >= 0, ErrorCode::invalid_argument, "beta must be non-negative");
  return EdmAnalysis(s, opt.msize, opt).result(opt.msize, opt.beta);
}

}  // namespace skywatch::series

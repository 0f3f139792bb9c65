#pragma once

#include <skywatch/core/error.hpp>

#include <charconv>
#include <chrono>
#include <cstdio>
#include <string>
#include <string_view>

namespace skywatch {

using Day = std::chrono::sys_days;
using Timestamp = std::chrono::sys_seconds;

namespace detail {

inline int parse_int(std::string_view text, std::size_t pos, std::size_t len,
                     std::string_view whole)
{
  int value = 0;
  if (pos + len > text.size())
    fail(ErrorCode::format, "truncated date/time '" + std::string(whole) + "'");
  const auto* first = text.data() + pos;
  const auto [ptr, ec] = std::from_chars(first, first + len, value);
  if (ec != std::errc{} || ptr != first + len)
    fail(ErrorCode::format, "malformed date/time '" + std::string(whole) + "'");
  return value;
}

inline void expect_char(std::string_view text, std::size_t pos, char c)
{
  if (pos >= text.size() || text[pos] != c)
    fail(ErrorCode::format, "malformed date/time '" + std::string(text) + "'");
}

inline Day make_day(int y, int m, int d, std::string_view whole)
{
  const auto ymd = std::chrono::year{y} / std::chrono::month{static_cast<unsigned>(m)} /
                   std::chrono::day{static_cast<unsigned>(d)};
  if (!ymd.ok())
    fail(ErrorCode::format, "invalid calendar date '" + std::string(whole) + "'");
  return Day{ymd};
}

}  // namespace detail

/// Parses `YYYY-MM-DD`.
inline Day parse_day(std::string_view text)
{
  if (text.size() != 10)
    fail(ErrorCode::format, "expected YYYY-MM-DD, got '" + std::string(text) + "'");
  detail::expect_char(text, 4, '-');
  detail::expect_char(text, 7, '-');
  return detail::make_day(detail::parse_int(text, 0, 4, text), detail::parse_int(text, 5, 2, text),
                          detail::parse_int(text, 8, 2, text), text);
}

/// Parses `YYYY-MM` into the first day of that month.
inline Day parse_month(std::string_view text)
{
  if (text.size() != 7)
    fail(ErrorCode::format, "expected YYYY-MM, got '" + std::string(text) + "'");
  detail::expect_char(text, 4, '-');
  return detail::make_day(detail::parse_int(text, 0, 4, text), detail::parse_int(text, 5, 2, text), 1,
                          text);
}

/// Parses `YYYY-MM-DDTHH:MM:SSZ` (UTC only).
inline Timestamp parse_timestamp(std::string_view text)
{
  if (text.size() != 20 || text.back() != 'Z')
    fail(ErrorCode::format, "expected YYYY-MM-DDTHH:MM:SSZ, got '" + std::string(text) + "'");
  const Day day = parse_day(text.substr(0, 10));
  detail::expect_char(text, 10, 'T');
  detail::expect_char(text, 13, ':');
  detail::expect_char(text, 16, ':');
  const int hh = detail::parse_int(text, 11, 2, text);
  const int mm = detail::parse_int(text, 14, 2, text);
  const int ss = detail::parse_int(text, 17, 2, text);
  if (hh > 23 || mm > 59 || ss > 60)
    fail(ErrorCode::format, "invalid time of day '" + std::string(text) + "'");
  return Timestamp{day} + std::chrono::hours{hh} + std::chrono::minutes{mm} +
         std::chrono::seconds{ss};
}

inline std::string format_day(Day day)
{
  const std::chrono::year_month_day ymd{day};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

inline std::string format_month(Day day)
{
  const std::chrono::year_month_day ymd{day};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()));
  return buf;
}

inline std::string format_timestamp(Timestamp ts)
{
  const auto day = std::chrono::floor<std::chrono::days>(ts);
  const std::chrono::hh_mm_ss tod{ts - day};
  char buf[16];
  std::snprintf(buf, sizeof buf, "T%02d:%02d:%02dZ", static_cast<int>(tod.hours().count()),
                static_cast<int>(tod.minutes().count()), static_cast<int>(tod.seconds().count()));
  return format_day(Day{day}) + buf;
}

inline Day day_of(Timestamp ts) { return std::chrono::floor<std::chrono::days>(ts); }

inline Day first_of_month(Day day)
{
  const std::chrono::year_month_day ymd{day};
  return Day{ymd.year() / ymd.month() / std::chrono::day{1}};
}

/// Whole days from `from` to `to` (negative when `to` precedes `from`).
inline long days_between(Day from, Day to) { return (to - from).count(); }

}  // namespace skywatch

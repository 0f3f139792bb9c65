#pragma once

// Minimal deterministic SVG line charts. Plots only render data files the
// pipeline also writes as CSV.

#include <skywatch/core/time.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace skywatch::pipeline {

struct Line {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
};

struct Marker {
  std::string label;
  double value = 0;
  std::string color = "#d62728";
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool x_is_day = false;  // x holds days since epoch; ticks print as dates
  std::vector<Line> lines;
  std::vector<Marker> vertical;
  std::vector<Marker> horizontal;
};

namespace svg_detail {

inline std::string fmt(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string escape(const std::string& s)
{
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace svg_detail

inline double day_number(Day d) { return static_cast<double>(d.time_since_epoch().count()); }

inline std::string render_svg(const Chart& chart, int width = 800, int height = 400)
{
  using namespace svg_detail;
  constexpr double left = 70, right = 20, top = 40, bottom = 50;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& l : chart.lines)
    for (std::size_t i = 0; i < l.x.size(); ++i) {
      if (!std::isfinite(l.y[i]))
        continue;
      x0 = std::min(x0, l.x[i]);
      x1 = std::max(x1, l.x[i]);
      y0 = std::min(y0, l.y[i]);
      y1 = std::max(y1, l.y[i]);
    }
  for (const auto& m : chart.vertical) {
    x0 = std::min(x0, m.value);
    x1 = std::max(x1, m.value);
  }
  for (const auto& m : chart.horizontal) {
    y0 = std::min(y0, m.value);
    y1 = std::max(y1, m.value);
  }
  if (!std::isfinite(x0)) {
    x0 = 0;
    x1 = 1;
    y0 = 0;
    y1 = 1;
  }
  if (x1 == x0)
    x1 = x0 + 1;
  if (y1 == y0)
    y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  const double pw = width - left - right, ph = height - top - bottom;
  auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return top + (y1 - y) / (y1 - y0) * ph; };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(chart.title)
      << "</text>\n";
  out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    const std::string xt = chart.x_is_day ? format_day(Day(std::chrono::days(std::lround(xv)))) : tick(xv);
    out << "<text x=\"" << fmt(sx(xv)) << "\" y=\"" << height - bottom + 16 << "\" text-anchor=\"middle\">" << xt
        << "</text>\n";
    out << "<text x=\"" << left - 6 << "\" y=\"" << fmt(sy(yv) + 4) << "\" text-anchor=\"end\">" << tick(yv)
        << "</text>\n";
  }
  out << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">"
      << escape(chart.x_label) << "</text>\n";
  out << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << top + ph / 2 << ")\">" << escape(chart.y_label) << "</text>\n";
  for (const auto& m : chart.horizontal)
    out << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << fmt(sy(m.value)) << "\" y2=\""
        << fmt(sy(m.value)) << "\" stroke=\"" << m.color << "\" stroke-dasharray=\"4 3\"/>\n";
  for (const auto& m : chart.vertical)
    out << "<line x1=\"" << fmt(sx(m.value)) << "\" x2=\"" << fmt(sx(m.value)) << "\" y1=\"" << top << "\" y2=\""
        << top + ph << "\" stroke=\"" << m.color << "\" stroke-dasharray=\"4 3\"/>\n";
  for (const auto& l : chart.lines) {
    out << "<polyline fill=\"none\" stroke=\"" << l.color << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (std::size_t i = 0; i < l.x.size(); ++i) {
      if (!std::isfinite(l.y[i]))
        continue;
      out << (first ? "" : " ") << fmt(sx(l.x[i])) << ',' << fmt(sy(l.y[i]));
      first = false;
    }
    out << "\"/>\n";
  }
  // legend
  double ly = top + 14;
  auto legend = [&](const std::string& label, const std::string& color) {
    if (label.empty())
      return;
    out << "<line x1=\"" << left + 10 << "\" x2=\"" << left + 30 << "\" y1=\"" << fmt(ly - 4) << "\" y2=\""
        << fmt(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << left + 36 << "\" y=\"" << fmt(ly) << "\">" << escape(label) << "</text>\n";
    ly += 14;
  };
  for (const auto& l : chart.lines)
    legend(l.label, l.color);
  for (const auto& m : chart.vertical)
    legend(m.label, m.color);
  for (const auto& m : chart.horizontal)
    legend(m.label, m.color);
  out << "</svg>\n";
  return out.str();
}

}  // namespace skywatch::pipeline

#pragma once

// Minimal SVG charts: bars, points and lines on linear axes. Enough to look
// at a histogram with its fitted curve; the CSV written next to each SVG is
// the actual data product.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

namespace nvforge {

/// Shortest decimal text that reads back to the same double.
inline std::string format_number(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

enum class SeriesStyle { bars, points, line };

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  SeriesStyle style = SeriesStyle::points;
  std::string color = "#1f77b4";
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

namespace detail {

inline std::string f3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
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

// Tick step of 1, 2 or 5 times a power of ten giving about 5 ticks.
inline double nice_step(double span) {
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double r = raw / mag;
  return (r < 1.5 ? 1.0 : r < 3.5 ? 2.0 : r < 7.5 ? 5.0 : 10.0) * mag;
}

}  // namespace detail

inline std::string render_svg(const Chart& chart, int width = 640, int height = 420) {
  const double left = 70, right = 20, top = 40, bottom = 55;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  bool any_bars = false;
  for (const auto& s : chart.series) {
    any_bars = any_bars || s.style == SeriesStyle::bars;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (any_bars) ymin = std::min(ymin, 0.0);
  if (xmax == xmin) xmin -= 0.5, xmax += 0.5;
  if (ymax == ymin) ymin -= 0.5, ymax += 0.5;
  const double ypad = 0.05 * (ymax - ymin);
  ymax += ypad;
  if (!any_bars || ymin < 0.0) ymin -= ypad;

  const double pw = width - left - right, ph = height - top - bottom;
  auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return top + (ymax - y) / (ymax - ymin) * ph; };

  std::string o;
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
       std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) + " " + std::to_string(height) +
       "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o += "<text x=\"" + detail::f3(width / 2.0) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
       detail::xml_escape(chart.title) + "</text>\n";

  // Axes and ticks.
  o += "<g stroke=\"black\" fill=\"none\">\n";
  o += "<line x1=\"" + detail::f3(left) + "\" y1=\"" + detail::f3(top + ph) + "\" x2=\"" + detail::f3(left + pw) +
       "\" y2=\"" + detail::f3(top + ph) + "\"/>\n";
  o += "<line x1=\"" + detail::f3(left) + "\" y1=\"" + detail::f3(top) + "\" x2=\"" + detail::f3(left) + "\" y2=\"" +
       detail::f3(top + ph) + "\"/>\n";
  o += "</g>\n<g font-size=\"10\">\n";
  const double xs = detail::nice_step(xmax - xmin), ys = detail::nice_step(ymax - ymin);
  for (double t = std::ceil(xmin / xs) * xs; t <= xmax + 1e-9 * xs; t += xs) {
    const double v = std::fabs(t) < 1e-12 * xs ? 0.0 : t;
    o += "<line x1=\"" + detail::f3(sx(v)) + "\" y1=\"" + detail::f3(top + ph) + "\" x2=\"" + detail::f3(sx(v)) +
         "\" y2=\"" + detail::f3(top + ph + 4) + "\" stroke=\"black\"/>";
    o += "<text x=\"" + detail::f3(sx(v)) + "\" y=\"" + detail::f3(top + ph + 16) + "\" text-anchor=\"middle\">" +
         format_number(v) + "</text>\n";
  }
  for (double t = std::ceil(ymin / ys) * ys; t <= ymax + 1e-9 * ys; t += ys) {
    const double v = std::fabs(t) < 1e-12 * ys ? 0.0 : t;
    o += "<line x1=\"" + detail::f3(left - 4) + "\" y1=\"" + detail::f3(sy(v)) + "\" x2=\"" + detail::f3(left) +
         "\" y2=\"" + detail::f3(sy(v)) + "\" stroke=\"black\"/>";
    o += "<text x=\"" + detail::f3(left - 6) + "\" y=\"" + detail::f3(sy(v) + 3) + "\" text-anchor=\"end\">" +
         format_number(v) + "</text>\n";
  }
  o += "</g>\n";
  o += "<text x=\"" + detail::f3(left + pw / 2) + "\" y=\"" + detail::f3(height - 12.0) +
       "\" text-anchor=\"middle\">" + detail::xml_escape(chart.x_label) + "</text>\n";
  o += "<text transform=\"translate(16 " + detail::f3(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
       detail::xml_escape(chart.y_label) + "</text>\n";

  for (const auto& s : chart.series) {
    const std::size_t n = std::min(s.x.size(), s.y.size());
    o += "<g>\n";
    if (s.style == SeriesStyle::bars) {
      double w = pw / std::max<std::size_t>(n, 1) * 0.8;
      if (n > 1) w = std::max(1.0, std::fabs(sx(s.x[1]) - sx(s.x[0])) * 0.8);
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(s.y[i])) continue;
        const double y0 = sy(std::max(0.0, ymin)), y1 = sy(s.y[i]);
        o += "<rect x=\"" + detail::f3(sx(s.x[i]) - w / 2) + "\" y=\"" + detail::f3(std::min(y0, y1)) +
             "\" width=\"" + detail::f3(w) + "\" height=\"" + detail::f3(std::fabs(y0 - y1)) + "\" fill=\"" +
             s.color + "\" fill-opacity=\"0.7\"/>\n";
      }
    } else if (s.style == SeriesStyle::points) {
      for (std::size_t i = 0; i < n; ++i)
        if (std::isfinite(s.y[i]))
          o += "<circle cx=\"" + detail::f3(sx(s.x[i])) + "\" cy=\"" + detail::f3(sy(s.y[i])) + "\" r=\"2.5\" fill=\"" +
               s.color + "\"/>\n";
    } else if (n > 0) {
      o += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < n; ++i)
        if (std::isfinite(s.y[i])) o += detail::f3(sx(s.x[i])) + "," + detail::f3(sy(s.y[i])) + " ";
      o += "\"/>\n";
    }
    o += "</g>\n";
  }

  // Legend.
  double ly = top + 8;
  for (const auto& s : chart.series) {
    if (s.label.empty()) continue;
    o += "<rect x=\"" + detail::f3(left + pw - 150) + "\" y=\"" + detail::f3(ly - 8) + "\" width=\"10\" height=\"10\" fill=\"" +
         s.color + "\"/>";
    o += "<text x=\"" + detail::f3(left + pw - 135) + "\" y=\"" + detail::f3(ly + 1) + "\">" +
         detail::xml_escape(s.label) + "</text>\n";
    ly += 16;
  }
  o += "</svg>\n";
  return o;
}

}  // namespace nvforge

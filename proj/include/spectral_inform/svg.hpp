#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

namespace spectral_inform::svg {

enum class Style { Points, Line, Stems };

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  Style style = Style::Points;
  std::string color = "#1f77b4";
};

/// Horizontal or vertical reference line.
struct Rule {
  double at = 0.0;
  bool horizontal = true;
  std::string color = "#888888";
  std::string label;
};

/// A single static panel. Rendering is deterministic: fixed number formats,
/// no timestamps.
struct Plot {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  std::vector<Series> series;
  std::vector<Rule> rules;
  int width = 640;
  int height = 400;
  /// Optional fixed y range; data range (non-finite values skipped) otherwise.
  double ymin = std::numeric_limits<double>::quiet_NaN();
  double ymax = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

}  // namespace detail

inline std::string render(const Plot& p) {
  const double left = 70, right = 20, top = 40, bottom = 55;
  const double pw = p.width - left - right, ph = p.height - top - bottom;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const Series& s : p.series)
    for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
      if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
      x0 = std::min(x0, s.x[k]);
      x1 = std::max(x1, s.x[k]);
      y0 = std::min(y0, s.y[k]);
      y1 = std::max(y1, s.y[k]);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (std::isfinite(p.ymin)) y0 = p.ymin;
  if (std::isfinite(p.ymax)) y1 = p.ymax;
  for (const Series& s : p.series)
    if (s.style == Style::Stems) y0 = std::min(y0, 0.0);
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  const double padx = 0.03 * (x1 - x0), pady = 0.05 * (y1 - y0);
  x0 -= padx, x1 += padx;
  if (!std::isfinite(p.ymin)) y0 -= pady;
  if (!std::isfinite(p.ymax)) y1 += pady;
  auto X = [&](double v) { return left + (v - x0) / (x1 - x0) * pw; };
  auto Y = [&](double v) { return top + (y1 - std::clamp(v, y0, y1)) / (y1 - y0) * ph; };

  std::string o;
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(p.width) + "\" height=\"" +
       std::to_string(p.height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o += "<text x=\"" + detail::num(p.width / 2.0) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
       detail::escape(p.title) + "</text>\n";
  o += "<rect x=\"" + detail::num(left) + "\" y=\"" + detail::num(top) + "\" width=\"" + detail::num(pw) +
       "\" height=\"" + detail::num(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
    o += "<text x=\"" + detail::num(X(xv)) + "\" y=\"" + detail::num(top + ph + 16) +
         "\" text-anchor=\"middle\">" + detail::tick(xv) + "</text>\n";
    o += "<text x=\"" + detail::num(left - 6) + "\" y=\"" + detail::num(Y(yv) + 4) + "\" text-anchor=\"end\">" +
         detail::tick(yv) + "</text>\n";
  }
  o += "<text x=\"" + detail::num(left + pw / 2) + "\" y=\"" + detail::num(p.height - 12.0) +
       "\" text-anchor=\"middle\">" + detail::escape(p.xlabel) + "</text>\n";
  o += "<text x=\"16\" y=\"" + detail::num(top + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       detail::num(top + ph / 2) + ")\">" + detail::escape(p.ylabel) + "</text>\n";

  for (const Rule& r : p.rules) {
    if (r.horizontal) {
      if (!(r.at >= y0 && r.at <= y1)) continue;
      o += "<line x1=\"" + detail::num(left) + "\" x2=\"" + detail::num(left + pw) + "\" y1=\"" +
           detail::num(Y(r.at)) + "\" y2=\"" + detail::num(Y(r.at)) + "\" stroke=\"" + r.color +
           "\" stroke-dasharray=\"4 3\"/>\n";
    } else {
      if (!(r.at >= x0 && r.at <= x1)) continue;
      o += "<line x1=\"" + detail::num(X(r.at)) + "\" x2=\"" + detail::num(X(r.at)) + "\" y1=\"" +
           detail::num(top) + "\" y2=\"" + detail::num(top + ph) + "\" stroke=\"" + r.color +
           "\" stroke-dasharray=\"4 3\"/>\n";
    }
    if (!r.label.empty()) {
      const double tx = r.horizontal ? left + pw - 4 : X(r.at) + 4;
      const double ty = r.horizontal ? Y(r.at) - 4 : top + 14;
      o += "<text x=\"" + detail::num(tx) + "\" y=\"" + detail::num(ty) + "\" fill=\"" + r.color +
           "\" text-anchor=\"" + (r.horizontal ? "end" : "start") + "\">" + detail::escape(r.label) + "</text>\n";
    }
  }

  double legend_y = top + 14;
  for (const Series& s : p.series) {
    const std::size_t k = std::min(s.x.size(), s.y.size());
    if (s.style == Style::Line) {
      std::string path;
      bool pen = false;
      for (std::size_t i = 0; i < k; ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
          pen = false;
          continue;
        }
        path += (pen ? "L" : "M") + detail::num(X(s.x[i])) + " " + detail::num(Y(s.y[i])) + " ";
        pen = true;
      }
      o += "<path d=\"" + path + "\" fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.5\"/>\n";
    } else {
      o += "<g fill=\"" + s.color + "\" stroke=\"" + s.color + "\">\n";
      for (std::size_t i = 0; i < k; ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        if (s.style == Style::Stems)
          o += "<line x1=\"" + detail::num(X(s.x[i])) + "\" x2=\"" + detail::num(X(s.x[i])) + "\" y1=\"" +
               detail::num(Y(0.0)) + "\" y2=\"" + detail::num(Y(s.y[i])) + "\"/>\n";
        o += "<circle cx=\"" + detail::num(X(s.x[i])) + "\" cy=\"" + detail::num(Y(s.y[i])) + "\" r=\"2\"/>\n";
      }
      o += "</g>\n";
    }
    if (!s.name.empty()) {
      o += "<rect x=\"" + detail::num(left + pw - 150) + "\" y=\"" + detail::num(legend_y - 9) +
           "\" width=\"10\" height=\"10\" fill=\"" + s.color + "\"/>\n";
      o += "<text x=\"" + detail::num(left + pw - 135) + "\" y=\"" + detail::num(legend_y) + "\">" +
           detail::escape(s.name) + "</text>\n";
      legend_y += 16;
    }
  }
  o += "</svg>\n";
  return o;
}

}  // namespace spectral_inform::svg

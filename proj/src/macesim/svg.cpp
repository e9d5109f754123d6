/* Copyright 2026 The macesim Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "macesim/svg.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "macesim/text.h"

namespace macesim::svg {

namespace {

constexpr double kWidth = 720;
constexpr double kHeight = 420;
constexpr double kLeft = 70;
constexpr double kRight = 170;  // legend column
constexpr double kTop = 40;
constexpr double kBottom = 50;

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

const char* color(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

std::string num(double v) { return format_fixed(v, 2); }

// Short tick label.
std::string tick_label(double v) {
  const double a = std::fabs(v);
  if (a != 0.0 && (a >= 1e5 || a < 1e-2)) {
    std::ostringstream s;
    s.precision(2);
    s << std::scientific << v;
    return s.str();
  }
  return format_fixed(v, a >= 100 ? 0 : 2);
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish(bool from_zero) {
    if (!std::isfinite(lo)) {
      lo = 0.0;
      hi = 1.0;
    }
    if (from_zero && lo >= 0.0) lo = 0.0;
    if (hi - lo < 1e-12) {
      const double pad = std::max(std::fabs(hi) * 0.1, 1.0);
      lo -= from_zero && lo == 0.0 ? 0.0 : pad;
      hi += pad;
    }
  }
};

void header(std::ostringstream& o, std::string_view title) {
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
    << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
    << "font-family=\"sans-serif\" font-size=\"16\">" << escape(title) << "</text>\n";
}

void axes(std::ostringstream& o, const Range& y, std::string_view y_label,
          std::string_view x_label) {
  const double x0 = kLeft;
  const double x1 = kWidth - kRight;
  const double y0 = kHeight - kBottom;
  const double y1 = kTop;
  o << "<g stroke=\"black\" stroke-width=\"1\">\n"
    << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0
    << "\"/>\n"
    << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1
    << "\"/>\n</g>\n";
  o << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = y.lo + (y.hi - y.lo) * i / 4.0;
    const double py = y0 - (y0 - y1) * i / 4.0;
    o << "<line x1=\"" << x0 - 4 << "\" y1=\"" << num(py) << "\" x2=\"" << x0 << "\" y2=\""
      << num(py) << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << x0 - 6 << "\" y=\"" << num(py + 4) << "\" text-anchor=\"end\">"
      << escape(tick_label(v)) << "</text>\n";
  }
  o << "<text x=\"16\" y=\"" << (y0 + y1) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << (y0 + y1) / 2 << ")\">" << escape(y_label) << "</text>\n";
  o << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 12
    << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n</g>\n";
}

void legend(std::ostringstream& o, const std::vector<std::string>& names) {
  o << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = kTop + 14.0 * static_cast<double>(i);
    o << "<rect x=\"" << kWidth - kRight + 12 << "\" y=\"" << y << "\" width=\"10\" "
      << "height=\"10\" fill=\"" << color(i) << "\"/>\n"
      << "<text x=\"" << kWidth - kRight + 27 << "\" y=\"" << y + 9 << "\">"
      << escape(names[i]) << "</text>\n";
  }
  o << "</g>\n";
}

}  // namespace

std::string escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string line_chart(std::string_view title, std::string_view x_label,
                       std::string_view y_label, std::span<const Series> series) {
  Range xr;
  Range yr;
  for (const Series& s : series) {
    for (const auto& [x, y] : s.points) {
      xr.add(x);
      yr.add(y);
    }
  }
  xr.finish(false);
  yr.finish(true);
  std::ostringstream o;
  header(o, title);
  axes(o, yr, y_label, x_label);
  const double x0 = kLeft;
  const double x1 = kWidth - kRight;
  const double y0 = kHeight - kBottom;
  const double y1 = kTop;
  auto px = [&](double x) { return x0 + (x - xr.lo) / (xr.hi - xr.lo) * (x1 - x0); };
  auto py = [&](double y) { return y0 - (y - yr.lo) / (yr.hi - yr.lo) * (y0 - y1); };
  o << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = xr.lo + (xr.hi - xr.lo) * i / 4.0;
    o << "<text x=\"" << num(px(v)) << "\" y=\"" << y0 + 16 << "\" text-anchor=\"middle\">"
      << escape(tick_label(v)) << "</text>\n";
  }
  o << "</g>\n";
  std::vector<std::string> names;
  for (std::size_t i = 0; i < series.size(); ++i) {
    names.push_back(series[i].name);
    auto pts = series[i].points;
    std::stable_sort(pts.begin(), pts.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    o << "<polyline fill=\"none\" stroke=\"" << color(i) << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < pts.size(); ++k) {
      if (!std::isfinite(pts[k].first) || !std::isfinite(pts[k].second)) continue;
      o << (k ? " " : "") << num(px(pts[k].first)) << ',' << num(py(pts[k].second));
    }
    o << "\"/>\n";
    for (const auto& [x, y] : pts) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      o << "<circle cx=\"" << num(px(x)) << "\" cy=\"" << num(py(y)) << "\" r=\"2.5\" fill=\""
        << color(i) << "\"/>\n";
    }
  }
  legend(o, names);
  o << "</svg>\n";
  return o.str();
}

std::string bar_chart(std::string_view title, std::string_view y_label, const BarData& data) {
  Range yr;
  for (const auto& row : data.values) {
    for (double v : row) yr.add(v);
  }
  yr.finish(true);
  std::ostringstream o;
  header(o, title);
  axes(o, yr, y_label, "");
  const double x0 = kLeft;
  const double x1 = kWidth - kRight;
  const double y0 = kHeight - kBottom;
  const double y1 = kTop;
  const std::size_t nc = std::max<std::size_t>(data.categories.size(), 1);
  const std::size_t ns = std::max<std::size_t>(data.series.size(), 1);
  const double group_w = (x1 - x0) / static_cast<double>(nc);
  const double bar_w = group_w * 0.8 / static_cast<double>(ns);
  auto py = [&](double y) { return y0 - (y - yr.lo) / (yr.hi - yr.lo) * (y0 - y1); };
  for (std::size_t s = 0; s < data.values.size(); ++s) {
    for (std::size_t c = 0; c < data.values[s].size() && c < nc; ++c) {
      const double v = data.values[s][c];
      if (!std::isfinite(v)) continue;
      const double left = x0 + group_w * static_cast<double>(c) + group_w * 0.1 +
                          bar_w * static_cast<double>(s);
      const double top = std::min(py(v), py(std::max(yr.lo, 0.0)));
      const double h = std::fabs(py(v) - py(std::max(yr.lo, 0.0)));
      o << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(bar_w)
        << "\" height=\"" << num(h) << "\" fill=\"" << color(s) << "\"/>\n";
    }
  }
  o << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (std::size_t c = 0; c < data.categories.size(); ++c) {
    o << "<text x=\"" << num(x0 + group_w * (static_cast<double>(c) + 0.5)) << "\" y=\""
      << y0 + 16 << "\" text-anchor=\"middle\">" << escape(data.categories[c]) << "</text>\n";
  }
  o << "</g>\n";
  legend(o, data.series);
  o << "</svg>\n";
  return o.str();
}

}  // namespace macesim::svg

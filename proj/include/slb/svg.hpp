#pragma once

// Minimal deterministic SVG writer for regret curves: one mean polyline per
// policy with a shaded 95% band polygon, fixed palette and formatting.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "slb/errors.hpp"

namespace slb {

struct SummaryRow {
  std::string policy;
  int t = 0;
  double mean = 0.0;
  double stddev = 0.0;
  double ci95_half = 0.0;
};

namespace detail {

inline std::string fmt2(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace detail

inline void emit_plot(const std::vector<SummaryRow>& summary, const std::string& path,
                      const std::string& y_label = "mean cumulative regret") {
  if (summary.empty()) throw InputError("emit_plot: empty summary");

  std::map<std::string, std::vector<SummaryRow>> by_policy;
  double x_max = 1, y_max = 0, y_min = 0;
  for (const auto& row : summary) {
    by_policy[row.policy].push_back(row);
    x_max = std::max(x_max, static_cast<double>(row.t));
    y_max = std::max(y_max, row.mean + row.ci95_half);
    y_min = std::min(y_min, row.mean - row.ci95_half);
  }
  if (y_max <= y_min) y_max = y_min + 1.0;

  const double width = 840, height = 520;
  const double ml = 70, mr = 160, mt = 30, mb = 55;
  const double pw = width - ml - mr, ph = height - mt - mb;
  auto sx = [&](double t) { return ml + pw * (t - 1.0) / std::max(1.0, x_max - 1.0); };
  auto sy = [&](double v) { return mt + ph * (1.0 - (v - y_min) / (y_max - y_min)); };

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  const int palette_size = 8;

  std::ofstream out(path);
  if (!out) throw InputError("emit_plot: cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";

  // axes
  out << "<line x1=\"" << detail::fmt2(ml) << "\" y1=\"" << detail::fmt2(mt + ph) << "\" x2=\""
      << detail::fmt2(ml + pw) << "\" y2=\"" << detail::fmt2(mt + ph)
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << detail::fmt2(ml) << "\" y1=\"" << detail::fmt2(mt) << "\" x2=\""
      << detail::fmt2(ml) << "\" y2=\"" << detail::fmt2(mt + ph) << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    double tv = 1.0 + (x_max - 1.0) * k / 5.0;
    double yv = y_min + (y_max - y_min) * k / 5.0;
    out << "<text x=\"" << detail::fmt2(sx(tv)) << "\" y=\"" << detail::fmt2(mt + ph + 18)
        << "\" font-size=\"11\" text-anchor=\"middle\">" << static_cast<long>(std::lround(tv))
        << "</text>\n";
    out << "<text x=\"" << detail::fmt2(ml - 8) << "\" y=\"" << detail::fmt2(sy(yv) + 4)
        << "\" font-size=\"11\" text-anchor=\"end\">" << detail::fmt2(yv) << "</text>\n";
  }
  out << "<text x=\"" << detail::fmt2(ml + pw / 2) << "\" y=\"" << detail::fmt2(height - 12)
      << "\" font-size=\"13\" text-anchor=\"middle\">round t</text>\n";
  out << "<text x=\"18\" y=\"" << detail::fmt2(mt + ph / 2)
      << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << detail::fmt2(mt + ph / 2) << ")\">" << y_label << "</text>\n";

  int idx = 0;
  for (const auto& [policy, rows_raw] : by_policy) {
    auto rows = rows_raw;
    std::sort(rows.begin(), rows.end(),
              [](const SummaryRow& a, const SummaryRow& b) { return a.t < b.t; });
    const char* color = palette[idx % palette_size];
    // 95% band polygon: upper edge forward, lower edge reversed
    out << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
    for (const auto& r : rows)
      out << detail::fmt2(sx(r.t)) << "," << detail::fmt2(sy(r.mean + r.ci95_half)) << " ";
    for (auto it = rows.rbegin(); it != rows.rend(); ++it)
      out << detail::fmt2(sx(it->t)) << "," << detail::fmt2(sy(it->mean - it->ci95_half)) << " ";
    out << "\"/>\n";
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
    for (const auto& r : rows)
      out << detail::fmt2(sx(r.t)) << "," << detail::fmt2(sy(r.mean)) << " ";
    out << "\"/>\n";
    out << "<rect x=\"" << detail::fmt2(ml + pw + 14) << "\" y=\"" << detail::fmt2(mt + 14 + 22 * idx)
        << "\" width=\"14\" height=\"14\" fill=\"" << color << "\"/>\n";
    out << "<text x=\"" << detail::fmt2(ml + pw + 33) << "\" y=\"" << detail::fmt2(mt + 25 + 22 * idx)
        << "\" font-size=\"12\">" << policy << "</text>\n";
    ++idx;
  }
  out << "</svg>\n";
}

}  // namespace slb

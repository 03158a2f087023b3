// Copyright 2026 The ibcomm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimal SVG line charts.

#pragma once

#include <algorithm>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace ibcomm {

struct SvgSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

inline void write_line_chart(std::ostream& os, const std::string& title,
                             const std::string& x_label, const std::string& y_label,
                             const std::vector<SvgSeries>& series) {
  constexpr double kW = 640, kH = 400, kL = 60, kR = 150, kT = 40, kB = 50;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b"};
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0;
  double y0 = 0.0, y1 = -std::numeric_limits<double>::infinity();
  for (const auto& s : series) {
    for (double v : s.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : s.y) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  if (!(x1 > x0)) x1 = x0 + 1.0;
  if (!(y1 > y0)) y1 = y0 + 1.0;
  auto px = [&](double v) { return kL + (v - x0) / (x1 - x0) * (kW - kL - kR); };
  auto py = [&](double v) { return kH - kB - (v - y0) / (y1 - y0) * (kH - kT - kB); };
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return std::string(buf);
  };

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kW / 2 << "\" y=\"20\" text-anchor=\"middle\">" << title << "</text>\n"
     << "<line x1=\"" << kL << "\" y1=\"" << py(y0) << "\" x2=\"" << kW - kR << "\" y2=\""
     << py(y0) << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << kL << "\" y1=\"" << kT << "\" x2=\"" << kL << "\" y2=\"" << kH - kB
     << "\" stroke=\"black\"/>\n"
     << "<text x=\"" << (kL + kW - kR) / 2 << "\" y=\"" << kH - 10
     << "\" text-anchor=\"middle\">" << x_label << "</text>\n"
     << "<text x=\"15\" y=\"" << kH / 2 << "\" transform=\"rotate(-90 15 " << kH / 2
     << ")\" text-anchor=\"middle\">" << y_label << "</text>\n";
  for (double f : {0.0, 0.5, 1.0}) {
    const double xv = x0 + f * (x1 - x0), yv = y0 + f * (y1 - y0);
    os << "<text x=\"" << px(xv) << "\" y=\"" << kH - kB + 15 << "\" text-anchor=\"middle\">"
       << num(xv) << "</text>\n"
       << "<text x=\"" << kL - 5 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">"
       << num(yv) << "</text>\n";
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kColors[k % 6];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < std::min(series[k].x.size(), series[k].y.size()); ++i) {
      os << (i ? " " : "") << px(series[k].x[i]) << ',' << py(series[k].y[i]);
    }
    os << "\"/>\n"
       << "<text x=\"" << kW - kR + 10 << "\" y=\"" << kT + 18 * static_cast<double>(k) + 10
       << "\" fill=\"" << color << "\">" << series[k].label << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace ibcomm

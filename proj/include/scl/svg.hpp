#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

// Tiny self-contained SVG emitters (no renderer dependency): a line chart for
// similarity/loss curves and a heatmap for stress grids.

namespace scl {

struct SvgSeries {
  std::string label;
  std::vector<std::array<double, 2>> pts;
};

namespace detail {

inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

inline std::string fnum(double v, const char* fmt = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

inline const char* svg_palette(size_t i) {
  static const char* kColors[] = {"#4682b4", "#dc143c", "#2e8b57", "#ff8c00",
                                  "#800080", "#008080", "#a0522d", "#708090"};
  return kColors[i % 8];
}

}  // namespace detail

inline std::string svg_line_chart(const std::string& title, const std::string& x_label,
                                  const std::string& y_label,
                                  const std::vector<SvgSeries>& series, int w = 720, int h = 440) {
  const double ml = 64, mr = 20, mt = 40, mb = 48;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const auto& s : series)
    for (const auto& p : s.pts) {
      if (first) {
        xmin = xmax = p[0];
        ymin = ymax = p[1];
        first = false;
      }
      xmin = std::min(xmin, p[0]);
      xmax = std::max(xmax, p[0]);
      ymin = std::min(ymin, p[1]);
      ymax = std::max(ymax, p[1]);
    }
  if (xmax - xmin < 1e-12) { xmin -= 0.5; xmax += 0.5; }
  if (ymax - ymin < 1e-12) { ymin -= 0.5; ymax += 0.5; }
  double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
  auto py = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" font-family=\"monospace\" font-size=\"12\">\n";
  os << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
     << detail::svg_escape(title) << "</text>\n";
  for (int t = 0; t <= 4; ++t) {
    double xv = xmin + (xmax - xmin) * t / 4.0;
    double yv = ymin + (ymax - ymin) * t / 4.0;
    os << "<line x1=\"" << detail::fnum(px(xv), "%.2f") << "\" y1=\"" << detail::fnum(h - mb, "%.2f")
       << "\" x2=\"" << detail::fnum(px(xv), "%.2f") << "\" y2=\"" << detail::fnum(mt, "%.2f")
       << "\" stroke=\"#e0e0e0\"/>\n";
    os << "<line x1=\"" << detail::fnum(ml, "%.2f") << "\" y1=\"" << detail::fnum(py(yv), "%.2f")
       << "\" x2=\"" << detail::fnum(static_cast<double>(w) - mr, "%.2f") << "\" y2=\""
       << detail::fnum(py(yv), "%.2f") << "\" stroke=\"#e0e0e0\"/>\n";
    os << "<text x=\"" << detail::fnum(px(xv), "%.2f") << "\" y=\"" << h - mb + 16
       << "\" text-anchor=\"middle\">" << detail::fnum(xv, "%.4g") << "</text>\n";
    os << "<text x=\"" << ml - 6 << "\" y=\"" << detail::fnum(py(yv) + 4, "%.2f")
       << "\" text-anchor=\"end\">" << detail::fnum(yv, "%.4g") << "</text>\n";
  }
  os << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\"" << h - mb
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"" << h - 10 << "\" text-anchor=\"middle\">"
     << detail::svg_escape(x_label) << "</text>\n";
  os << "<text x=\"16\" y=\"" << h / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << h / 2 << ")\">" << detail::svg_escape(y_label) << "</text>\n";

  for (size_t si = 0; si < series.size(); ++si) {
    os << "<polyline fill=\"none\" stroke=\"" << detail::svg_palette(si)
       << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : series[si].pts)
      os << detail::fnum(px(p[0]), "%.2f") << ',' << detail::fnum(py(p[1]), "%.2f") << ' ';
    os << "\"/>\n";
    double ly = mt + 16.0 * static_cast<double>(si) + 8;
    os << "<line x1=\"" << w - mr - 120 << "\" y1=\"" << detail::fnum(ly, "%.1f") << "\" x2=\""
       << w - mr - 100 << "\" y2=\"" << detail::fnum(ly, "%.1f") << "\" stroke=\""
       << detail::svg_palette(si) << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << w - mr - 96 << "\" y=\"" << detail::fnum(ly + 4, "%.1f") << "\">"
       << detail::svg_escape(series[si].label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline std::string svg_heatmap(const std::string& title, const std::vector<std::string>& row_labels,
                               const std::vector<std::string>& col_labels,
                               const std::vector<std::vector<double>>& values, int cell_w = 110,
                               int cell_h = 48) {
  const size_t nr = row_labels.size(), nc = col_labels.size();
  const int ml = 120, mt = 64;
  const int w = ml + static_cast<int>(nc) * cell_w + 20;
  const int h = mt + static_cast<int>(nr) * cell_h + 20;
  double vmin = 0, vmax = 1;
  bool first = true;
  for (const auto& row : values)
    for (double v : row) {
      if (first) { vmin = vmax = v; first = false; }
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
  if (vmax - vmin < 1e-12) vmax = vmin + 1;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" font-family=\"monospace\" font-size=\"12\">\n";
  os << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">"
     << detail::svg_escape(title) << "</text>\n";
  for (size_t c = 0; c < nc; ++c)
    os << "<text x=\"" << ml + static_cast<int>(c) * cell_w + cell_w / 2 << "\" y=\"" << mt - 8
       << "\" text-anchor=\"middle\">" << detail::svg_escape(col_labels[c]) << "</text>\n";
  for (size_t r = 0; r < nr; ++r) {
    os << "<text x=\"" << ml - 8 << "\" y=\"" << mt + static_cast<int>(r) * cell_h + cell_h / 2 + 4
       << "\" text-anchor=\"end\">" << detail::svg_escape(row_labels[r]) << "</text>\n";
    for (size_t c = 0; c < nc; ++c) {
      double v = values[r][c];
      double t = (v - vmin) / (vmax - vmin);
      int rr = static_cast<int>(255 - t * (255 - 70));
      int gg = static_cast<int>(255 - t * (255 - 130));
      int bb = static_cast<int>(255 - t * (255 - 180));
      char fill[16];
      std::snprintf(fill, sizeof(fill), "#%02x%02x%02x", rr, gg, bb);
      int x = ml + static_cast<int>(c) * cell_w, y = mt + static_cast<int>(r) * cell_h;
      os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell_w << "\" height=\""
         << cell_h << "\" fill=\"" << fill << "\" stroke=\"#999\"/>\n";
      os << "<text x=\"" << x + cell_w / 2 << "\" y=\"" << y + cell_h / 2 + 4
         << "\" text-anchor=\"middle\" fill=\"" << (t > 0.6 ? "white" : "black") << "\">"
         << detail::fnum(v, "%.4g") << "</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace scl

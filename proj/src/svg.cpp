#include "areapo/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace areapo::svg {
namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void line_chart(std::ostream& out, const std::string& title, const std::vector<double>& x,
                const std::string& x_label, const std::vector<Panel>& panels) {
  const double width = 800, panel_h = 200, left = 70, right = 140, top = 40, gap = 40;
  const double height = top + panels.size() * (panel_h + gap) + 20;
  const double plot_w = width - left - right;
  double x_min = x.empty() ? 0.0 : *std::min_element(x.begin(), x.end());
  double x_max = x.empty() ? 1.0 : *std::max_element(x.begin(), x.end());
  if (x_max <= x_min) x_max = x_min + 1.0;

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << num(width / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
      << "</text>\n";

  for (std::size_t p = 0; p < panels.size(); ++p) {
    const Panel& panel = panels[p];
    const double y0 = top + p * (panel_h + gap);
    double lo = 0.0, hi = 0.0;
    bool any = false;
    for (const auto& s : panel.series)
      for (double v : s.y) {
        if (!std::isfinite(v)) continue;
        lo = any ? std::min(lo, v) : v;
        hi = any ? std::max(hi, v) : v;
        any = true;
      }
    if (!any || hi <= lo) {
      lo -= 1.0;
      hi += 1.0;
    }
    const auto sx = [&](double v) { return left + (v - x_min) / (x_max - x_min) * plot_w; };
    const auto sy = [&](double v) { return y0 + panel_h - (v - lo) / (hi - lo) * panel_h; };

    out << "<rect x=\"" << num(left) << "\" y=\"" << num(y0) << "\" width=\"" << num(plot_w) << "\" height=\""
        << num(panel_h) << "\" fill=\"none\" stroke=\"#444\"/>\n";
    out << "<text x=\"" << num(left + plot_w / 2) << "\" y=\"" << num(y0 - 6) << "\" text-anchor=\"middle\">"
        << escape(panel.title) << "</text>\n";
    out << "<text x=\"14\" y=\"" << num(y0 + panel_h / 2) << "\" transform=\"rotate(-90 14 " << num(y0 + panel_h / 2)
        << ")\" text-anchor=\"middle\">" << escape(panel.y_label) << "</text>\n";
    for (int k = 0; k <= 4; ++k) {
      const double v = lo + (hi - lo) * k / 4.0;
      out << "<text x=\"" << num(left - 6) << "\" y=\"" << num(sy(v) + 4) << "\" text-anchor=\"end\">" << tick(v)
          << "</text>\n";
      const double xv = x_min + (x_max - x_min) * k / 4.0;
      out << "<text x=\"" << num(sx(xv)) << "\" y=\"" << num(y0 + panel_h + 14) << "\" text-anchor=\"middle\">"
          << tick(xv) << "</text>\n";
    }
    for (std::size_t si = 0; si < panel.series.size(); ++si) {
      const auto& s = panel.series[si];
      const char* color = kPalette[si % std::size(kPalette)];
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      const std::size_t n = std::min(s.y.size(), x.size());
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(s.y[i])) continue;
        out << num(sx(x[i])) << ',' << num(sy(s.y[i])) << ' ';
      }
      out << "\"/>\n";
      out << "<text x=\"" << num(left + plot_w + 10) << "\" y=\"" << num(y0 + 16 + 16 * si) << "\" fill=\"" << color
          << "\">" << escape(s.label) << "</text>\n";
    }
  }
  out << "<text x=\"" << num(left + plot_w / 2) << "\" y=\"" << num(height - 6) << "\" text-anchor=\"middle\">"
      << escape(x_label) << "</text>\n";
  out << "</svg>\n";
}

void percent_bar_chart(std::ostream& out, const std::string& title, const std::vector<std::string>& labels,
                       const std::vector<double>& fractions) {
  const double width = 720, height = 360, left = 60, bottom = 90, top = 40, right = 20;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << num(width / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
      << "</text>\n";
  // The axis always spans 0..100 %.
  for (int k = 0; k <= 4; ++k) {
    const double y = top + plot_h - plot_h * k / 4.0;
    out << "<line x1=\"" << num(left) << "\" y1=\"" << num(y) << "\" x2=\"" << num(left + plot_w) << "\" y2=\""
        << num(y) << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << num(left - 6) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">" << 25 * k
        << "%</text>\n";
  }
  out << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(plot_w) << "\" height=\""
      << num(plot_h) << "\" fill=\"none\" stroke=\"#444\" data-axis-max=\"100\"/>\n";
  const std::size_t n = std::min(labels.size(), fractions.size());
  const double slot = n ? plot_w / n : plot_w;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = std::clamp(std::isfinite(fractions[i]) ? fractions[i] : 0.0, 0.0, 1.0);
    const double h = f * plot_h;
    const double x = left + i * slot + slot * 0.15;
    out << "<rect x=\"" << num(x) << "\" y=\"" << num(top + plot_h - h) << "\" width=\"" << num(slot * 0.7)
        << "\" height=\"" << num(h) << "\" fill=\"" << kPalette[i % std::size(kPalette)] << "\"/>\n";
    out << "<text x=\"" << num(x + slot * 0.35) << "\" y=\"" << num(top + plot_h - h - 4)
        << "\" text-anchor=\"middle\">" << num(100.0 * f) << "</text>\n";
    const double lx = x + slot * 0.35, ly = top + plot_h + 14;
    out << "<text x=\"" << num(lx) << "\" y=\"" << num(ly) << "\" text-anchor=\"end\" transform=\"rotate(-30 "
        << num(lx) << ' ' << num(ly) << ")\">" << escape(labels[i]) << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace areapo::svg

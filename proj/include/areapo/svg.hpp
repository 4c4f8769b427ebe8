#pragma once

// Minimal fixed-layout SVG rendering: stacked polyline panels and a
// percentage bar chart. Output depends only on the inputs.

#include <iosfwd>
#include <string>
#include <vector>

namespace areapo::svg {

struct Series {
  std::string label;
  std::vector<double> y;
};

struct Panel {
  std::string title;
  std::string y_label;
  std::vector<Series> series;
};

/// Panels stacked vertically over a shared x axis.
void line_chart(std::ostream& out, const std::string& title, const std::vector<double>& x,
                const std::string& x_label, const std::vector<Panel>& panels);

/// Bars for values in [0, 1], drawn on a fixed 0..100 % axis.
void percent_bar_chart(std::ostream& out, const std::string& title, const std::vector<std::string>& labels,
                       const std::vector<double>& fractions);

}  // namespace areapo::svg

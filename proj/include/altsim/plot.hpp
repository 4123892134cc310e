// SPDX-License-Identifier: Apache-2.0
//
// Minimal static SVG line charts for loss curves and error-vs-horizon plots.

#pragma once

#include <string>
#include <vector>

namespace altsim {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<PlotSeries>& series);

}  // namespace altsim

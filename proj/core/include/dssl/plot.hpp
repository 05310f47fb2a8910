#pragma once

#include <string>
#include <vector>

#include "dssl/image.hpp"

namespace dssl::plot {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Minimal line plot (axes, ticks, bitmap-font labels) written as a PNG.
// Enough for accuracy-vs-parameter ablation figures.
void write_line_plot(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<Series>& series, int width = 640,
                     int height = 480);

}  // namespace dssl::plot

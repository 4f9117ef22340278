#pragma once

#include <string>
#include <vector>

#include "salrank/image_io.hpp"

namespace salrank::plot {

/// RGB line chart with points placed at evenly spaced x slots, light grid
/// lines at the y ticks and a marker on every point. No text is drawn.
Image8 line_plot(const std::vector<double>& y, int width = 480, int height = 320);

}  // namespace salrank::plot

#include "salrank/plot.hpp"

#include <algorithm>
#include <cmath>

namespace salrank::plot {

namespace {

struct Canvas {
  Image8 img;

  void put(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    auto* p = &img.pixels[(static_cast<std::size_t>(y) * img.width + x) * 3];
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }

  void line(int x0, int y0, int x1, int y1, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
      put(x0, y0, r, g, b);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }
};

}  // namespace

Image8 line_plot(const std::vector<double>& y, int width, int height) {
  Canvas c{{width, height, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height * 3, 255)}};
  const int left = 40, right = width - 20, top = 20, bottom = height - 30;

  double lo = 0.0, hi = 1.0;
  if (!y.empty()) {
    lo = *std::min_element(y.begin(), y.end());
    hi = *std::max_element(y.begin(), y.end());
  }
  if (hi - lo < 1e-9) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.1 * (hi - lo);
  lo -= pad;
  hi += pad;

  for (int i = 0; i <= 4; ++i) {
    const int gy = bottom - (bottom - top) * i / 4;
    c.line(left, gy, right, gy, 225, 225, 225);
  }
  c.line(left, top, left, bottom, 0, 0, 0);
  c.line(left, bottom, right, bottom, 0, 0, 0);

  auto px = [&](std::size_t i) {
    return y.size() < 2 ? (left + right) / 2
                        : left + 10 + static_cast<int>((right - left - 20) * static_cast<double>(i) / (y.size() - 1));
  };
  auto py = [&](double v) { return bottom - static_cast<int>(std::lround((bottom - top) * (v - lo) / (hi - lo))); };
  for (std::size_t i = 0; i < y.size(); ++i) c.line(px(i), bottom, px(i), bottom + 5, 0, 0, 0);
  for (std::size_t i = 1; i < y.size(); ++i) {
    for (int t = -1; t <= 1; ++t) c.line(px(i - 1), py(y[i - 1]) + t, px(i), py(y[i]) + t, 31, 119, 180);
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (int dy = -3; dy <= 3; ++dy)
      for (int dx = -3; dx <= 3; ++dx) {
        if (dx * dx + dy * dy <= 9) c.put(px(i) + dx, py(y[i]) + dy, 214, 39, 40);
      }
  }
  return c.img;
}

}  // namespace salrank::plot

#include "salrank/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace salrank {

namespace {

void check_dims(int width, int height) {
  if (width < 1 || height < 1) {
    std::ostringstream os;
    os << "map dimensions must be positive, got " << width << "x" << height;
    throw DimensionError(os.str());
  }
}

}  // namespace

GrayscaleMap::GrayscaleMap(int width, int height, double fill)
    : width_(width), height_(height) {
  check_dims(width, height);
  if (!std::isfinite(fill) || fill < 0.0) throw DomainError("map fill must be finite and >= 0");
  values_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

GrayscaleMap::GrayscaleMap(int width, int height, std::vector<double> values)
    : width_(width), height_(height), values_(std::move(values)) {
  check_dims(width, height);
  if (values_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw DimensionError("value count does not match map dimensions");
  }
  for (double v : values_) {
    if (!std::isfinite(v) || v < 0.0) throw DomainError("map values must be finite and >= 0");
  }
}

double GrayscaleMap::max_value() const {
  return values_.empty() ? 0.0 : *std::max_element(values_.begin(), values_.end());
}

double GrayscaleMap::sum() const {
  return std::accumulate(values_.begin(), values_.end(), 0.0);
}

FixationMap::FixationMap(GrayscaleMap base) : base_(std::move(base)) {
  for (double v : base_.values()) {
    if (v != 0.0 && v != 1.0) throw DomainError("fixation map values must be 0 or 1");
    if (v > 0.0) ++count_;
  }
}

FixationMap FixationMap::from_nonzero(const GrayscaleMap& map) {
  std::vector<double> bin(map.size());
  std::transform(map.values().begin(), map.values().end(), bin.begin(),
                 [](double v) { return v > 0.0 ? 1.0 : 0.0; });
  return FixationMap(GrayscaleMap(map.width(), map.height(), std::move(bin)));
}

BoundingBox BoundingBox::clipped(int width, int height) const {
  BoundingBox b{std::clamp(x0, 0, width), std::clamp(y0, 0, height), std::clamp(x1, 0, width),
                std::clamp(y1, 0, height)};
  if (b.x1 < b.x0) b.x1 = b.x0;
  if (b.y1 < b.y0) b.y1 = b.y0;
  return b;
}

BoundingBox clip_box_or_throw(const BoundingBox& box, int width, int height) {
  BoundingBox b = box.clipped(width, height);
  if (b.area() < 1) {
    std::ostringstream os;
    os << "box [" << box.x0 << "," << box.y0 << "," << box.x1 << "," << box.y1
       << ") has no area inside a " << width << "x" << height << " frame";
    throw DimensionError(os.str());
  }
  return b;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  BoundingBox inter{std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1),
                    std::min(a.y1, b.y1)};
  const double i = static_cast<double>(inter.area());
  const double u = static_cast<double>(a.area() + b.area()) - i;
  return u > 0.0 ? i / u : 0.0;
}

bool FeatureTensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

void VideoClip::validate() const {
  const std::size_t n = frames.size();
  if (n == 0) throw IncompleteInputError("clip '" + id + "' has no frames");
  if (fixations.size() != n || saliency.size() != n || annotations.size() != n) {
    throw IncompleteInputError("clip '" + id + "' has per-frame lists of different lengths");
  }
  const int w = width();
  const int h = height();
  for (std::size_t i = 0; i < n; ++i) {
    if (frames[i].image.channels != 3) throw DimensionError("frames must have 3 channels");
    if (frames[i].width() != w || frames[i].height() != h || fixations[i].width() != w ||
        fixations[i].height() != h || saliency[i].width() != w || saliency[i].height() != h) {
      throw DimensionError("clip '" + id + "' has inconsistent frame dimensions");
    }
  }
}

std::size_t count_fixations_in_box(const BoundingBox& box, const FixationMap& fix) {
  if (!box.valid_for(fix.width(), fix.height())) {
    throw DimensionError("box lies outside the fixation map");
  }
  std::size_t count = 0;
  for (int y = box.y0; y < box.y1; ++y) {
    for (int x = box.x0; x < box.x1; ++x) {
      if (fix.fixated(x, y)) ++count;
    }
  }
  return count;
}

GrayscaleMap minmax_scale_to_255(const GrayscaleMap& map) {
  const double peak = map.max_value();
  if (peak <= 0.0) return map;
  return scale_values(map, 255.0 / peak);
}

GrayscaleMap scale_values(const GrayscaleMap& map, double factor) {
  std::vector<double> out(map.values().begin(), map.values().end());
  for (double& v : out) v *= factor;
  return GrayscaleMap(map.width(), map.height(), std::move(out));
}

GrayscaleMap quantize_unit(const GrayscaleMap& map) {
  std::vector<double> out(map.size());
  std::transform(map.values().begin(), map.values().end(), out.begin(), [](double v) {
    return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  });
  return GrayscaleMap(map.width(), map.height(), std::move(out));
}

GrayscaleMap resize_nearest(const GrayscaleMap& map, int width, int height) {
  check_dims(width, height);
  if (width == map.width() && height == map.height()) return map;
  std::vector<double> out(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(map.height() - 1, static_cast<int>((y + 0.5) * map.height() / height));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(map.width() - 1, static_cast<int>((x + 0.5) * map.width() / width));
      out[static_cast<std::size_t>(y) * width + x] = map.at(sx, sy);
    }
  }
  return GrayscaleMap(width, height, std::move(out));
}

FeatureTensor pointwise_product_concat(const GrayscaleMap& rank_map,
                                       const FeatureTensor& features) {
  if (rank_map.width() != features.width || rank_map.height() != features.height) {
    std::ostringstream os;
    os << "ranking map " << rank_map.width() << "x" << rank_map.height()
       << " does not match feature grid " << features.width << "x" << features.height;
    throw DimensionError(os.str());
  }
  FeatureTensor out(features.channels + 1, features.height, features.width);
  const auto r = rank_map.values();
  for (int c = 0; c < features.channels; ++c) {
    auto src = features.channel(c);
    auto dst = out.channel(c);
    for (std::size_t i = 0; i < r.size(); ++i) dst[i] = src[i] * r[i];
  }
  std::copy(r.begin(), r.end(), out.channel(features.channels).begin());
  return out;
}

}  // namespace salrank

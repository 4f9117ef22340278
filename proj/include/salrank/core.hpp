#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace salrank {

// Error hierarchy. Every failure surfaced by the library derives from Error so
// the CLI can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

class IncompleteInputError : public Error {
 public:
  using Error::Error;
};

class SpecError : public Error {
 public:
  using Error::Error;
};

class NumericDivergenceError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string raw)
      : Error(what), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// W x H grid of finite, nonnegative reals stored row-major. Saliency,
/// fixation and ranking maps all share this carrier.
class GrayscaleMap {
 public:
  GrayscaleMap() = default;
  GrayscaleMap(int width, int height, double fill = 0.0);
  GrayscaleMap(int width, int height, std::vector<double> values);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double at(int x, int y) const { return values_[index(x, y)]; }
  std::span<const double> values() const { return values_; }

  double max_value() const;
  double sum() const;

  bool operator==(const GrayscaleMap&) const = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
};

/// Binary presence map of gaze points.
class FixationMap {
 public:
  FixationMap() = default;
  /// Requires every value to be exactly 0 or 1.
  explicit FixationMap(GrayscaleMap base);
  /// Any strictly positive pixel becomes a fixation.
  static FixationMap from_nonzero(const GrayscaleMap& map);

  const GrayscaleMap& base() const { return base_; }
  int width() const { return base_.width(); }
  int height() const { return base_.height(); }
  bool fixated(int x, int y) const { return base_.at(x, y) > 0.0; }
  std::size_t count() const { return count_; }

  bool operator==(const FixationMap&) const = default;

 private:
  GrayscaleMap base_;
  std::size_t count_ = 0;
};

/// Half-open pixel rectangle [x0,x1) x [y0,y1).
struct BoundingBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int box_width() const { return x1 - x0; }
  int box_height() const { return y1 - y0; }
  long long area() const {
    return x1 > x0 && y1 > y0 ? static_cast<long long>(x1 - x0) * (y1 - y0) : 0;
  }
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  bool valid_for(int width, int height) const {
    return 0 <= x0 && x0 < x1 && x1 <= width && 0 <= y0 && y0 < y1 && y1 <= height;
  }
  /// Intersection with the frame; may have zero area.
  BoundingBox clipped(int width, int height) const;

  bool operator==(const BoundingBox&) const = default;
};

/// Clips to the frame and throws DimensionError if nothing is left.
BoundingBox clip_box_or_throw(const BoundingBox& box, int width, int height);

double iou(const BoundingBox& a, const BoundingBox& b);

/// channels x height x width real grid, channel-major then row-major.
struct FeatureTensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  FeatureTensor() = default;
  FeatureTensor(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  double& at(int c, int y, int x) {
    return data[static_cast<std::size_t>(c) * plane() + static_cast<std::size_t>(y) * width + x];
  }
  double at(int c, int y, int x) const {
    return data[static_cast<std::size_t>(c) * plane() + static_cast<std::size_t>(y) * width + x];
  }
  std::span<double> channel(int c) {
    return {data.data() + static_cast<std::size_t>(c) * plane(), plane()};
  }
  std::span<const double> channel(int c) const {
    return {data.data() + static_cast<std::size_t>(c) * plane(), plane()};
  }
  bool same_shape(const FeatureTensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  bool all_finite() const;

  bool operator==(const FeatureTensor&) const = default;
};

/// One RGB frame with values in [0,1].
struct Frame {
  FeatureTensor image;
  int index = 0;

  int width() const { return image.width; }
  int height() const { return image.height; }
};

struct Annotation {
  std::string tag;
  BoundingBox box;

  bool operator==(const Annotation&) const = default;
};

struct VideoClip {
  std::string id;
  std::vector<Frame> frames;
  std::vector<FixationMap> fixations;
  std::vector<GrayscaleMap> saliency;
  std::vector<std::vector<Annotation>> annotations;

  std::size_t length() const { return frames.size(); }
  int width() const { return frames.empty() ? 0 : frames.front().width(); }
  int height() const { return frames.empty() ? 0 : frames.front().height(); }
  std::size_t middle_frame() const { return frames.size() / 2; }

  /// Throws DimensionError / IncompleteInputError when per-frame lists
  /// disagree in length or spatial size.
  void validate() const;
};

std::size_t count_fixations_in_box(const BoundingBox& box, const FixationMap& fix);

/// 255 * v / max(v); an all-zero map is returned unchanged.
GrayscaleMap minmax_scale_to_255(const GrayscaleMap& map);

/// Multiplies every value; used to move between the unit and byte ranges.
GrayscaleMap scale_values(const GrayscaleMap& map, double factor);

/// Rounds each value to the nearest multiple of 1/255 (8-bit storage).
GrayscaleMap quantize_unit(const GrayscaleMap& map);

GrayscaleMap resize_nearest(const GrayscaleMap& map, int width, int height);

/// Position-wise product and concatenation: channels [0, C) hold
/// features * rank_map, channel C holds rank_map itself.
FeatureTensor pointwise_product_concat(const GrayscaleMap& rank_map,
                                       const FeatureTensor& features);

}  // namespace salrank

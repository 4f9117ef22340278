#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "salrank/core.hpp"

namespace salrank::metrics {

/// Pearson correlation over all pixels. Throws UndefinedMetricError when
/// either map is constant.
double cc(const GrayscaleMap& pred, const GrayscaleMap& gt);

/// Mean z-score of pred at fixated pixels, population standard deviation.
double nss(const GrayscaleMap& pred, const FixationMap& fix);

/// Histogram intersection of the two maps after normalizing each to unit mass.
double sim(const GrayscaleMap& pred, const GrayscaleMap& gt);

/// Judd ROC area. Thresholds are the predicted values at fixated pixels,
/// negatives are every non-fixated pixel.
double auc_judd(const GrayscaleMap& pred, const FixationMap& fix);

/// Spearman rho with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);
double spearman(std::span<const int> a, std::span<const int> b);

struct FrameMetrics {
  std::string frame;
  std::optional<double> auc_j;
  std::optional<double> cc;
  std::optional<double> sim;
  std::optional<double> nss;
};

/// Evaluates all four metrics; a metric whose preconditions fail is left empty
/// instead of aborting the frame.
FrameMetrics evaluate_frame(std::string frame, const GrayscaleMap& pred,
                            const GrayscaleMap& gt_saliency, const FixationMap& fix);

struct MetricReport {
  std::vector<FrameMetrics> frames;

  /// Mean over frames where each metric is defined, summed in frame order.
  FrameMetrics mean() const;
  /// Header `frame,auc_j,cc,sim,nss`, one row per frame, then a `mean` row.
  std::string to_csv() const;
};

std::string format_metric(const std::optional<double>& v);

}  // namespace salrank::metrics

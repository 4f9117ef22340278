#pragma once

#include <vector>

#include "salrank/core.hpp"

namespace salrank::diffusion {

/// Per-step betas and cumulative products alpha_bar[0..T], alpha_bar[0] = 1.
class NoiseSchedule {
 public:
  /// Linear betas from beta_start to beta_end over T steps.
  static NoiseSchedule linear(int steps, double beta_start, double beta_end);
  explicit NoiseSchedule(std::vector<double> betas);

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const { return betas_.at(static_cast<std::size_t>(t - 1)); }
  double alpha_bar(int t) const { return alpha_bars_.at(static_cast<std::size_t>(t)); }
  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }

  double beta_start() const { return betas_.front(); }
  double beta_end() const { return betas_.back(); }

 private:
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

/// Maps a unit-range saliency map into the symmetric diffusion domain [-1,1].
FeatureTensor to_signed(const GrayscaleMap& map);
/// Inverse of to_signed, clamped to [0,1].
GrayscaleMap from_signed(const FeatureTensor& x);

/// sqrt(ab_t) * m0 + sqrt(1 - ab_t) * noise.
FeatureTensor forward_sample(const FeatureTensor& m0, int t, const FeatureTensor& noise,
                             const NoiseSchedule& sched);

/// Deterministic reverse step given a clean-signal estimate: recovers the
/// implied noise, then re-noises x0_hat to level t-1.
FeatureTensor reverse_step(const FeatureTensor& mt, int t, const FeatureTensor& x0_hat,
                           const NoiseSchedule& sched);

}  // namespace salrank::diffusion

#include "salrank/diffusion/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace salrank::diffusion {

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw DomainError("schedule needs at least one step");
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 1.0 : static_cast<double>(i) / (steps - 1);
    betas[static_cast<std::size_t>(i)] = beta_start + (beta_end - beta_start) * frac;
  }
  return NoiseSchedule(std::move(betas));
}

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
  if (betas_.empty()) throw DomainError("schedule needs at least one step");
  alpha_bars_.reserve(betas_.size() + 1);
  alpha_bars_.push_back(1.0);
  for (double b : betas_) {
    if (!(b > 0.0 && b < 1.0)) throw DomainError("betas must lie in (0,1)");
    alpha_bars_.push_back(alpha_bars_.back() * (1.0 - b));
  }
  const double last = alpha_bars_.back();
  if (!(last > 0.0 && last < 0.05)) {
    std::ostringstream os;
    os << "final alpha_bar " << last << " outside (0, 0.05); the chain does not reach noise";
    throw DomainError(os.str());
  }
}

FeatureTensor to_signed(const GrayscaleMap& map) {
  FeatureTensor out(1, map.height(), map.width());
  std::transform(map.values().begin(), map.values().end(), out.data.begin(),
                 [](double v) { return 2.0 * v - 1.0; });
  return out;
}

GrayscaleMap from_signed(const FeatureTensor& x) {
  if (x.channels != 1) throw DimensionError("from_signed expects a single channel");
  std::vector<double> values(x.data.size());
  std::transform(x.data.begin(), x.data.end(), values.begin(),
                 [](double v) { return std::clamp(0.5 * (v + 1.0), 0.0, 1.0); });
  return GrayscaleMap(x.width, x.height, std::move(values));
}

FeatureTensor forward_sample(const FeatureTensor& m0, int t, const FeatureTensor& noise,
                             const NoiseSchedule& sched) {
  if (t < 0 || t > sched.steps()) throw DomainError("diffusion step out of range");
  if (!m0.same_shape(noise)) throw DimensionError("noise shape differs from m0");
  const double a = std::sqrt(sched.alpha_bar(t));
  const double b = std::sqrt(1.0 - sched.alpha_bar(t));
  FeatureTensor out(m0.channels, m0.height, m0.width);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a * m0.data[i] + b * noise.data[i];
  return out;
}

FeatureTensor reverse_step(const FeatureTensor& mt, int t, const FeatureTensor& x0_hat,
                           const NoiseSchedule& sched) {
  if (t < 1 || t > sched.steps()) throw DomainError("reverse step needs 1 <= t <= T");
  if (!mt.same_shape(x0_hat)) throw DimensionError("x0 estimate shape differs from m_t");
  const double ab_t = sched.alpha_bar(t);
  const double ab_prev = sched.alpha_bar(t - 1);
  const double sa_t = std::sqrt(ab_t);
  const double sn_t = std::sqrt(1.0 - ab_t);
  const double sa_prev = std::sqrt(ab_prev);
  const double sn_prev = std::sqrt(1.0 - ab_prev);
  FeatureTensor out(mt.channels, mt.height, mt.width);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double eps = (mt.data[i] - sa_t * x0_hat.data[i]) / sn_t;
    out.data[i] = sa_prev * x0_hat.data[i] + sn_prev * eps;
  }
  return out;
}

}  // namespace salrank::diffusion

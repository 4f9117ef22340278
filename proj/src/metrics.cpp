#include "salrank/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace salrank::metrics {

namespace {

void require_same_shape(const GrayscaleMap& a, const GrayscaleMap& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw DimensionError("metric inputs differ in size");
  }
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Population standard deviation.
double stddev_of(std::span<const double> v, double mean) {
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const double ma = mean_of(a);
  const double mb = mean_of(b);
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw UndefinedMetricError("correlation of a constant sequence");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

template <typename F>
std::optional<double> guarded(F&& f) {
  try {
    return f();
  } catch (const UndefinedMetricError&) {
    return std::nullopt;
  }
}

}  // namespace

double cc(const GrayscaleMap& pred, const GrayscaleMap& gt) {
  require_same_shape(pred, gt);
  return pearson(pred.values(), gt.values());
}

double nss(const GrayscaleMap& pred, const FixationMap& fix) {
  require_same_shape(pred, fix.base());
  if (fix.count() == 0) throw UndefinedMetricError("NSS needs at least one fixation");
  const auto p = pred.values();
  const double mu = mean_of(p);
  const double sigma = stddev_of(p, mu);
  if (sigma == 0.0) throw UndefinedMetricError("NSS of a constant prediction");
  const auto f = fix.base().values();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (f[i] > 0.0) acc += (p[i] - mu) / sigma;
  }
  return acc / static_cast<double>(fix.count());
}

double sim(const GrayscaleMap& pred, const GrayscaleMap& gt) {
  require_same_shape(pred, gt);
  const double mp = pred.sum();
  const double mg = gt.sum();
  if (mp <= 0.0 || mg <= 0.0) throw UndefinedMetricError("SIM needs positive mass in both maps");
  const auto p = pred.values();
  const auto g = gt.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::min(p[i] / mp, g[i] / mg);
  return std::clamp(acc, 0.0, 1.0);
}

double auc_judd(const GrayscaleMap& pred, const FixationMap& fix) {
  require_same_shape(pred, fix.base());
  const std::size_t n = pred.size();
  const std::size_t n_pos = fix.count();
  if (n_pos == 0) throw UndefinedMetricError("AUC-J needs at least one fixation");
  if (n_pos == n) throw UndefinedMetricError("AUC-J needs at least one non-fixated pixel");
  const std::size_t n_neg = n - n_pos;
  const auto p = pred.values();
  const auto f = fix.base().values();

  std::vector<double> pos;
  std::vector<double> neg;
  pos.reserve(n_pos);
  neg.reserve(n_neg);
  for (std::size_t i = 0; i < n; ++i) (f[i] > 0.0 ? pos : neg).push_back(p[i]);
  std::sort(pos.begin(), pos.end(), std::greater<>());
  std::sort(neg.begin(), neg.end(), std::greater<>());

  // Walk distinct fixation values from high to low; counts of values >= the
  // threshold advance monotonically in both sorted lists.
  double area = 0.0;
  double prev_tpr = 0.0;
  double prev_fpr = 0.0;
  std::size_t ip = 0;
  std::size_t in = 0;
  while (ip < pos.size()) {
    const double thr = pos[ip];
    while (ip < pos.size() && pos[ip] >= thr) ++ip;
    while (in < neg.size() && neg[in] >= thr) ++in;
    const double tpr = static_cast<double>(ip) / static_cast<double>(n_pos);
    const double fpr = static_cast<double>(in) / static_cast<double>(n_neg);
    area += 0.5 * (fpr - prev_fpr) * (tpr + prev_tpr);
    prev_tpr = tpr;
    prev_fpr = fpr;
  }
  area += 0.5 * (1.0 - prev_fpr) * (1.0 + prev_tpr);
  return std::clamp(area, 0.0, 1.0);
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("spearman inputs differ in length");
  if (a.size() < 2) throw UndefinedMetricError("spearman needs at least two items");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb);
}

double spearman(std::span<const int> a, std::span<const int> b) {
  std::vector<double> da(a.begin(), a.end());
  std::vector<double> db(b.begin(), b.end());
  return spearman(std::span<const double>(da), std::span<const double>(db));
}

FrameMetrics evaluate_frame(std::string frame, const GrayscaleMap& pred,
                            const GrayscaleMap& gt_saliency, const FixationMap& fix) {
  FrameMetrics m;
  m.frame = std::move(frame);
  m.auc_j = guarded([&] { return auc_judd(pred, fix); });
  m.cc = guarded([&] { return cc(pred, gt_saliency); });
  m.sim = guarded([&] { return sim(pred, gt_saliency); });
  m.nss = guarded([&] { return nss(pred, fix); });
  return m;
}

FrameMetrics MetricReport::mean() const {
  FrameMetrics out;
  out.frame = "mean";
  auto avg = [&](std::optional<double> FrameMetrics::*field) -> std::optional<double> {
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& f : frames) {
      if (const auto& v = f.*field) {
        acc += *v;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return acc / static_cast<double>(n);
  };
  out.auc_j = avg(&FrameMetrics::auc_j);
  out.cc = avg(&FrameMetrics::cc);
  out.sim = avg(&FrameMetrics::sim);
  out.nss = avg(&FrameMetrics::nss);
  return out;
}

std::string format_metric(const std::optional<double>& v) {
  if (!v) return "undefined";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9f", *v);
  return buf;
}

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  os << "frame,auc_j,cc,sim,nss\n";
  auto row = [&](const FrameMetrics& f) {
    os << f.frame << ',' << format_metric(f.auc_j) << ',' << format_metric(f.cc) << ','
       << format_metric(f.sim) << ',' << format_metric(f.nss) << '\n';
  };
  for (const auto& f : frames) row(f);
  row(mean());
  return os.str();
}

}  // namespace salrank::metrics

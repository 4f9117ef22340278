#include "salrank/rankmap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

namespace salrank::rankmap {

void PredictedRanking::validate() const {
  if (boxes.size() != objects.size()) throw DimensionError("ranking boxes and objects differ in length");
  std::vector<int> ranks;
  ranks.reserve(objects.size());
  for (const auto& o : objects) ranks.push_back(o.rank);
  std::sort(ranks.begin(), ranks.end());
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (ranks[i] != static_cast<int>(i) + 1) throw DomainError("ranks must be exactly 1..m");
  }
}

double rstar(int rank, int m) {
  if (m < 1 || rank < 1 || rank > m) {
    throw DomainError("rank " + std::to_string(rank) + " outside 1.." + std::to_string(m));
  }
  if (m == 1) return 1.0;
  return 1.0 - static_cast<double>(rank - 1) / static_cast<double>(m - 1);
}

GrayscaleMap predicted_ranking_map(const PredictedRanking& pr, int width, int height) {
  pr.validate();
  const int m = static_cast<int>(pr.m());
  std::vector<double> acc(static_cast<std::size_t>(width) * height, 0.0);
  for (std::size_t i = 0; i < pr.objects.size(); ++i) {
    if (!pr.boxes[i]) continue;
    const BoundingBox& b = *pr.boxes[i];
    if (!b.valid_for(width, height)) throw DimensionError("predicted box outside frame");
    const double v = rstar(pr.objects[i].rank, m);
    for (int y = b.y0; y < b.y1; ++y) {
      for (int x = b.x0; x < b.x1; ++x) acc[static_cast<std::size_t>(y) * width + x] += v;
    }
  }
  for (double& v : acc) v = std::min(v, 1.0);
  return GrayscaleMap(width, height, std::move(acc));
}

PredictedRanking random_ranking(std::mt19937_64 rng, int n_boxes, int width, int height,
                                const std::vector<std::string>& tags) {
  if (n_boxes < 1) throw DomainError("random_ranking needs at least one box");
  if (!tags.empty() && static_cast<int>(tags.size()) != n_boxes) {
    throw DimensionError("tag count does not match n_boxes");
  }
  const double frame_area = static_cast<double>(width) * height;
  const auto min_area = std::max<long long>(1, static_cast<long long>(std::ceil(0.01 * frame_area)));
  std::uniform_int_distribution<int> ux(0, width);
  std::uniform_int_distribution<int> uy(0, height);

  PredictedRanking pr;
  std::vector<int> ranks(static_cast<std::size_t>(n_boxes));
  std::iota(ranks.begin(), ranks.end(), 1);
  std::shuffle(ranks.begin(), ranks.end(), rng);
  for (int i = 0; i < n_boxes; ++i) {
    BoundingBox b;
    do {
      const int xa = ux(rng);
      const int xb = ux(rng);
      const int ya = uy(rng);
      const int yb = uy(rng);
      b = {std::min(xa, xb), std::min(ya, yb), std::max(xa, xb), std::max(ya, yb)};
    } while (b.area() < min_area);
    pr.objects.push_back({tags.empty() ? "random" + std::to_string(i) : tags[static_cast<std::size_t>(i)],
                          ranks[static_cast<std::size_t>(i)]});
    pr.boxes.emplace_back(b);
  }
  return pr;
}

GrayscaleMap random_ranking_map(std::uint64_t seed, int n_boxes, int width, int height) {
  return predicted_ranking_map(random_ranking(std::mt19937_64(seed), n_boxes, width, height), width,
                               height);
}

std::string sidecar_json(const PredictedRanking& pr) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  const int m = static_cast<int>(pr.m());
  for (std::size_t i = 0; i < pr.objects.size(); ++i) {
    if (!pr.boxes[i]) continue;
    const auto& b = *pr.boxes[i];
    nlohmann::ordered_json o;
    o["tag"] = pr.objects[i].tag;
    o["rank"] = pr.objects[i].rank;
    o["rstar"] = rstar(pr.objects[i].rank, m);
    o["box"] = {b.x0, b.y0, b.x1, b.y1};
    arr.push_back(std::move(o));
  }
  return arr.dump(2);
}

}  // namespace salrank::rankmap

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "salrank/core.hpp"

namespace salrank::rankmap {

struct RankedTag {
  std::string tag;
  int rank = 0;

  bool operator==(const RankedTag&) const = default;
};

/// Ranked tags with index-aligned boxes. A missing box marks an object the
/// grounding step could not localize; it keeps its rank and still counts
/// toward m.
struct PredictedRanking {
  std::vector<RankedTag> objects;
  std::vector<std::optional<BoundingBox>> boxes;

  std::size_t m() const { return objects.size(); }
  /// Throws DomainError unless ranks are exactly {1..m} and lists align.
  void validate() const;
};

/// Normalized intensity 1 - (rank-1)/(m-1); a lone object gets 1.
double rstar(int rank, int m);

/// Sum of rstar over covering boxes, clamped to [0,1].
GrayscaleMap predicted_ranking_map(const PredictedRanking& pr, int width, int height);

/// Uniform random boxes (area >= 1% of the frame) with a random rank
/// permutation. Tags default to "random0".. when none are supplied.
PredictedRanking random_ranking(std::mt19937_64 rng, int n_boxes, int width, int height,
                                const std::vector<std::string>& tags = {});

GrayscaleMap random_ranking_map(std::uint64_t seed, int n_boxes, int width, int height);

/// Sidecar listing `{tag, rank, rstar, box}` per localized object.
std::string sidecar_json(const PredictedRanking& pr);

}  // namespace salrank::rankmap

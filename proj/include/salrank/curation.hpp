#pragma once

#include <span>
#include <string>
#include <vector>

#include "salrank/core.hpp"

namespace salrank::curation {

struct RankedObject {
  std::string tag;
  BoundingBox box;
  double score = 0.0;
  int rank = 0;

  bool operator==(const RankedObject&) const = default;
};

struct CurationRecord {
  std::string clip_id;
  std::string caption;
  std::vector<std::vector<RankedObject>> frames;

  bool operator==(const CurationRecord&) const = default;
};

/// Fixations inside the box divided by sqrt(box area).
double rank_score(const BoundingBox& box, const FixationMap& fix);

/// Scores every object, sorts by score (desc), area (desc), tag (asc) and
/// numbers the result 1..m. Boxes are clipped to the frame first.
std::vector<RankedObject> assign_ranks(std::span<const Annotation> objects, const FixationMap& fix);

/// Per-pixel sum of scores over covering boxes, scaled so the peak is 255.
GrayscaleMap gt_ranking_map(std::span<const RankedObject> objects, int width, int height);

/// The gt ranking map as stored on disk: unit range, 8-bit quantized.
GrayscaleMap gt_ranking_map_unit(std::span<const RankedObject> objects, int width, int height);

CurationRecord emit_record(const VideoClip& clip, const std::string& caption);

/// One JSON-lines record (no trailing newline).
std::string to_json_line(const CurationRecord& record);
CurationRecord from_json_line(const std::string& line);

}  // namespace salrank::curation

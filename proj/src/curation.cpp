#include "salrank/curation.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace salrank::curation {

using nlohmann::ordered_json;

double rank_score(const BoundingBox& box, const FixationMap& fix) {
  if (box.area() < 1) throw DimensionError("rank_score on a zero-area box");
  const auto hits = static_cast<double>(count_fixations_in_box(box, fix));
  return hits / std::sqrt(static_cast<double>(box.area()));
}

std::vector<RankedObject> assign_ranks(std::span<const Annotation> objects, const FixationMap& fix) {
  if (objects.empty()) throw EmptyInputError("assign_ranks needs at least one object");
  std::vector<RankedObject> out;
  out.reserve(objects.size());
  for (const auto& obj : objects) {
    const BoundingBox box = clip_box_or_throw(obj.box, fix.width(), fix.height());
    out.push_back({obj.tag, box, rank_score(box, fix), 0});
  }
  std::stable_sort(out.begin(), out.end(), [](const RankedObject& a, const RankedObject& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.box.area() != b.box.area()) return a.box.area() > b.box.area();
    return a.tag < b.tag;
  });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = static_cast<int>(i) + 1;
  return out;
}

GrayscaleMap gt_ranking_map(std::span<const RankedObject> objects, int width, int height) {
  std::vector<double> acc(static_cast<std::size_t>(width) * height, 0.0);
  for (const auto& obj : objects) {
    if (!obj.box.valid_for(width, height)) throw DimensionError("ranking box outside frame");
    for (int y = obj.box.y0; y < obj.box.y1; ++y) {
      for (int x = obj.box.x0; x < obj.box.x1; ++x) {
        acc[static_cast<std::size_t>(y) * width + x] += obj.score;
      }
    }
  }
  return minmax_scale_to_255(GrayscaleMap(width, height, std::move(acc)));
}

GrayscaleMap gt_ranking_map_unit(std::span<const RankedObject> objects, int width, int height) {
  return quantize_unit(scale_values(gt_ranking_map(objects, width, height), 1.0 / 255.0));
}

CurationRecord emit_record(const VideoClip& clip, const std::string& caption) {
  if (caption.empty()) throw IncompleteInputError("caption for clip '" + clip.id + "' is empty");
  if (clip.annotations.size() != clip.frames.size() || clip.fixations.size() != clip.frames.size()) {
    throw IncompleteInputError("clip '" + clip.id + "' lacks per-frame annotations");
  }
  CurationRecord rec{clip.id, caption, {}};
  rec.frames.reserve(clip.frames.size());
  for (std::size_t f = 0; f < clip.frames.size(); ++f) {
    if (clip.annotations[f].empty()) {
      throw IncompleteInputError("clip '" + clip.id + "' frame " + std::to_string(f) +
                                 " has no annotations");
    }
    for (const auto& a : clip.annotations[f]) {
      if (a.tag.empty()) throw IncompleteInputError("empty object tag in clip '" + clip.id + "'");
    }
    rec.frames.push_back(assign_ranks(clip.annotations[f], clip.fixations[f]));
  }
  return rec;
}

std::string to_json_line(const CurationRecord& record) {
  ordered_json j;
  j["clip_id"] = record.clip_id;
  j["caption"] = record.caption;
  ordered_json frames = ordered_json::array();
  for (std::size_t f = 0; f < record.frames.size(); ++f) {
    ordered_json objs = ordered_json::array();
    for (const auto& o : record.frames[f]) {
      ordered_json jo;
      jo["tag"] = o.tag;
      jo["box"] = {o.box.x0, o.box.y0, o.box.x1, o.box.y1};
      jo["score"] = o.score;
      jo["rank"] = o.rank;
      objs.push_back(std::move(jo));
    }
    ordered_json jf;
    jf["frame"] = f;
    jf["objects"] = std::move(objs);
    frames.push_back(std::move(jf));
  }
  j["frames"] = std::move(frames);
  return j.dump();
}

CurationRecord from_json_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    CurationRecord rec;
    rec.clip_id = j.at("clip_id").get<std::string>();
    rec.caption = j.at("caption").get<std::string>();
    for (const auto& jf : j.at("frames")) {
      std::vector<RankedObject> objs;
      for (const auto& jo : jf.at("objects")) {
        const auto& b = jo.at("box");
        objs.push_back({jo.at("tag").get<std::string>(),
                        {b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()},
                        jo.at("score").get<double>(),
                        jo.at("rank").get<int>()});
      }
      rec.frames.push_back(std::move(objs));
    }
    return rec;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed curation record: ") + e.what(), line);
  }
}

}  // namespace salrank::curation

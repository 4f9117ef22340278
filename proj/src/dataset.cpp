#include "salrank/dataset.hpp"

#include <algorithm>
#include <cstdio>

#include "json.hpp"
#include "salrank/image_io.hpp"

namespace salrank::dataset {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::string frame_name(const char* prefix, std::size_t index, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu%s", prefix, index, ext);
  return buf;
}

std::string annotations_json(const VideoClip& clip) {
  ordered_json frames = ordered_json::array();
  for (std::size_t f = 0; f < clip.annotations.size(); ++f) {
    ordered_json objs = ordered_json::array();
    for (const auto& a : clip.annotations[f]) {
      ordered_json o;
      o["tag"] = a.tag;
      o["box"] = {a.box.x0, a.box.y0, a.box.x1, a.box.y1};
      objs.push_back(std::move(o));
    }
    ordered_json jf;
    jf["frame"] = f;
    jf["objects"] = std::move(objs);
    frames.push_back(std::move(jf));
  }
  ordered_json j;
  j["frames"] = std::move(frames);
  return j.dump(2);
}

std::vector<std::vector<Annotation>> parse_annotations(const std::string& text) {
  try {
    const auto j = json::parse(text);
    std::vector<std::vector<Annotation>> out;
    for (const auto& jf : j.at("frames")) {
      std::vector<Annotation> objs;
      for (const auto& o : jf.at("objects")) {
        const auto& b = o.at("box");
        objs.push_back({o.at("tag").get<std::string>(),
                        {b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()}});
      }
      out.push_back(std::move(objs));
    }
    return out;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed annotations: ") + e.what(), text);
  }
}

void save_clip(const fs::path& root, const VideoClip& clip) {
  clip.validate();
  const fs::path dir = root / clip.id;
  fs::create_directories(dir);
  ordered_json frames = ordered_json::array();
  for (std::size_t f = 0; f < clip.frames.size(); ++f) {
    ordered_json jf;
    jf["frame"] = f;
    jf["image"] = frame_name("frame", f);
    jf["fixation"] = frame_name("fix", f);
    jf["saliency"] = frame_name("sal", f);
    write_rgb_png(dir / frame_name("frame", f), clip.frames[f].image);
    write_gray_png(dir / frame_name("fix", f), clip.fixations[f].base());
    write_gray_png(dir / frame_name("sal", f), clip.saliency[f]);
    frames.push_back(std::move(jf));
  }
  write_text_file(dir / "annotations.json", annotations_json(clip));
  ordered_json index;
  index["id"] = clip.id;
  index["width"] = clip.width();
  index["height"] = clip.height();
  index["frames"] = std::move(frames);
  index["annotations"] = "annotations.json";
  write_text_file(dir / "index.json", index.dump(2));
}

void save_dataset(const fs::path& root, const std::vector<VideoClip>& clips) {
  fs::create_directories(root);
  std::vector<std::string> ids;
  for (const auto& c : clips) {
    save_clip(root, c);
    ids.push_back(c.id);
  }
  std::sort(ids.begin(), ids.end());
  ordered_json j;
  j["clips"] = ids;
  j["width"] = clips.empty() ? 0 : clips.front().width();
  j["height"] = clips.empty() ? 0 : clips.front().height();
  write_text_file(root / "dataset.json", j.dump(2));
}

VideoClip load_clip(const fs::path& clip_dir) {
  const fs::path index_path = clip_dir / "index.json";
  if (!fs::exists(index_path)) throw IncompleteInputError("missing " + index_path.string());
  const std::string text = read_text_file(index_path);
  VideoClip clip;
  try {
    const auto index = json::parse(text);
    clip.id = index.at("id").get<std::string>();
    for (const auto& jf : index.at("frames")) {
      Frame frame{read_rgb_png(clip_dir / jf.at("image").get<std::string>()), jf.at("frame").get<int>()};
      clip.frames.push_back(std::move(frame));
      clip.fixations.push_back(
          FixationMap::from_nonzero(read_gray_png(clip_dir / jf.at("fixation").get<std::string>())));
      clip.saliency.push_back(read_gray_png(clip_dir / jf.at("saliency").get<std::string>()));
    }
    clip.annotations =
        parse_annotations(read_text_file(clip_dir / index.at("annotations").get<std::string>()));
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed clip index: ") + e.what(), text);
  }
  clip.validate();
  return clip;
}

std::vector<std::string> list_clip_ids(const fs::path& root) {
  const fs::path manifest = root / "dataset.json";
  if (!fs::exists(manifest)) throw IncompleteInputError("missing " + manifest.string());
  const std::string text = read_text_file(manifest);
  try {
    auto ids = json::parse(text).at("clips").get<std::vector<std::string>>();
    std::sort(ids.begin(), ids.end());
    return ids;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed dataset manifest: ") + e.what(), text);
  }
}

std::vector<VideoClip> load_dataset(const fs::path& root) {
  std::vector<VideoClip> clips;
  for (const auto& id : list_clip_ids(root)) clips.push_back(load_clip(root / id));
  return clips;
}

}  // namespace salrank::dataset

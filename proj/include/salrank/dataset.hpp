#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "salrank/core.hpp"

namespace salrank::dataset {

// On-disk layout:
//   <root>/dataset.json                 {"clips": [...], "width", "height"}
//   <root>/<clip>/index.json            per-frame file names
//   <root>/<clip>/annotations.json      per-frame {tag, box:[x0,y0,x1,y1]}
//   <root>/<clip>/frame_NNNN.png        RGB frame
//   <root>/<clip>/fix_NNNN.png          fixations (nonzero = gaze point)
//   <root>/<clip>/sal_NNNN.png          ground-truth saliency
//   <root>/<clip>/rank_NNNN.png         gt ranking map (written by curate)

std::string frame_name(const char* prefix, std::size_t index, const char* ext = ".png");

void save_clip(const std::filesystem::path& root, const VideoClip& clip);
void save_dataset(const std::filesystem::path& root, const std::vector<VideoClip>& clips);

VideoClip load_clip(const std::filesystem::path& clip_dir);
/// Clips sorted by id. Throws IncompleteInputError / IoError / ParseError
/// on a malformed layout.
std::vector<VideoClip> load_dataset(const std::filesystem::path& root);
std::vector<std::string> list_clip_ids(const std::filesystem::path& root);

std::string annotations_json(const VideoClip& clip);
std::vector<std::vector<Annotation>> parse_annotations(const std::string& text);

}  // namespace salrank::dataset

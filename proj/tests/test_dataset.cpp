#include <filesystem>

#include "doctest.h"
#include "salrank/dataset.hpp"
#include "salrank/image_io.hpp"
#include "salrank/synth.hpp"

using namespace salrank;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("salrank_test_" + name)) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("frame names are zero padded") {
  CHECK(dataset::frame_name("frame", 7) == "frame_0007.png");
  CHECK(dataset::frame_name("pred", 12, ".pgm") == "pred_0012.pgm");
}

TEST_CASE("datasets survive a save/load round trip exactly") {
  TempDir tmp("roundtrip");
  synth::SynthSpec s;
  s.n_clips = 2;
  s.frames_per_clip = 3;
  const auto clips = synth::generate(s);
  dataset::save_dataset(tmp.path, clips);
  CHECK(fs::exists(tmp.path / "dataset.json"));
  CHECK(fs::exists(tmp.path / "clip_0001" / "index.json"));
  const auto back = dataset::load_dataset(tmp.path);
  REQUIRE(back.size() == 2);
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(back[c].id == clips[c].id);
    for (std::size_t f = 0; f < 3; ++f) {
      CHECK(back[c].frames[f].image.data == clips[c].frames[f].image.data);
      CHECK(back[c].fixations[f] == clips[c].fixations[f]);
      CHECK(back[c].saliency[f] == clips[c].saliency[f]);
      CHECK(back[c].annotations[f] == clips[c].annotations[f]);
    }
  }
}

TEST_CASE("malformed layouts are reported") {
  TempDir tmp("broken");
  CHECK_THROWS_AS(dataset::load_dataset(tmp.path), IncompleteInputError);
  fs::create_directories(tmp.path / "c");
  write_text_file(tmp.path / "dataset.json", "{\"clips\": [\"c\"]}");
  CHECK_THROWS_AS(dataset::load_dataset(tmp.path), IncompleteInputError);
  write_text_file(tmp.path / "c" / "index.json", "{\"id\": 5}");
  CHECK_THROWS_AS(dataset::load_dataset(tmp.path), ParseError);
  write_text_file(tmp.path / "dataset.json", "[");
  CHECK_THROWS_AS(dataset::list_clip_ids(tmp.path), ParseError);
  CHECK_THROWS_AS(dataset::parse_annotations("{\"frames\": [{\"objects\": [{\"tag\": \"a\"}]}]}"), ParseError);
}

TEST_CASE("fixation PNGs treat any nonzero pixel as a gaze point") {
  TempDir tmp("fix");
  fs::create_directories(tmp.path);
  write_png(tmp.path / "f.png", Image8{3, 1, 1, {0, 9, 255}});
  const auto fix = FixationMap::from_nonzero(read_gray_png(tmp.path / "f.png"));
  CHECK(fix.count() == 2);
}

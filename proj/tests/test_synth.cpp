#include <map>

#include "doctest.h"
#include "salrank/curation.hpp"
#include "salrank/synth.hpp"

using namespace salrank;
using namespace salrank::synth;

namespace {

SynthSpec small_spec() {
  SynthSpec s;
  s.n_clips = 3;
  s.frames_per_clip = 4;
  return s;
}

}  // namespace

TEST_CASE("spec validation") {
  SynthSpec s = small_spec();
  CHECK_NOTHROW(s.validate());
  s.weights = {0.5, 0.4};
  CHECK_THROWS_AS(s.validate(), SpecError);
  s = small_spec();
  s.radius_max = 17;
  CHECK_THROWS_AS(s.validate(), SpecError);
  s = small_spec();
  s.width = 30;
  CHECK_THROWS_AS(s.validate(), SpecError);
  s = small_spec();
  s.weights = {1.2, -0.2};
  CHECK_THROWS_AS(s.validate(), SpecError);
  CHECK_THROWS_AS(spec_from_json("{\"n_clips\": \"many\"}"), SpecError);
  CHECK_THROWS_AS(spec_from_json("not json"), SpecError);
}

TEST_CASE("spec JSON round trip") {
  SynthSpec s = small_spec();
  s.seed = 99;
  s.weights = {0.5, 0.5};
  const auto back = spec_from_json(spec_to_json(s));
  CHECK(back.seed == 99);
  CHECK(back.weights == s.weights);
  CHECK(back.n_clips == 3);
  CHECK(spec_from_json("{\"n_clips\": 2}").frames_per_clip == SynthSpec{}.frames_per_clip);
}

TEST_CASE("generation is deterministic and valid") {
  const auto a = generate(small_spec());
  const auto b = generate(small_spec());
  REQUIRE(a.size() == 3);
  CHECK(a[0].id == "clip_0000");
  for (std::size_t c = 0; c < a.size(); ++c) {
    CHECK_NOTHROW(a[c].validate());
    CHECK(a[c].frames.size() == 4);
    for (std::size_t f = 0; f < 4; ++f) {
      CHECK(a[c].frames[f].image.data == b[c].frames[f].image.data);
      CHECK(a[c].saliency[f] == b[c].saliency[f]);
      CHECK(a[c].fixations[f] == b[c].fixations[f]);
      CHECK(a[c].annotations[f] == b[c].annotations[f]);
      CHECK(a[c].annotations[f].size() == 3);
      CHECK(a[c].annotations[f][2].tag == "disk2");
      CHECK(a[c].saliency[f].max_value() == 1.0);
      for (double v : a[c].frames[f].image.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }
  auto other = small_spec();
  other.seed = 1;
  CHECK(generate(other)[0].saliency[0] != a[0].saliency[0]);
}

TEST_CASE("a single disk receives every fixation") {
  SynthSpec s = small_spec();
  s.weights = {1.0};
  for (const auto& clip : generate(s)) {
    for (std::size_t f = 0; f < clip.frames.size(); ++f) {
      const auto& box = clip.annotations[f][0].box;
      CHECK(count_fixations_in_box(box, clip.fixations[f]) == clip.fixations[f].count());
      CHECK(clip.fixations[f].count() >= 1);
    }
  }
}

TEST_CASE("fixation ranking recovers the attention weights") {
  SynthSpec s;
  s.n_clips = 25;
  s.frames_per_clip = 8;
  s.weights = {0.7, 0.2, 0.1};
  s.n_fix = 20;
  int frames = 0, top = 0;
  std::map<int, double> mean_saliency;
  for (const auto& clip : generate(s)) {
    for (std::size_t f = 0; f < clip.frames.size(); ++f) {
      const auto r = curation::assign_ranks(clip.annotations[f], clip.fixations[f]);
      ++frames;
      top += r[0].tag == "disk0";
      for (int k = 0; k < 3; ++k) {
        const auto& b = clip.annotations[f][static_cast<std::size_t>(k)].box;
        double acc = 0.0;
        for (int y = b.y0; y < b.y1; ++y)
          for (int x = b.x0; x < b.x1; ++x) acc += clip.saliency[f].at(x, y);
        mean_saliency[k] += acc / static_cast<double>(b.area());
      }
    }
  }
  CHECK(frames == 200);
  // With 20 fixations the 0.2 and 0.1 disks collect 4 and 2 gaze points on
  // average, so only the leading object is recoverable frame by frame.
  CHECK(top >= 190);
  CHECK(mean_saliency[0] > mean_saliency[1]);
  CHECK(mean_saliency[1] > mean_saliency[2]);
}

TEST_CASE("gaussian blur preserves mass away from borders") {
  std::vector<double> v(31 * 31, 0.0);
  v[15 * 31 + 15] = 1.0;
  const auto out = gaussian_blur(GrayscaleMap(31, 31, v), 1.5);
  CHECK(out.at(15, 15) == out.max_value());
  CHECK(out.at(14, 15) == doctest::Approx(out.at(16, 15)));
  CHECK(out.at(15, 14) == doctest::Approx(out.at(14, 15)));
  CHECK(out.sum() / out.at(15, 15) == doctest::Approx(2 * 3.14159265358979 * 1.5 * 1.5).epsilon(0.01));
}

#include <random>

#include "doctest.h"
#include "json.hpp"
#include "salrank/curation.hpp"
#include "salrank/pipeline.hpp"
#include "salrank/synth.hpp"

using namespace salrank;
using namespace salrank::pipeline;

namespace {

std::vector<VideoClip> small_clips(int n = 2) {
  synth::SynthSpec s;
  s.n_clips = n;
  s.frames_per_clip = 4;
  s.width = 8;
  s.height = 8;
  s.radius_min = 1.5;
  s.radius_max = 2.0;
  return synth::generate(s);
}

diffusion::ModelConfig tiny() {
  diffusion::ModelConfig c;
  c.width = 8;
  c.height = 8;
  c.enc_channels = 3;
  c.feat_channels = 2;
  c.c1 = 3;
  c.c2 = 4;
  c.c3 = 4;
  c.time_channels = 2;
  return c;
}

class CountingMllm : public MllmClient {
 public:
  explicit CountingMllm(std::string text) : text_(std::move(text)) {}
  std::string complete(const VsorPrompt& p) override {
    last = p;
    ++calls;
    return text_;
  }
  VsorPrompt last;
  int calls = 0;

 private:
  std::string text_;
};

std::string random_tag(std::mt19937_64& rng) {
  static const std::string alphabet = "abcdefghijklmnopqrstuvwxyz ";
  std::string t(1, alphabet[rng() % 26]);
  const auto len = rng() % 8;
  for (std::size_t i = 0; i < len; ++i) t += alphabet[rng() % alphabet.size()];
  while (t.back() == ' ') t.pop_back();
  return t;
}

}  // namespace

TEST_CASE("prompt templates") {
  const auto clip = small_clips(1)[0];
  const auto cot = build_prompt(clip, PromptMode::cot);
  const auto cap = cot.instruction.find("caption");
  const auto rank = cot.instruction.find("most to least salient");
  REQUIRE(cap != std::string::npos);
  REQUIRE(rank != std::string::npos);
  CHECK(cap < rank);
  const auto direct = build_prompt(clip, PromptMode::direct);
  CHECK(direct.instruction.find("caption") == std::string::npos);
  CHECK(direct.instruction.find("describe") == std::string::npos);
  CHECK(direct.instruction.find("most to least salient") != std::string::npos);
  CHECK(build_prompt(clip, PromptMode::cot).instruction == cot.instruction);
  REQUIRE(cot.frame_refs.size() == 4);
  CHECK(cot.frame_refs[2] == "clip_0000/frame_0002.png");
  CHECK_THROWS_AS(build_prompt(VideoClip{}, PromptMode::cot), EmptyInputError);
  CHECK(parse_prompt_mode("direct") == PromptMode::direct);
  CHECK_THROWS_AS(parse_source("gpt"), SpecError);
}

TEST_CASE("parse_response examples") {
  const auto r = parse_response("A dog runs.\n1. dog\n2. ball");
  CHECK(r.caption == "A dog runs.");
  CHECK(r.ranking == std::vector<std::string>{"dog", "ball"});
  CHECK_THROWS_AS(parse_response("no objects here"), ParseError);
  try {
    parse_response("nothing");
  } catch (const ParseError& e) {
    CHECK(e.raw() == "nothing");
  }
  const auto messy = parse_response("Caption line one.\nline two\n\n 1) Dog.\n2. cat\n3. dog\n\nThat is all.\n4. late");
  CHECK(messy.caption == "Caption line one.\nline two");
  CHECK(messy.ranking == std::vector<std::string>{"Dog", "cat", "dog"});
  CHECK(parse_response("1. solo").caption.empty());
}

TEST_CASE("parse and serialize round trip") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    VsorResponse r;
    if (rng() % 3 != 0) r.caption = "Scene " + std::to_string(trial) + " with " + random_tag(rng) + ".";
    const auto n = 1 + rng() % 5;
    while (r.ranking.size() < n) {
      const auto t = random_tag(rng);
      if (std::find(r.ranking.begin(), r.ranking.end(), t) == r.ranking.end()) r.ranking.push_back(t);
    }
    CHECK(parse_response(serialize_response(r)) == r);
    const std::string raw = serialize_response(r) + "Trailing prose.\n";
    const auto once = parse_response(raw);
    CHECK(parse_response(serialize_response(once)) == once);
  }
}

TEST_CASE("oracle ranking delegates to assign_ranks on the middle frame") {
  for (const auto& clip : small_clips(5)) {
    const auto r = oracle_rank(clip);
    const auto mid = clip.middle_frame();
    const auto ranked = curation::assign_ranks(clip.annotations[mid], clip.fixations[mid]);
    REQUIRE(r.ranking.size() == ranked.size());
    for (std::size_t i = 0; i < ranked.size(); ++i) CHECK(r.ranking[i] == ranked[i].tag);
    CHECK(oracle_rank(clip) == r);
  }
  auto clip = small_clips(1)[0];
  // All gaze inside disk1 on the middle frame.
  const auto& box = clip.annotations[2][1].box;
  std::vector<double> v(64, 0.0);
  v[static_cast<std::size_t>(box.y0) * 8 + box.x0] = 1.0;
  clip.fixations[2] = FixationMap(GrayscaleMap(8, 8, v));
  clip.annotations[2] = {clip.annotations[2][1]};
  CHECK(oracle_rank(clip).ranking.front() == "disk1");
  clip.annotations[2].clear();
  CHECK_THROWS_AS(oracle_rank(clip), IncompleteInputError);
}

TEST_CASE("oracle grounding") {
  const auto clip = small_clips(1)[0];
  OracleGrounding g(clip.annotations[2]);
  const auto found = ground({"disk2", "unicorn", "disk0"}, clip.frames[2], g);
  REQUIRE(found.size() == 2);
  CHECK(found[0].tag == "disk2");
  CHECK(found[0].box == clip.annotations[2][2].box);
  CHECK(found[1].tag == "disk0");
  CHECK(ground({"unicorn"}, clip.frames[2], g).empty());
  CHECK_THROWS_AS(ground({}, clip.frames[2], g), EmptyInputError);
}

TEST_CASE("url parsing") {
  const auto ep = parse_url("http://127.0.0.1:9000/v1/mllm");
  CHECK(ep.host == "127.0.0.1");
  CHECK(ep.port == 9000);
  CHECK(ep.path == "/v1/mllm");
  CHECK(parse_url("http://localhost").port == 80);
  CHECK_THROWS_AS(parse_url("ftp://x"), SpecError);
}

TEST_CASE("remote clients against the stub server") {
  StubServer server(R"({"mllm": {"default": "Two disks.\n1. disk1\n2. disk0"},
                        "detections": [{"tag": "disk0", "box": [1, 1, 4, 4], "score": 0.9},
                                       {"tag": "disk1", "box": [-2, 5, 3, 12], "score": 0.8},
                                       {"tag": "ghost", "box": [0, 0, 1, 1], "score": 0.1}]})");
  server.start();
  const auto clip = small_clips(1)[0];
  HttpMllmClient mllm(server.mllm_url(), std::chrono::seconds(5));
  HttpGroundingClient grounding(server.ground_url(), std::chrono::seconds(5));
  const auto resp = parse_response(mllm.complete(build_prompt(clip, PromptMode::cot)));
  CHECK(resp.ranking == std::vector<std::string>{"disk1", "disk0"});
  const auto boxes = ground(resp.ranking, clip.frames[2], grounding);
  REQUIRE(boxes.size() == 2);
  CHECK(boxes[0].box == BoundingBox{0, 5, 3, 8});
  CHECK(boxes[1].box == BoundingBox{1, 1, 4, 4});
  CHECK(server.requests() == 2);

  Services sv{&mllm, &grounding, PromptMode::cot};
  const auto plan = plan_ranking(clip, Source::mllm, sv, 0);
  CHECK(plan.response->caption == "Two disks.");
  CHECK(plan.map.at(1, 6) == 1.0);
  CHECK(plan.map.at(2, 2) == 0.0);
  server.stop();

  HttpMllmClient dead("http://127.0.0.1:1/mllm", std::chrono::milliseconds(300));
  CHECK_THROWS_AS(dead.complete(build_prompt(clip, PromptMode::cot)), TransportError);
}

TEST_CASE("stub server without a configured reply rejects the request") {
  StubServer server("{}");
  server.start();
  HttpMllmClient mllm(server.mllm_url(), std::chrono::seconds(5));
  CHECK_THROWS_AS(mllm.complete(build_prompt(small_clips(1)[0], PromptMode::direct)), TransportError);
  CHECK_THROWS_AS(StubServer("[1,"), ParseError);
}

TEST_CASE("ranking plans") {
  const auto clip = small_clips(1)[0];
  Services none;
  const auto oracle = plan_ranking(clip, Source::oracle, none, 0);
  const auto mid = clip.middle_frame();
  const auto ranked = curation::assign_ranks(clip.annotations[mid], clip.fixations[mid]);
  rankmap::PredictedRanking expected;
  for (const auto& o : ranked) {
    expected.objects.push_back({o.tag, o.rank});
    expected.boxes.emplace_back(o.box);
  }
  CHECK(oracle.map == rankmap::predicted_ranking_map(expected, 8, 8));

  const auto r1 = plan_ranking(clip, Source::random, none, 5);
  CHECK(r1.map == plan_ranking(clip, Source::random, none, 5).map);
  CHECK(r1.ranking.m() == 3);
  CHECK(r1.ranking.objects[0].tag == "disk0");
  CHECK_THROWS_AS(plan_ranking(clip, Source::mllm, none, 0), SpecError);

  CountingMllm fake("1. disk2\n2. disk0");
  Services sv{&fake, nullptr, PromptMode::direct};
  const auto m = plan_ranking(clip, Source::mllm, sv, 0);
  CHECK(fake.calls == 1);
  CHECK(fake.last.instruction.find("caption") == std::string::npos);
  CHECK(m.ranking.objects[0].tag == "disk2");
  CHECK(*m.ranking.boxes[0] == clip.annotations[mid][2].box);
}

TEST_CASE("conditioned frame selection") {
  CHECK(conditioned_frames(8, 0.0).empty());
  CHECK(conditioned_frames(8, 0.25) == std::vector<std::size_t>{0, 4});
  CHECK(conditioned_frames(8, 1.0 / 16) == std::vector<std::size_t>{0});
  CHECK(conditioned_frames(8, 0.5) == std::vector<std::size_t>{0, 2, 4, 6});
  CHECK(conditioned_frames(8, 1.0).size() == 8);
  CHECK(conditioned_frames(7, 0.25) == std::vector<std::size_t>{0, 3});
  CHECK_THROWS_AS(conditioned_frames(8, 1.5), DomainError);
}

TEST_CASE("predict_clip ratio semantics and determinism") {
  const diffusion::SaliencyModel model(tiny());
  const auto params = model.init_params(2);
  const auto sched = diffusion::NoiseSchedule::linear(10, 1e-3, 0.6);
  const Decoder dec{&model, &params, &sched, 1};
  const auto clip = small_clips(1)[0];
  Services none;

  const auto zero = predict_clip(clip, dec, 0.0, Source::oracle, none, 9);
  CHECK(zero.prediction.conditioned.empty());
  const auto uncond = decode_clip(clip, GrayscaleMap(8, 8, 0.0), 1.0, dec, 9);
  CHECK(zero.prediction.maps == uncond.maps);

  const auto all = predict_clip(clip, dec, 1.0, Source::oracle, none, 9);
  CHECK(all.prediction.conditioned.size() == 4);
  CHECK(all.prediction.maps != zero.prediction.maps);
  CHECK(predict_clip(clip, dec, 1.0, Source::oracle, none, 9).prediction.maps == all.prediction.maps);
  CHECK(predict_clip(clip, dec, 0.25, Source::random, none, 4).prediction.maps ==
        predict_clip(clip, dec, 0.25, Source::random, none, 4).prediction.maps);
  for (const auto& m : all.prediction.maps) {
    CHECK(m.width() == 8);
    for (double v : m.values()) CHECK((v >= 0.0 && v <= 1.0));
  }
  const auto quarter = predict_clip(clip, dec, 0.25, Source::oracle, none, 9);
  CHECK(quarter.prediction.maps[0] == all.prediction.maps[0]);
  CHECK(quarter.prediction.maps[1] == zero.prediction.maps[1]);
}

TEST_CASE("parallel_for visits every index once") {
  std::vector<int> hits(50, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
}

TEST_CASE("decode_frame agrees with decode_clip") {
  const diffusion::SaliencyModel model(tiny());
  const auto params = model.init_params(3);
  const auto sched = diffusion::NoiseSchedule::linear(10, 1e-3, 0.6);
  const Decoder dec{&model, &params, &sched, 1};
  const auto clip = small_clips(1)[0];
  const auto rank = plan_ranking(clip, Source::oracle, {}, 0).map;
  const auto half = decode_clip(clip, rank, 0.5, dec, 11);
  CHECK(decode_frame(clip, 0, &rank, dec, 11) == half.maps[0]);
  CHECK(decode_frame(clip, 1, nullptr, dec, 11) == half.maps[1]);
  CHECK(decode_frame(clip, 1, &rank, dec, 11) != half.maps[1]);
  CHECK_THROWS_AS(decode_frame(clip, 4, nullptr, dec, 11), DomainError);
  synth::SynthSpec big;
  big.n_clips = 1;
  big.frames_per_clip = 2;
  CHECK_THROWS_AS(decode_frame(synth::generate(big)[0], 0, nullptr, dec, 11), DimensionError);
}

TEST_CASE("correlate_clip") {
  const auto clip = small_clips(1)[0];
  const auto mid = clip.middle_frame();
  const auto gt = curation::assign_ranks(clip.annotations[mid], clip.fixations[mid]);

  rankmap::PredictedRanking same, reversed;
  for (const auto& o : gt) {
    same.objects.push_back({o.tag, o.rank});
    same.boxes.emplace_back(o.box);
    reversed.objects.push_back({o.tag, static_cast<int>(gt.size()) + 1 - o.rank});
    reversed.boxes.emplace_back(o.box);
  }
  const auto a = correlate_clip(clip, same);
  CHECK(a.clip_id == clip.id);
  CHECK(a.matched == 3);
  REQUIRE(a.rank_corr);
  CHECK(*a.rank_corr == 1.0);
  REQUIRE(a.map_cc);
  CHECK(*a.map_cc >= -1.0);
  CHECK(*a.map_cc <= 1.0);
  CHECK(*correlate_clip(clip, reversed).rank_corr == doctest::Approx(-1.0));

  rankmap::PredictedRanking one;
  one.objects.push_back({gt[0].tag, 1});
  one.boxes.emplace_back(gt[0].box);
  one.objects.push_back({"nothing", 2});
  one.boxes.emplace_back(std::nullopt);
  const auto b = correlate_clip(clip, one);
  CHECK(b.matched == 1);
  CHECK_FALSE(b.rank_corr);
}

TEST_CASE("correlate_clip resolves repeated tags by overlap") {
  auto clip = small_clips(1)[0];
  const auto mid = clip.middle_frame();
  for (auto& a : clip.annotations[mid]) a.tag = "disk";
  const auto gt = curation::assign_ranks(clip.annotations[mid], clip.fixations[mid]);
  rankmap::PredictedRanking pr;
  for (const auto& o : gt) {
    pr.objects.push_back({"disk", o.rank});
    pr.boxes.emplace_back(o.box);
  }
  const auto row = correlate_clip(clip, pr);
  CHECK(row.matched >= 2);
  REQUIRE(row.rank_corr);
  CHECK(*row.rank_corr == 1.0);

  for (auto& b : pr.boxes) b = BoundingBox{0, 0, 1, 1};
  CHECK(correlate_clip(clip, pr).matched == 0);
}

TEST_CASE("correlation csv") {
  std::vector<CorrelationRow> rows{{"a", 0.5, 1.0, 3}, {"b", std::nullopt, std::nullopt, 1}, {"c", 0.25, -1.0, 2}};
  const auto csv = correlation_csv(rows);
  CHECK(csv ==
        "clip,map_cc,rank_corr,matched\n"
        "a,0.500000000,1.000000000,3\n"
        "b,undefined,undefined,1\n"
        "c,0.250000000,-1.000000000,2\n"
        "mean,0.375000000,0.000000000,2.000000000\n");
  CHECK(correlation_csv({}) == "clip,map_cc,rank_corr,matched\nmean,undefined,undefined,undefined\n");
}

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "salrank/core.hpp"
#include "salrank/diffusion/model.hpp"
#include "salrank/diffusion/schedule.hpp"
#include "salrank/rankmap.hpp"

namespace salrank::pipeline {

enum class PromptMode { cot, direct };
enum class Source { oracle, mllm, random };

PromptMode parse_prompt_mode(const std::string& name);
Source parse_source(const std::string& name);
std::string to_string(Source source);

struct VsorPrompt {
  std::string instruction;
  std::vector<std::string> frame_refs;
};

struct VsorResponse {
  std::string caption;
  std::vector<std::string> ranking;  // rank 1 first

  bool operator==(const VsorResponse&) const = default;
};

/// Frame references are "<clip id>/frame_NNNN.png", relative to the dataset root.
VsorPrompt build_prompt(const VideoClip& clip, PromptMode mode);

/// Caption is the text before the first numbered line; the ranking is the
/// run of "N. tag" / "N) tag" lines that follows. Throws ParseError when no
/// ranking line is present.
VsorResponse parse_response(const std::string& text);
std::string serialize_response(const VsorResponse& response);

inline constexpr const char* kPlaceholderCaption = "A video clip.";

/// Ranks the middle frame's annotations by its fixations.
VsorResponse oracle_rank(const VideoClip& clip);

class MllmClient {
 public:
  virtual ~MllmClient() = default;
  virtual std::string complete(const VsorPrompt& prompt) = 0;
};

class GroundingClient {
 public:
  virtual ~GroundingClient() = default;
  /// Detections for any of `tags` found in the frame, in any order.
  virtual std::vector<Annotation> detect(const std::vector<std::string>& tags, const Frame& frame) = 0;
};

/// Looks tags up in a fixed annotation list.
class OracleGrounding : public GroundingClient {
 public:
  explicit OracleGrounding(std::vector<Annotation> annotations) : annotations_(std::move(annotations)) {}
  std::vector<Annotation> detect(const std::vector<std::string>& tags, const Frame& frame) override;

 private:
  std::vector<Annotation> annotations_;
};

struct Endpoint {
  std::string host;
  int port = 80;
  std::string path = "/";
};

/// Accepts http://host[:port][/path].
Endpoint parse_url(const std::string& url);

/// POST {"instruction","frames"} -> {"text"}.
class HttpMllmClient : public MllmClient {
 public:
  HttpMllmClient(const std::string& url, std::chrono::milliseconds timeout);
  std::string complete(const VsorPrompt& prompt) override;

 private:
  Endpoint endpoint_;
  std::chrono::milliseconds timeout_;
};

/// POST {"tags","frame": base64 PNG} -> {"detections":[{"tag","box","score"}]}.
class HttpGroundingClient : public GroundingClient {
 public:
  HttpGroundingClient(const std::string& url, std::chrono::milliseconds timeout);
  std::vector<Annotation> detect(const std::vector<std::string>& tags, const Frame& frame) override;

 private:
  Endpoint endpoint_;
  std::chrono::milliseconds timeout_;
};

/// One box per requested tag, in request order; unmatched tags are omitted
/// and duplicate detections keep the first. Boxes are clipped to the frame.
std::vector<Annotation> ground(const std::vector<std::string>& tags, const Frame& frame,
                               GroundingClient& backend);

/// Ranked tags aligned with grounded boxes; ungrounded tags keep their rank.
rankmap::PredictedRanking to_predicted_ranking(const VsorResponse& response,
                                               const std::vector<Annotation>& grounded);

struct Services {
  MllmClient* mllm = nullptr;
  /// When null, mllm-source tags are grounded against the clip annotations.
  GroundingClient* grounding = nullptr;
  PromptMode mode = PromptMode::cot;
};

struct RankingPlan {
  Source source = Source::oracle;
  std::optional<VsorResponse> response;
  rankmap::PredictedRanking ranking;
  GrayscaleMap map;  // unit range, frame resolution
};

/// Ranking map for a clip from the chosen source. Random plans draw one box
/// per middle-frame annotation and reuse its tags.
RankingPlan plan_ranking(const VideoClip& clip, Source source, const Services& services,
                         std::uint64_t seed);

/// ceil(ratio * L) evenly spaced frame indices starting at frame 0.
std::vector<std::size_t> conditioned_frames(std::size_t length, double ratio);

struct Decoder {
  const diffusion::SaliencyModel* model = nullptr;
  const diffusion::DenoiserParams* params = nullptr;
  const diffusion::NoiseSchedule* sched = nullptr;
  int temporal_radius = 1;
};

std::uint64_t frame_seed(std::uint64_t seed, const std::string& clip_id, std::size_t frame);

struct ClipPrediction {
  std::vector<GrayscaleMap> maps;
  std::vector<std::size_t> conditioned;
};

/// Diffusion sample for one frame; a null ranking map leaves it unconditioned.
GrayscaleMap decode_frame(const VideoClip& clip, std::size_t frame, const GrayscaleMap* rank_map,
                          const Decoder& decoder, std::uint64_t seed);

/// Diffusion sample per frame; frames outside the conditioned set see a zero
/// ranking map.
ClipPrediction decode_clip(const VideoClip& clip, const GrayscaleMap& rank_map, double ratio,
                           const Decoder& decoder, std::uint64_t seed);

struct PredictResult {
  RankingPlan plan;
  ClipPrediction prediction;
};

PredictResult predict_clip(const VideoClip& clip, const Decoder& decoder, double ratio, Source source,
                           const Services& services, std::uint64_t seed);

struct CorrelationRow {
  std::string clip_id;
  std::optional<double> map_cc;
  std::optional<double> rank_corr;
  std::size_t matched = 0;
};

/// Map correlation: CC between the ranking map and the middle frame's gt
/// saliency. Rank correlation: Spearman between predicted and gt ranks of
/// objects matched by tag; when a tag occurs more than once the gt object
/// with the highest IoU (at least 0.5) is taken. Fewer than two matches leave
/// the rank correlation undefined.
CorrelationRow correlate_clip(const VideoClip& clip, const rankmap::PredictedRanking& ranking);

/// Header `clip,map_cc,rank_corr,matched`, one row per clip, then `mean`.
std::string correlation_csv(const std::vector<CorrelationRow>& rows);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::mutex mu;
  std::size_t next = 0;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i;
        {
          std::lock_guard lock(mu);
          if (next >= n) return;
          i = next++;
        }
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

/// Bundled stand-in for the MLLM and grounding services.
///
/// Config JSON:
///   {"mllm": {"default": "<text>", "by_clip": {"<id>": "<text>"}},
///    "detections": [{"tag","box":[x0,y0,x1,y1],"score"}]}
/// With a dataset attached, MLLM requests are answered with the oracle
/// ranking of the referenced clip and grounding requests with the
/// annotations of the frame whose pixels match the posted image.
class StubServer {
 public:
  explicit StubServer(const std::string& config_json = "{}");
  ~StubServer();
  StubServer(const StubServer&) = delete;
  StubServer& operator=(const StubServer&) = delete;

  void attach_dataset(const std::filesystem::path& root);

  /// Binds to host:port (port 0 picks a free one) and serves on a
  /// background thread. Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Blocks serving on the calling thread.
  void listen(const std::string& host, int port);
  void stop();

  std::string mllm_url() const;
  std::string ground_url() const;
  std::size_t requests() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace salrank::pipeline

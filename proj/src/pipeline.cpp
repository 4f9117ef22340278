#include "salrank/pipeline.hpp"

#include <atomic>
#include <cmath>
#include <map>
#include <random>
#include <regex>
#include <sstream>
#include <unordered_map>

#include "httplib.h"
#include "json.hpp"
#include "salrank/curation.hpp"
#include "salrank/dataset.hpp"
#include "salrank/diffusion/trainer.hpp"
#include "salrank/image_io.hpp"
#include "salrank/metrics.hpp"
#include "salrank/random.hpp"

namespace salrank::pipeline {

using json = nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string clean_tag(std::string tag) {
  tag = trim(tag);
  while (!tag.empty() && std::string(".,;:").find(tag.back()) != std::string::npos) tag.pop_back();
  return trim(tag);
}

const std::regex& numbered_line() {
  static const std::regex re(R"(^\s*(\d+)[.)]\s+(.+?)\s*$)");
  return re;
}

std::string post_json(const Endpoint& ep, std::chrono::milliseconds timeout, const json& body) {
  httplib::Client cli(ep.host, ep.port);
  const auto secs = static_cast<time_t>(timeout.count() / 1000);
  const auto usecs = static_cast<time_t>((timeout.count() % 1000) * 1000);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  auto res = cli.Post(ep.path, body.dump(), "application/json");
  if (!res) {
    throw TransportError("request to " + ep.host + ":" + std::to_string(ep.port) + ep.path +
                         " failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw TransportError("request to " + ep.path + " returned HTTP " + std::to_string(res->status));
  }
  return res->body;
}

json parse_reply(const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::exception&) {
    throw TransportError("malformed JSON reply: " + body.substr(0, 200));
  }
}

std::uint64_t pixel_hash(const Image8& img) {
  const std::string_view bytes(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return stable_hash(bytes) ^ mix64(static_cast<std::uint64_t>(img.width) << 32 | static_cast<std::uint32_t>(img.height));
}

}  // namespace

PromptMode parse_prompt_mode(const std::string& name) {
  if (name == "cot") return PromptMode::cot;
  if (name == "direct") return PromptMode::direct;
  throw SpecError("unknown prompt mode '" + name + "'");
}

Source parse_source(const std::string& name) {
  if (name == "oracle") return Source::oracle;
  if (name == "mllm") return Source::mllm;
  if (name == "random") return Source::random;
  throw SpecError("unknown ranking source '" + name + "'");
}

std::string to_string(Source source) {
  switch (source) {
    case Source::oracle: return "oracle";
    case Source::mllm: return "mllm";
    case Source::random: return "random";
  }
  return "?";
}

VsorPrompt build_prompt(const VideoClip& clip, PromptMode mode) {
  if (clip.frames.empty()) throw EmptyInputError("cannot prompt with an empty clip");
  VsorPrompt p;
  for (std::size_t f = 0; f < clip.frames.size(); ++f) {
    p.frame_refs.push_back(clip.id + "/" + dataset::frame_name("frame", f));
  }
  const std::string n = std::to_string(clip.frames.size());
  const std::string list_rule =
      "list the salient objects from most to least salient, one per line, formatted as "
      "\"1. <tag>\", \"2. <tag>\" and so on. Use short object tags.";
  if (mode == PromptMode::cot) {
    p.instruction = "You are given " + n + " video frames in temporal order.\n"
                    "Step 1: Write a one-sentence caption of the video.\n"
                    "Step 2: Using the caption, " + list_rule;
  } else {
    p.instruction = "You are given " + n + " video frames in temporal order.\n"
                    "Without any other text, " + list_rule;
  }
  return p;
}

VsorResponse parse_response(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::string before;
  VsorResponse r;
  bool in_block = false;
  std::smatch m;
  while (std::getline(is, line)) {
    if (std::regex_match(line, m, numbered_line())) {
      in_block = true;
      std::string tag = clean_tag(m[2].str());
      if (tag.empty()) continue;
      if (std::find(r.ranking.begin(), r.ranking.end(), tag) == r.ranking.end()) {
        r.ranking.push_back(std::move(tag));
      }
    } else if (in_block) {
      if (trim(line).empty()) continue;
      break;
    } else {
      before += line;
      before += '\n';
    }
  }
  if (r.ranking.empty()) throw ParseError("response has no numbered ranking list", text);
  r.caption = trim(before);
  return r;
}

std::string serialize_response(const VsorResponse& response) {
  std::string out;
  if (!response.caption.empty()) out = response.caption + "\n";
  for (std::size_t i = 0; i < response.ranking.size(); ++i) {
    out += std::to_string(i + 1) + ". " + response.ranking[i] + "\n";
  }
  return out;
}

VsorResponse oracle_rank(const VideoClip& clip) {
  if (clip.frames.empty()) throw EmptyInputError("cannot rank an empty clip");
  const std::size_t mid = clip.middle_frame();
  if (clip.annotations.size() != clip.frames.size() || clip.fixations.size() != clip.frames.size() ||
      clip.annotations[mid].empty()) {
    throw IncompleteInputError("clip '" + clip.id + "' lacks annotations or fixations on its middle frame");
  }
  VsorResponse r;
  r.caption = kPlaceholderCaption;
  for (const auto& o : curation::assign_ranks(clip.annotations[mid], clip.fixations[mid])) {
    r.ranking.push_back(o.tag);
  }
  return r;
}

std::vector<Annotation> OracleGrounding::detect(const std::vector<std::string>& tags, const Frame&) {
  std::vector<Annotation> out;
  for (const auto& a : annotations_) {
    if (std::find(tags.begin(), tags.end(), a.tag) != tags.end()) out.push_back(a);
  }
  return out;
}

Endpoint parse_url(const std::string& url) {
  static const std::regex re(R"(^http://([^/:]+)(?::(\d+))?(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw SpecError("unsupported endpoint URL '" + url + "'");
  Endpoint ep;
  ep.host = m[1].str();
  if (m[2].matched) ep.port = std::stoi(m[2].str());
  if (m[3].matched) ep.path = m[3].str();
  return ep;
}

HttpMllmClient::HttpMllmClient(const std::string& url, std::chrono::milliseconds timeout)
    : endpoint_(parse_url(url)), timeout_(timeout) {}

std::string HttpMllmClient::complete(const VsorPrompt& prompt) {
  const json body = {{"instruction", prompt.instruction}, {"frames", prompt.frame_refs}};
  const json reply = parse_reply(post_json(endpoint_, timeout_, body));
  if (!reply.is_object() || !reply.contains("text") || !reply["text"].is_string()) {
    throw TransportError("MLLM reply lacks a text field");
  }
  return reply["text"].get<std::string>();
}

HttpGroundingClient::HttpGroundingClient(const std::string& url, std::chrono::milliseconds timeout)
    : endpoint_(parse_url(url)), timeout_(timeout) {}

std::vector<Annotation> HttpGroundingClient::detect(const std::vector<std::string>& tags, const Frame& frame) {
  const json body = {{"tags", tags}, {"frame", base64_encode(encode_png(to_image8(frame.image)))}};
  const json reply = parse_reply(post_json(endpoint_, timeout_, body));
  if (!reply.is_object() || !reply.contains("detections") || !reply["detections"].is_array()) {
    throw TransportError("grounding reply lacks a detections array");
  }
  std::vector<Annotation> out;
  try {
    for (const auto& d : reply["detections"]) {
      const auto& b = d.at("box");
      if (!b.is_array() || b.size() != 4) throw TransportError("detection box must have four entries");
      out.push_back({d.at("tag").get<std::string>(),
                     {b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()}});
    }
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed detection: ") + e.what());
  }
  return out;
}

std::vector<Annotation> ground(const std::vector<std::string>& tags, const Frame& frame, GroundingClient& backend) {
  if (tags.empty()) throw EmptyInputError("ground needs at least one tag");
  const auto found = backend.detect(tags, frame);
  std::vector<Annotation> out;
  for (const auto& tag : tags) {
    if (std::any_of(out.begin(), out.end(), [&](const Annotation& a) { return a.tag == tag; })) continue;
    for (const auto& d : found) {
      if (d.tag != tag) continue;
      const BoundingBox b = d.box.clipped(frame.width(), frame.height());
      if (b.area() == 0) continue;
      out.push_back({tag, b});
      break;
    }
  }
  return out;
}

rankmap::PredictedRanking to_predicted_ranking(const VsorResponse& response,
                                               const std::vector<Annotation>& grounded) {
  rankmap::PredictedRanking pr;
  for (std::size_t i = 0; i < response.ranking.size(); ++i) {
    const auto& tag = response.ranking[i];
    pr.objects.push_back({tag, static_cast<int>(i) + 1});
    const auto it = std::find_if(grounded.begin(), grounded.end(), [&](const Annotation& a) { return a.tag == tag; });
    pr.boxes.push_back(it == grounded.end() ? std::nullopt : std::optional<BoundingBox>(it->box));
  }
  return pr;
}

RankingPlan plan_ranking(const VideoClip& clip, Source source, const Services& services, std::uint64_t seed) {
  if (clip.frames.empty()) throw EmptyInputError("cannot plan a ranking for an empty clip");
  const std::size_t mid = clip.middle_frame();
  const Frame& frame = clip.frames[mid];
  const auto& mid_annotations =
      clip.annotations.size() > mid ? clip.annotations[mid] : std::vector<Annotation>{};
  RankingPlan plan;
  plan.source = source;
  switch (source) {
    case Source::oracle: {
      plan.response = oracle_rank(clip);
      OracleGrounding g(mid_annotations);
      plan.ranking = to_predicted_ranking(*plan.response, ground(plan.response->ranking, frame, g));
      break;
    }
    case Source::mllm: {
      if (services.mllm == nullptr) throw SpecError("mllm source requires an MLLM endpoint");
      plan.response = parse_response(services.mllm->complete(build_prompt(clip, services.mode)));
      OracleGrounding fallback(mid_annotations);
      GroundingClient& g = services.grounding != nullptr ? *services.grounding : fallback;
      plan.ranking = to_predicted_ranking(*plan.response, ground(plan.response->ranking, frame, g));
      break;
    }
    case Source::random: {
      std::vector<std::string> tags;
      for (const auto& a : mid_annotations) tags.push_back(a.tag);
      const int n = tags.empty() ? 1 : static_cast<int>(tags.size());
      std::mt19937_64 rng(derive_seed(seed, stable_hash(clip.id), 0x7a4d));
      plan.ranking = rankmap::random_ranking(rng, n, clip.width(), clip.height(), tags);
      break;
    }
  }
  plan.map = rankmap::predicted_ranking_map(plan.ranking, clip.width(), clip.height());
  return plan;
}

std::vector<std::size_t> conditioned_frames(std::size_t length, double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw DomainError("ratio must lie in [0,1]");
  const auto n = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(length) - 1e-9));
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < n; ++j) out.push_back(j * length / n);
  return out;
}

std::uint64_t frame_seed(std::uint64_t seed, const std::string& clip_id, std::size_t frame) {
  return derive_seed(seed, stable_hash(clip_id), frame);
}

GrayscaleMap decode_frame(const VideoClip& clip, std::size_t frame, const GrayscaleMap* rank_map,
                          const Decoder& decoder, std::uint64_t seed) {
  const auto& model = *decoder.model;
  const auto& cfg = model.config();
  if (clip.width() != cfg.width || clip.height() != cfg.height) {
    throw DimensionError("clip '" + clip.id + "' does not match the checkpoint map size");
  }
  if (frame >= clip.frames.size()) throw DomainError("frame index out of range");
  FeatureTensor cond(cfg.cond_channels(), cfg.feat_height(), cfg.feat_width());
  if (rank_map != nullptr) {
    const auto window = diffusion::frame_window(clip, frame, decoder.temporal_radius);
    const auto features = model.encode_frames(std::span<const FeatureTensor* const>(window), *decoder.params);
    cond = model.make_condition(*rank_map, features);
  }
  return model.sample(cond, *decoder.params, *decoder.sched, frame_seed(seed, clip.id, frame));
}

ClipPrediction decode_clip(const VideoClip& clip, const GrayscaleMap& rank_map, double ratio,
                           const Decoder& decoder, std::uint64_t seed) {
  ClipPrediction out;
  out.conditioned = conditioned_frames(clip.frames.size(), ratio);
  for (std::size_t f = 0; f < clip.frames.size(); ++f) {
    const bool on = std::find(out.conditioned.begin(), out.conditioned.end(), f) != out.conditioned.end();
    out.maps.push_back(decode_frame(clip, f, on ? &rank_map : nullptr, decoder, seed));
  }
  return out;
}

PredictResult predict_clip(const VideoClip& clip, const Decoder& decoder, double ratio, Source source,
                           const Services& services, std::uint64_t seed) {
  PredictResult r;
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw DomainError("ratio must lie in [0,1]");
  r.plan = plan_ranking(clip, source, services, seed);
  r.prediction = decode_clip(clip, r.plan.map, ratio, decoder, seed);
  return r;
}

CorrelationRow correlate_clip(const VideoClip& clip, const rankmap::PredictedRanking& ranking) {
  ranking.validate();
  CorrelationRow row;
  row.clip_id = clip.id;
  const std::size_t mid = clip.middle_frame();
  try {
    row.map_cc = metrics::cc(rankmap::predicted_ranking_map(ranking, clip.width(), clip.height()), clip.saliency[mid]);
  } catch (const UndefinedMetricError&) {
  }
  if (clip.annotations[mid].empty()) return row;
  const auto gt = curation::assign_ranks(clip.annotations[mid], clip.fixations[mid]);
  std::vector<bool> used(gt.size(), false);
  std::vector<int> pred_ranks, gt_ranks;
  for (std::size_t i = 0; i < ranking.objects.size(); ++i) {
    const auto& obj = ranking.objects[i];
    std::vector<std::size_t> candidates;
    for (std::size_t j = 0; j < gt.size(); ++j) {
      if (!used[j] && gt[j].tag == obj.tag) candidates.push_back(j);
    }
    std::optional<std::size_t> pick;
    if (candidates.size() == 1) {
      pick = candidates.front();
    } else if (candidates.size() > 1 && ranking.boxes[i]) {
      double best = 0.5;
      for (std::size_t j : candidates) {
        const double v = iou(*ranking.boxes[i], gt[j].box);
        if (v >= best) {
          best = v;
          pick = j;
        }
      }
    }
    if (!pick) continue;
    used[*pick] = true;
    pred_ranks.push_back(obj.rank);
    gt_ranks.push_back(gt[*pick].rank);
  }
  row.matched = pred_ranks.size();
  if (row.matched >= 2) {
    try {
      row.rank_corr = metrics::spearman(std::span<const int>(pred_ranks), std::span<const int>(gt_ranks));
    } catch (const UndefinedMetricError&) {
    }
  }
  return row;
}

std::string correlation_csv(const std::vector<CorrelationRow>& rows) {
  std::ostringstream os;
  os << "clip,map_cc,rank_corr,matched\n";
  double sum_map = 0.0, sum_rank = 0.0, sum_matched = 0.0;
  std::size_t n_map = 0, n_rank = 0;
  for (const auto& r : rows) {
    os << r.clip_id << ',' << metrics::format_metric(r.map_cc) << ',' << metrics::format_metric(r.rank_corr) << ','
       << r.matched << '\n';
    if (r.map_cc) {
      sum_map += *r.map_cc;
      ++n_map;
    }
    if (r.rank_corr) {
      sum_rank += *r.rank_corr;
      ++n_rank;
    }
    sum_matched += static_cast<double>(r.matched);
  }
  auto mean = [](double s, std::size_t n) { return n ? std::optional<double>(s / static_cast<double>(n)) : std::nullopt; };
  os << "mean," << metrics::format_metric(mean(sum_map, n_map)) << ',' << metrics::format_metric(mean(sum_rank, n_rank))
     << ',' << metrics::format_metric(mean(sum_matched, rows.size())) << '\n';
  return os.str();
}

struct StubServer::Impl {
  httplib::Server server;
  json config = json::object();
  std::vector<VideoClip> clips;
  std::unordered_map<std::string, std::size_t> clip_by_id;
  std::unordered_map<std::uint64_t, std::pair<std::size_t, std::size_t>> frame_by_hash;
  std::thread thread;
  std::string host = "127.0.0.1";
  int port = 0;
  std::atomic<std::size_t> requests{0};

  std::string mllm_text(const std::string& clip_id) const {
    if (config.contains("mllm")) {
      const auto& m = config["mllm"];
      if (m.contains("by_clip") && m["by_clip"].contains(clip_id)) return m["by_clip"][clip_id].get<std::string>();
    }
    if (const auto it = clip_by_id.find(clip_id); it != clip_by_id.end()) {
      return serialize_response(oracle_rank(clips[it->second]));
    }
    if (config.contains("mllm") && config["mllm"].contains("default")) {
      return config["mllm"]["default"].get<std::string>();
    }
    throw TransportError("no response configured for clip '" + clip_id + "'");
  }

  json detections(const std::vector<std::string>& tags, const Image8& img) const {
    json out = json::array();
    auto wanted = [&](const std::string& t) { return std::find(tags.begin(), tags.end(), t) != tags.end(); };
    if (const auto it = frame_by_hash.find(pixel_hash(img)); it != frame_by_hash.end()) {
      for (const auto& a : clips[it->second.first].annotations[it->second.second]) {
        if (!wanted(a.tag)) continue;
        out.push_back({{"tag", a.tag}, {"box", {a.box.x0, a.box.y0, a.box.x1, a.box.y1}}, {"score", 1.0}});
      }
      return out;
    }
    if (config.contains("detections")) {
      for (const auto& d : config["detections"]) {
        if (wanted(d.at("tag").get<std::string>())) out.push_back(d);
      }
    }
    return out;
  }

  void install() {
    server.Post("/mllm", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests;
      try {
        const json body = json::parse(req.body);
        const auto& frames = body.at("frames");
        std::string clip_id;
        if (!frames.empty()) {
          const auto ref = frames.front().get<std::string>();
          clip_id = ref.substr(0, ref.find('/'));
        }
        (void)body.at("instruction").get<std::string>();
        res.set_content(json{{"text", mllm_text(clip_id)}}.dump(), "application/json");
      } catch (const std::exception& e) {
        res.status = 400;
        res.set_content(json{{"error", e.what()}}.dump(), "application/json");
      }
    });
    server.Post("/ground", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests;
      try {
        const json body = json::parse(req.body);
        const auto tags = body.at("tags").get<std::vector<std::string>>();
        const Image8 img = decode_png(base64_decode(body.at("frame").get<std::string>()));
        res.set_content(json{{"detections", detections(tags, img)}}.dump(), "application/json");
      } catch (const std::exception& e) {
        res.status = 400;
        res.set_content(json{{"error", e.what()}}.dump(), "application/json");
      }
    });
  }
};

StubServer::StubServer(const std::string& config_json) : impl_(std::make_unique<Impl>()) {
  try {
    impl_->config = json::parse(config_json);
  } catch (const json::exception& e) {
    throw ParseError(std::string("stub config is not valid JSON: ") + e.what(), config_json);
  }
  if (!impl_->config.is_object()) throw ParseError("stub config must be a JSON object", config_json);
  impl_->install();
}

StubServer::~StubServer() { stop(); }

void StubServer::attach_dataset(const std::filesystem::path& root) {
  impl_->clips = dataset::load_dataset(root);
  for (std::size_t c = 0; c < impl_->clips.size(); ++c) {
    const auto& clip = impl_->clips[c];
    impl_->clip_by_id[clip.id] = c;
    for (std::size_t f = 0; f < clip.frames.size(); ++f) {
      impl_->frame_by_hash[pixel_hash(to_image8(clip.frames[f].image))] = {c, f};
    }
  }
}

int StubServer::start(const std::string& host, int port) {
  impl_->host = host;
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
  } else {
    impl_->port = impl_->server.bind_to_port(host, port) ? port : -1;
  }
  if (impl_->port <= 0) throw TransportError("could not bind stub server on " + host);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void StubServer::listen(const std::string& host, int port) {
  impl_->host = host;
  impl_->port = port;
  if (!impl_->server.listen(host, port)) throw TransportError("could not listen on " + host);
}

void StubServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string StubServer::mllm_url() const {
  return "http://" + impl_->host + ":" + std::to_string(impl_->port) + "/mllm";
}

std::string StubServer::ground_url() const {
  return "http://" + impl_->host + ":" + std::to_string(impl_->port) + "/ground";
}

std::size_t StubServer::requests() const { return impl_->requests.load(); }

}  // namespace salrank::pipeline

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "salrank/core.hpp"
#include "salrank/curation.hpp"
#include "salrank/dataset.hpp"
#include "salrank/diffusion/checkpoint.hpp"
#include "salrank/diffusion/trainer.hpp"
#include "salrank/image_io.hpp"
#include "salrank/metrics.hpp"
#include "salrank/pipeline.hpp"
#include "salrank/plot.hpp"
#include "salrank/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace salrank;

namespace {

constexpr int kInputError = 2;
constexpr int kDivergence = 3;
constexpr int kRemoteFailure = 4;

struct ExitError : std::runtime_error {
  ExitError(int code, const std::string& what) : std::runtime_error(what), code(code) {}
  int code;
};

struct Settings {
  diffusion::TrainConfig train;
  std::string mllm_url;
  std::string ground_url;
  int timeout_ms = 30000;
  pipeline::PromptMode prompt_mode = pipeline::PromptMode::cot;
};

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  int jobs = 1;
};

std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v != nullptr ? v : "";
}

// Service keys are peeled off; everything else goes to the training parser.
Settings load_settings(const Globals& g) {
  Settings s;
  s.mllm_url = env_or_empty("SALRANK_MLLM_URL");
  s.ground_url = env_or_empty("SALRANK_GROUND_URL");
  std::string train_text;
  if (!g.config.empty()) {
    if (!fs::exists(g.config)) throw SpecError("config file not found: " + g.config);
    std::istringstream is(read_text_file(g.config));
    std::string line;
    while (std::getline(is, line)) {
      std::string body = line.substr(0, line.find('#'));
      const auto eq = body.find('=');
      if (eq != std::string::npos) {
        auto strip = [](std::string v) {
          const auto b = v.find_first_not_of(" \t\r");
          const auto e = v.find_last_not_of(" \t\r");
          return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
        };
        const std::string key = strip(body.substr(0, eq));
        const std::string value = strip(body.substr(eq + 1));
        if (key == "mllm_url") {
          s.mllm_url = value;
          continue;
        }
        if (key == "ground_url") {
          s.ground_url = value;
          continue;
        }
        if (key == "timeout_ms") {
          try {
            s.timeout_ms = std::stoi(value);
          } catch (const std::exception&) {
            throw SpecError("timeout_ms must be an integer");
          }
          continue;
        }
        if (key == "prompt_mode") {
          s.prompt_mode = pipeline::parse_prompt_mode(value);
          continue;
        }
      }
      train_text += line + "\n";
    }
  }
  s.train = diffusion::parse_train_config(train_text);
  if (g.seed) s.train.seed = *g.seed;
  return s;
}

std::pair<std::size_t, std::size_t> parse_range(const std::string& text, std::size_t n) {
  if (text.empty()) return {0, n};
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw SpecError("range must look like a:b");
  auto part = [&](const std::string& v, std::size_t fallback) -> std::size_t {
    if (v.empty()) return fallback;
    try {
      std::size_t used = 0;
      const long x = std::stol(v, &used);
      if (used != v.size() || x < 0) throw SpecError("");
      return static_cast<std::size_t>(x);
    } catch (const std::exception&) {
      throw SpecError("bad range bound '" + v + "'");
    }
  };
  const std::size_t a = part(text.substr(0, colon), 0);
  const std::size_t b = std::min(part(text.substr(colon + 1), n), n);
  if (a >= b) throw SpecError("range " + text + " selects no clips");
  return {a, b};
}

std::vector<VideoClip> load_clips(const fs::path& root, const std::string& range) {
  auto clips = dataset::load_dataset(root);
  const auto [a, b] = parse_range(range, clips.size());
  return {std::make_move_iterator(clips.begin() + static_cast<long>(a)),
          std::make_move_iterator(clips.begin() + static_cast<long>(b))};
}

double parse_ratio(const std::string& text) {
  double v = 0.0;
  try {
    std::size_t used = 0;
    const auto slash = text.find('/');
    if (slash == std::string::npos) {
      v = std::stod(text, &used);
      if (used != text.size()) throw SpecError("");
    } else {
      const std::string num = text.substr(0, slash), den = text.substr(slash + 1);
      const double a = std::stod(num, &used);
      if (used != num.size()) throw SpecError("");
      const double b = std::stod(den, &used);
      if (used != den.size() || b == 0.0) throw SpecError("");
      v = a / b;
    }
  } catch (const std::exception&) {
    throw SpecError("bad ratio '" + text + "'");
  }
  if (!(v >= 0.0 && v <= 1.0)) throw SpecError("ratio must lie in [0,1]");
  return v;
}

int cmd_synth(const Globals& g, const std::string& spec_file, const fs::path& out) {
  synth::SynthSpec spec;
  if (!spec_file.empty()) {
    if (!fs::exists(spec_file)) throw SpecError("spec file not found: " + spec_file);
    spec = synth::spec_from_json(read_text_file(spec_file));
  }
  if (g.seed) spec.seed = *g.seed;
  const auto clips = synth::generate(spec);
  dataset::save_dataset(out, clips);
  std::cerr << "wrote " << clips.size() << " clips to " << out.string() << "\n";
  return 0;
}

int cmd_curate(const fs::path& root, const std::string& captions_file) {
  std::map<std::string, std::string> captions;
  if (!captions_file.empty()) {
    if (!fs::exists(captions_file)) throw SpecError("captions file not found: " + captions_file);
    try {
      const json j = json::parse(read_text_file(captions_file));
      for (const auto& [id, text] : j.items()) captions[id] = text.get<std::string>();
    } catch (const json::exception& e) {
      throw ParseError(std::string("captions file: ") + e.what(), captions_file);
    }
  }
  const auto clips = dataset::load_dataset(root);
  std::string lines;
  for (const auto& clip : clips) {
    const auto it = captions.find(clip.id);
    const auto rec =
        curation::emit_record(clip, it != captions.end() ? it->second : pipeline::kPlaceholderCaption);
    lines += curation::to_json_line(rec) + "\n";
    for (std::size_t f = 0; f < rec.frames.size(); ++f) {
      write_gray_png(root / clip.id / dataset::frame_name("rank", f),
                     curation::gt_ranking_map(rec.frames[f], clip.width(), clip.height()), 1.0);
    }
  }
  write_text_file(root / "records.jsonl", lines);
  std::cerr << "curated " << clips.size() << " clips\n";
  return 0;
}

int cmd_train(const Globals& g, const fs::path& root, const fs::path& out, const std::string& range) {
  const Settings s = load_settings(g);
  const auto clips = load_clips(root, range);
  std::vector<std::vector<GrayscaleMap>> maps;
  for (const auto& clip : clips) {
    std::vector<GrayscaleMap> m;
    for (std::size_t f = 0; f < clip.frames.size(); ++f) {
      const fs::path p = root / clip.id / dataset::frame_name("rank", f);
      if (!fs::exists(p)) throw IncompleteInputError("missing " + p.string() + "; run curate first");
      m.push_back(read_gray_png(p));
    }
    maps.push_back(std::move(m));
  }
  const diffusion::SaliencyModel model(s.train.model);
  const auto data = diffusion::build_training_set(clips, maps, s.train.model, s.train.temporal_radius);
  diffusion::TrainResult result;
  try {
    result = diffusion::train(model, data, s.train, [&](int step, double loss) {
      if (step % 100 == 0 || step == s.train.steps) {
        std::fprintf(stderr, "step %d/%d loss %.5f\n", step, s.train.steps, loss);
      }
    });
  } catch (const diffusion::DivergenceError& e) {
    throw ExitError(kDivergence, std::string(e.what()) + "; last finite step " +
                                     std::to_string(e.last_finite_step()));
  }
  fs::create_directories(out);
  diffusion::Checkpoint ck{s.train.model, s.train.diffusion_steps, s.train.beta_start, s.train.beta_end,
                           s.train.seed, s.train.temporal_radius, result.params};
  diffusion::save_checkpoint(out / "checkpoint.bin", ck);
  write_text_file(out / "loss.csv", diffusion::loss_csv(result.losses));
  write_text_file(out / "train_config.txt", diffusion::format_train_config(s.train));
  std::cerr << "wrote " << (out / "checkpoint.bin").string() << "\n";
  return 0;
}

struct Loaded {
  diffusion::Checkpoint ck;
  diffusion::SaliencyModel model;
  diffusion::NoiseSchedule sched;

  explicit Loaded(const fs::path& path)
      : ck(diffusion::load_checkpoint(path)), model(ck.model), sched(ck.schedule()) {}
  pipeline::Decoder decoder() const { return {&model, &ck.params, &sched, ck.temporal_radius}; }
};

struct Remote {
  std::unique_ptr<pipeline::MllmClient> mllm;
  std::unique_ptr<pipeline::GroundingClient> grounding;
  pipeline::Services services;
};

Remote make_remote(const Settings& s, pipeline::Source source) {
  Remote r;
  r.services.mode = s.prompt_mode;
  if (source != pipeline::Source::mllm) return r;
  if (s.mllm_url.empty()) throw SpecError("source mllm needs mllm_url or SALRANK_MLLM_URL");
  const std::chrono::milliseconds timeout(s.timeout_ms);
  r.mllm = std::make_unique<pipeline::HttpMllmClient>(s.mllm_url, timeout);
  r.services.mllm = r.mllm.get();
  if (!s.ground_url.empty()) {
    r.grounding = std::make_unique<pipeline::HttpGroundingClient>(s.ground_url, timeout);
    r.services.grounding = r.grounding.get();
  } else {
    std::cerr << "no grounding endpoint configured; grounding against clip annotations\n";
  }
  return r;
}

json ranking_json(const rankmap::PredictedRanking& pr) {
  json out = json::array();
  for (std::size_t i = 0; i < pr.objects.size(); ++i) {
    json o{{"tag", pr.objects[i].tag}, {"rank", pr.objects[i].rank}, {"box", nullptr}};
    if (const auto& b = pr.boxes[i]) o["box"] = {b->x0, b->y0, b->x1, b->y1};
    out.push_back(std::move(o));
  }
  return out;
}

rankmap::PredictedRanking ranking_from_json(const json& j) {
  rankmap::PredictedRanking pr;
  for (const auto& o : j) {
    pr.objects.push_back({o.at("tag").get<std::string>(), o.at("rank").get<int>()});
    if (o.at("box").is_null()) {
      pr.boxes.emplace_back();
    } else {
      const auto& b = o.at("box");
      pr.boxes.push_back(BoundingBox{b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()});
    }
  }
  pr.validate();
  return pr;
}

int cmd_predict(const Globals& g, const fs::path& root, const fs::path& ckpt_path, const std::string& source_name,
                const std::string& ratio_text, const fs::path& out, const std::string& range) {
  const Settings s = load_settings(g);
  const auto source = pipeline::parse_source(source_name);
  const double ratio = parse_ratio(ratio_text);
  const std::uint64_t seed = g.seed.value_or(0);
  const auto clips = load_clips(root, range);
  const Loaded loaded(ckpt_path);
  const auto decoder = loaded.decoder();
  const Remote remote = make_remote(s, source);

  struct Outcome {
    std::optional<pipeline::PredictResult> result;
    std::string error;
  };
  std::vector<Outcome> outcomes(clips.size());
  pipeline::parallel_for(clips.size(), g.jobs, [&](std::size_t i) {
    try {
      outcomes[i].result = pipeline::predict_clip(clips[i], decoder, ratio, source, remote.services, seed);
    } catch (const TransportError& e) {
      outcomes[i].error = e.what();
    } catch (const ParseError& e) {
      outcomes[i].error = e.what();
    }
  });

  json prov{{"source", pipeline::to_string(source)}, {"ratio", ratio}, {"seed", seed}, {"clips", json::array()}};
  std::size_t failed = 0;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const auto& clip = clips[i];
    json entry{{"id", clip.id}};
    if (!outcomes[i].result) {
      ++failed;
      entry["status"] = "error";
      entry["error"] = outcomes[i].error;
      std::cerr << clip.id << ": " << outcomes[i].error << "\n";
      prov["clips"].push_back(std::move(entry));
      continue;
    }
    const auto& r = *outcomes[i].result;
    entry["status"] = "ok";
    if (r.plan.response) entry["caption"] = r.plan.response->caption;
    entry["ranking"] = ranking_json(r.plan.ranking);
    entry["conditioned"] = r.prediction.conditioned;
    fs::create_directories(out / clip.id);
    write_gray_png(out / clip.id / "rankmap.png", r.plan.map);
    for (std::size_t f = 0; f < r.prediction.maps.size(); ++f) {
      write_gray_png(out / clip.id / dataset::frame_name("pred", f), r.prediction.maps[f]);
    }
    prov["clips"].push_back(std::move(entry));
  }
  fs::create_directories(out);
  write_text_file(out / "provenance.json", prov.dump(2) + "\n");
  std::cerr << "predicted " << clips.size() - failed << "/" << clips.size() << " clips\n";
  if (failed == clips.size()) throw ExitError(kRemoteFailure, "every clip failed");
  return 0;
}

int cmd_eval(const fs::path& pred_dir, const fs::path& root, const std::string& out_file) {
  std::vector<std::string> ids;
  if (fs::is_directory(pred_dir)) {
    for (const auto& e : fs::directory_iterator(pred_dir)) {
      if (e.is_directory() && fs::exists(e.path() / dataset::frame_name("pred", 0))) {
        ids.push_back(e.path().filename().string());
      }
    }
  }
  if (ids.empty()) throw IncompleteInputError("no predictions found in " + pred_dir.string());
  std::sort(ids.begin(), ids.end());
  metrics::MetricReport report;
  for (const auto& id : ids) {
    if (!fs::is_directory(root / id)) throw IncompleteInputError("clip '" + id + "' is not in the dataset");
    const VideoClip clip = dataset::load_clip(root / id);
    std::size_t n_pred = 0;
    for (const auto& e : fs::directory_iterator(pred_dir / id)) {
      const auto name = e.path().filename().string();
      if (name.starts_with("pred_") && name.ends_with(".png")) ++n_pred;
    }
    if (n_pred != clip.frames.size()) {
      throw IncompleteInputError("clip '" + id + "' has " + std::to_string(n_pred) + " predictions for " +
                                 std::to_string(clip.frames.size()) + " frames");
    }
    for (std::size_t f = 0; f < clip.frames.size(); ++f) {
      const fs::path p = pred_dir / id / dataset::frame_name("pred", f);
      if (!fs::exists(p)) throw IncompleteInputError("missing " + p.string());
      const GrayscaleMap pred = read_gray_png(p);
      if (pred.width() != clip.width() || pred.height() != clip.height()) {
        throw DimensionError(p.string() + " does not match the frame size");
      }
      char label[32];
      std::snprintf(label, sizeof label, "/%04zu", f);
      report.frames.push_back(metrics::evaluate_frame(id + label, pred, clip.saliency[f], clip.fixations[f]));
    }
  }
  const fs::path out = out_file.empty() ? pred_dir / "metrics.csv" : fs::path(out_file);
  const std::string csv = report.to_csv();
  write_text_file(out, csv);
  std::cout << csv.substr(csv.rfind("mean"));
  return 0;
}

const std::vector<std::pair<std::string, double>>& sweep_ratios() {
  static const std::vector<std::pair<std::string, double>> r{
      {"0", 0.0}, {"1/16", 1.0 / 16}, {"1/8", 1.0 / 8}, {"1/4", 0.25}, {"1/2", 0.5}, {"1", 1.0}};
  return r;
}

int cmd_ratio_sweep(const Globals& g, const fs::path& root, const fs::path& ckpt_path,
                    const std::string& source_name, const fs::path& out, const std::string& range) {
  const Settings s = load_settings(g);
  const auto source = pipeline::parse_source(source_name);
  const std::uint64_t seed = g.seed.value_or(0);
  const auto clips = load_clips(root, range);
  const Loaded loaded(ckpt_path);
  const auto decoder = loaded.decoder();
  const Remote remote = make_remote(s, source);

  // Per-frame samples depend only on the frame seed and whether the frame is
  // conditioned, so every ratio is assembled from two passes.
  struct ClipSamples {
    std::vector<GrayscaleMap> plain, conditioned;
    std::string error;
  };
  std::vector<ClipSamples> samples(clips.size());
  pipeline::parallel_for(clips.size(), g.jobs, [&](std::size_t i) {
    const auto& clip = clips[i];
    try {
      const auto plan = pipeline::plan_ranking(clip, source, remote.services, seed);
      for (std::size_t f = 0; f < clip.frames.size(); ++f) {
        samples[i].plain.push_back(pipeline::decode_frame(clip, f, nullptr, decoder, seed));
        samples[i].conditioned.push_back(pipeline::decode_frame(clip, f, &plan.map, decoder, seed));
      }
    } catch (const TransportError& e) {
      samples[i].error = e.what();
    } catch (const ParseError& e) {
      samples[i].error = e.what();
    }
  });
  std::size_t failed = 0;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (!samples[i].error.empty()) {
      ++failed;
      std::cerr << clips[i].id << ": " << samples[i].error << "\n";
    }
  }
  if (failed == clips.size()) throw ExitError(kRemoteFailure, "every clip failed");

  std::string csv = "ratio,auc_j,cc,sim,nss\n";
  std::vector<double> cc_curve;
  for (const auto& [label, ratio] : sweep_ratios()) {
    metrics::MetricReport report;
    for (std::size_t i = 0; i < clips.size(); ++i) {
      if (!samples[i].error.empty()) continue;
      const auto& clip = clips[i];
      const auto on = pipeline::conditioned_frames(clip.frames.size(), ratio);
      for (std::size_t f = 0; f < clip.frames.size(); ++f) {
        const bool cond = std::find(on.begin(), on.end(), f) != on.end();
        report.frames.push_back(metrics::evaluate_frame(clip.id, cond ? samples[i].conditioned[f] : samples[i].plain[f],
                                                        clip.saliency[f], clip.fixations[f]));
      }
    }
    const auto m = report.mean();
    csv += label + "," + metrics::format_metric(m.auc_j) + "," + metrics::format_metric(m.cc) + "," +
           metrics::format_metric(m.sim) + "," + metrics::format_metric(m.nss) + "\n";
    cc_curve.push_back(m.cc.value_or(0.0));
  }
  fs::create_directories(out);
  write_text_file(out / "sweep.csv", csv);
  write_png(out / "sweep.png", plot::line_plot(cc_curve));
  std::cout << csv;
  return 0;
}

int cmd_correlate(const fs::path& pred_dir, const fs::path& root, const std::string& out_file) {
  const fs::path prov_path = pred_dir / "provenance.json";
  if (!fs::exists(prov_path)) throw IncompleteInputError("missing " + prov_path.string());
  std::vector<pipeline::CorrelationRow> rows;
  try {
    const json prov = json::parse(read_text_file(prov_path));
    for (const auto& entry : prov.at("clips")) {
      const std::string id = entry.at("id").get<std::string>();
      if (entry.at("status") != "ok") {
        rows.push_back({id, std::nullopt, std::nullopt, 0});
        continue;
      }
      if (!fs::is_directory(root / id)) throw IncompleteInputError("clip '" + id + "' is not in the dataset");
      rows.push_back(pipeline::correlate_clip(dataset::load_clip(root / id), ranking_from_json(entry.at("ranking"))));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("provenance.json: ") + e.what(), prov_path.string());
  }
  const fs::path out = out_file.empty() ? pred_dir / "correlation.csv" : fs::path(out_file);
  const std::string csv = pipeline::correlation_csv(rows);
  write_text_file(out, csv);
  std::cout << csv.substr(csv.rfind("mean"));
  return 0;
}

int cmd_stub_server(const std::string& config_file, const std::string& data, const std::string& host, int port) {
  std::string config = "{}";
  if (!config_file.empty()) {
    if (!fs::exists(config_file)) throw SpecError("stub config not found: " + config_file);
    config = read_text_file(config_file);
  }
  pipeline::StubServer server(config);
  if (!data.empty()) server.attach_dataset(data);
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  server.start(host, port);
  std::cout << "mllm " << server.mllm_url() << "\nground " << server.ground_url() << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  server.stop();
  std::cerr << "served " << server.requests() << " requests\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ranking-conditioned video saliency toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for sampling, random plans and training");
  app.add_option("--config", g.config, "key = value settings file");
  app.add_option("--jobs", g.jobs, "Clip-level worker threads")->check(CLI::PositiveNumber);

  std::function<int()> run;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string spec_file;
  fs::path synth_out;
  synth->add_option("spec", spec_file, "Generator settings (JSON); defaults when omitted");
  synth->add_option("--out", synth_out, "Output dataset directory")->required();
  synth->callback([&] { run = [&] { return cmd_synth(g, spec_file, synth_out); }; });

  auto* curate = app.add_subcommand("curate", "Rank objects and write gt ranking maps");
  fs::path curate_data;
  std::string captions;
  curate->add_option("data", curate_data, "Dataset directory")->required();
  curate->add_option("--captions", captions, "JSON object mapping clip id to caption");
  curate->callback([&] { run = [&] { return cmd_curate(curate_data, captions); }; });

  auto* train = app.add_subcommand("train", "Train the conditioned diffusion decoder");
  fs::path train_data, train_out;
  std::string train_range;
  train->add_option("data", train_data, "Curated dataset directory")->required();
  train->add_option("--out", train_out, "Output directory")->required();
  train->add_option("--range", train_range, "Clip index range a:b");
  train->callback([&] { run = [&] { return cmd_train(g, train_data, train_out, train_range); }; });

  auto* predict = app.add_subcommand("predict", "Decode saliency maps for every frame");
  fs::path predict_data, predict_ckpt, predict_out;
  std::string source = "oracle", ratio = "1/4", predict_range;
  predict->add_option("data", predict_data, "Dataset directory")->required();
  predict->add_option("--checkpoint", predict_ckpt, "Trained checkpoint")->required();
  predict->add_option("--source", source, "oracle, mllm or random");
  predict->add_option("--ratio", ratio, "Fraction of conditioned frames, e.g. 1/4");
  predict->add_option("--out", predict_out, "Output directory")->required();
  predict->add_option("--range", predict_range, "Clip index range a:b");
  predict->callback([&] {
    run = [&] { return cmd_predict(g, predict_data, predict_ckpt, source, ratio, predict_out, predict_range); };
  });

  auto* eval = app.add_subcommand("eval", "Score predictions with AUC-J, CC, SIM and NSS");
  fs::path eval_pred, eval_data;
  std::string eval_out;
  eval->add_option("pred", eval_pred, "Prediction directory")->required();
  eval->add_option("data", eval_data, "Dataset directory")->required();
  eval->add_option("--out", eval_out, "CSV path (default <pred>/metrics.csv)");
  eval->callback([&] { run = [&] { return cmd_eval(eval_pred, eval_data, eval_out); }; });

  auto* sweep = app.add_subcommand("ratio-sweep", "Metrics for ratios 0, 1/16, 1/8, 1/4, 1/2, 1");
  fs::path sweep_data, sweep_ckpt, sweep_out;
  std::string sweep_source = "oracle", sweep_range;
  sweep->add_option("data", sweep_data, "Dataset directory")->required();
  sweep->add_option("--checkpoint", sweep_ckpt, "Trained checkpoint")->required();
  sweep->add_option("--source", sweep_source, "oracle, mllm or random");
  sweep->add_option("--out", sweep_out, "Output directory")->required();
  sweep->add_option("--range", sweep_range, "Clip index range a:b");
  sweep->callback([&] {
    run = [&] { return cmd_ratio_sweep(g, sweep_data, sweep_ckpt, sweep_source, sweep_out, sweep_range); };
  });

  auto* correlate = app.add_subcommand("correlate", "Map and rank correlation of predicted rankings");
  fs::path corr_pred, corr_data;
  std::string corr_out;
  correlate->add_option("pred", corr_pred, "Prediction directory with provenance.json")->required();
  correlate->add_option("data", corr_data, "Dataset directory")->required();
  correlate->add_option("--out", corr_out, "CSV path (default <pred>/correlation.csv)");
  correlate->callback([&] { run = [&] { return cmd_correlate(corr_pred, corr_data, corr_out); }; });

  auto* stub = app.add_subcommand("stub-server", "Serve the bundled MLLM and grounding stand-ins");
  std::string stub_config, stub_data, host = "127.0.0.1";
  int port = 8080;
  stub->add_option("--stub-config", stub_config, "Canned replies (JSON)");
  stub->add_option("--data", stub_data, "Answer from this dataset's annotations");
  stub->add_option("--host", host, "Bind address");
  stub->add_option("--port", port, "Port, 0 picks a free one");
  stub->callback([&] { run = [&] { return cmd_stub_server(stub_config, stub_data, host, port); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kInputError;
  }

  try {
    return run();
  } catch (const ExitError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code;
  } catch (const NumericDivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDivergence;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

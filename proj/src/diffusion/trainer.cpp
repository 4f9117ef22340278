#include "salrank/diffusion/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "salrank/curation.hpp"
#include "salrank/random.hpp"

namespace salrank::diffusion {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  T out{};
  is >> out;
  if (is.fail() || !is.eof()) throw SpecError("config key '" + key + "' has invalid value '" + value + "'");
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (steps < 1) throw SpecError("steps must be >= 1");
  if (batch_size < 1) throw SpecError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw SpecError("learning_rate must be positive");
  if (ratio < 0.0 || ratio > 1.0) throw SpecError("ratio must lie in [0,1]");
  if (temporal_radius < 0) throw SpecError("temporal_radius must be >= 0");
  try {
    (void)schedule();
    model.validate();
  } catch (const Error& e) {
    throw SpecError(e.what());
  }
}

TrainConfig parse_train_config(const std::string& text, TrainConfig cfg) {
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw SpecError("config line " + std::to_string(lineno) + " is not 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "steps") cfg.steps = parse_number<int>(key, value);
    else if (key == "T") cfg.diffusion_steps = parse_number<int>(key, value);
    else if (key == "beta_start") cfg.beta_start = parse_number<double>(key, value);
    else if (key == "beta_end") cfg.beta_end = parse_number<double>(key, value);
    else if (key == "learning_rate") cfg.learning_rate = parse_number<double>(key, value);
    else if (key == "lr_schedule") {
      if (value != "cosine" && value != "constant") throw SpecError("lr_schedule must be cosine or constant");
      cfg.cosine_decay = value == "cosine";
    } else if (key == "batch_size") cfg.batch_size = parse_number<int>(key, value);
    else if (key == "ratio") cfg.ratio = parse_number<double>(key, value);
    else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "temporal_radius") cfg.temporal_radius = parse_number<int>(key, value);
    else if (key == "enc_channels") cfg.model.enc_channels = parse_number<int>(key, value);
    else if (key == "feat_channels") cfg.model.feat_channels = parse_number<int>(key, value);
    else if (key == "c1") cfg.model.c1 = parse_number<int>(key, value);
    else if (key == "c2") cfg.model.c2 = parse_number<int>(key, value);
    else if (key == "c3") cfg.model.c3 = parse_number<int>(key, value);
    else if (key == "time_channels") cfg.model.time_channels = parse_number<int>(key, value);
    else throw SpecError("unknown config key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

std::string format_train_config(const TrainConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "steps = " << c.steps << "\nT = " << c.diffusion_steps << "\nbeta_start = " << c.beta_start
     << "\nbeta_end = " << c.beta_end << "\nlearning_rate = " << c.learning_rate
     << "\nlr_schedule = " << (c.cosine_decay ? "cosine" : "constant")
     << "\nbatch_size = " << c.batch_size << "\nratio = " << c.ratio << "\nseed = " << c.seed
     << "\ntemporal_radius = " << c.temporal_radius << "\nenc_channels = " << c.model.enc_channels
     << "\nfeat_channels = " << c.model.feat_channels << "\nc1 = " << c.model.c1 << "\nc2 = " << c.model.c2
     << "\nc3 = " << c.model.c3 << "\ntime_channels = " << c.model.time_channels << "\n";
  return os.str();
}

std::vector<const FeatureTensor*> frame_window(const VideoClip& clip, std::size_t frame, int radius) {
  const auto n = static_cast<long>(clip.frames.size());
  const long lo = std::max(0L, static_cast<long>(frame) - radius);
  const long hi = std::min(n - 1, static_cast<long>(frame) + radius);
  std::vector<const FeatureTensor*> out;
  for (long i = lo; i <= hi; ++i) out.push_back(&clip.frames[static_cast<std::size_t>(i)].image);
  return out;
}

std::vector<GrayscaleMap> gt_rank_maps(const VideoClip& clip) {
  std::vector<GrayscaleMap> maps;
  for (std::size_t f = 0; f < clip.frames.size(); ++f) {
    const auto ranked = curation::assign_ranks(clip.annotations[f], clip.fixations[f]);
    maps.push_back(curation::gt_ranking_map_unit(ranked, clip.width(), clip.height()));
  }
  return maps;
}

TrainingSet build_training_set(const std::vector<VideoClip>& clips,
                               const std::vector<std::vector<GrayscaleMap>>& rank_maps,
                               const ModelConfig& model, int temporal_radius) {
  if (clips.size() != rank_maps.size()) throw DimensionError("one ranking-map list per clip required");
  TrainingSet set;
  for (std::size_t c = 0; c < clips.size(); ++c) {
    const auto& clip = clips[c];
    if (clip.width() != model.width || clip.height() != model.height) {
      throw DimensionError("clip '" + clip.id + "' does not match the model size");
    }
    if (rank_maps[c].size() != clip.frames.size()) throw DimensionError("ranking maps missing for a frame");
    for (std::size_t f = 0; f < clip.frames.size(); ++f) {
      set.targets.push_back(to_signed(clip.saliency[f]));
      set.windows.push_back(frame_window(clip, f, temporal_radius));
      set.rank_maps.push_back(resize_nearest(rank_maps[c][f], model.feat_width(), model.feat_height()));
    }
  }
  if (set.size() == 0) throw EmptyInputError("training set is empty");
  return set;
}

TrainResult train(const SaliencyModel& model, const TrainingSet& data, const TrainConfig& config,
                  const std::function<void(int, double)>& on_step) {
  config.validate();
  const NoiseSchedule sched = config.schedule();
  TrainResult result{model.init_params(derive_seed(config.seed, 0x5eed)), {}};
  auto& theta = result.params.values;
  std::vector<double> m1(theta.size(), 0.0);
  std::vector<double> m2(theta.size(), 0.0);
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;

  const GrayscaleMap zero_map(model.config().feat_width(), model.config().feat_height(), 0.0);
  const auto B = static_cast<std::size_t>(config.batch_size);
  std::vector<TrainItem> batch(B);
  std::vector<int> t_draws(B);
  std::vector<FeatureTensor> noise(B);

  for (int step = 1; step <= config.steps; ++step) {
    std::mt19937_64 rng(derive_seed(config.seed, 1, static_cast<std::uint64_t>(step)));
    std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
    std::uniform_int_distribution<int> pick_t(1, sched.steps());
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t i = pick(rng);
      batch[b].m0 = &data.targets[i];
      batch[b].frames = data.windows[i];
      batch[b].rank_map = unit(rng) < config.ratio ? data.rank_maps[i] : zero_map;
      t_draws[b] = pick_t(rng);
      noise[b] = FeatureTensor(1, data.targets[i].height, data.targets[i].width);
      for (double& v : noise[b].data) v = normal(rng);
    }

    StepResult r;
    try {
      r = model.training_step(batch, t_draws, noise, result.params, sched);
    } catch (const NumericDivergenceError& e) {
      throw DivergenceError(std::string(e.what()) + " at step " + std::to_string(step), step - 1);
    }
    const double lr = config.cosine_decay
                          ? 0.5 * config.learning_rate *
                                (1.0 + std::cos(std::numbers::pi * (step - 1) / config.steps))
                          : config.learning_rate;
    const double c1 = 1.0 - std::pow(kBeta1, step);
    const double c2 = 1.0 - std::pow(kBeta2, step);
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double g = r.grad[j];
      m1[j] = kBeta1 * m1[j] + (1.0 - kBeta1) * g;
      m2[j] = kBeta2 * m2[j] + (1.0 - kBeta2) * g * g;
      theta[j] -= lr * (m1[j] / c1) / (std::sqrt(m2[j] / c2) + kEps);
    }
    if (!result.params.all_finite()) {
      throw DivergenceError("parameters became non-finite at step " + std::to_string(step), step - 1);
    }
    result.losses.push_back(r.loss);
    if (on_step) on_step(step, r.loss);
  }
  return result;
}

std::string loss_csv(const std::vector<double>& losses) {
  std::ostringstream os;
  os << "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", i + 1, losses[i]);
    os << buf;
  }
  return os.str();
}

}  // namespace salrank::diffusion

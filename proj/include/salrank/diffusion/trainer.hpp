#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "salrank/core.hpp"
#include "salrank/diffusion/model.hpp"
#include "salrank/diffusion/schedule.hpp"

namespace salrank::diffusion {

struct TrainConfig {
  int steps = 2000;
  int diffusion_steps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.07;
  double learning_rate = 2e-3;
  /// Cosine decay of the learning rate to zero over `steps`; constant otherwise.
  bool cosine_decay = true;
  int batch_size = 8;
  /// Probability that a training example sees its ranking map; otherwise
  /// it is conditioned on a zero map.
  double ratio = 0.5;
  std::uint64_t seed = 0;
  /// Frames on each side of the target frame averaged by the encoder.
  int temporal_radius = 1;
  ModelConfig model;

  NoiseSchedule schedule() const {
    return NoiseSchedule::linear(diffusion_steps, beta_start, beta_end);
  }
  void validate() const;
};

/// Parses `key = value` lines; `#` starts a comment. Unknown keys are errors.
TrainConfig parse_train_config(const std::string& text, TrainConfig base = {});
std::string format_train_config(const TrainConfig& config);

/// Targets, frame windows and feature-grid ranking maps for every frame of
/// every clip. Holds pointers into `clips`, which must outlive it.
struct TrainingSet {
  std::vector<FeatureTensor> targets;
  std::vector<std::vector<const FeatureTensor*>> windows;
  std::vector<GrayscaleMap> rank_maps;

  std::size_t size() const { return targets.size(); }
};

/// `rank_maps[c][f]` is the unit-range gt ranking map of frame f of clip c.
TrainingSet build_training_set(const std::vector<VideoClip>& clips,
                               const std::vector<std::vector<GrayscaleMap>>& rank_maps,
                               const ModelConfig& model, int temporal_radius);

/// gt ranking maps (unit range, 8-bit quantized) for every frame of a clip.
std::vector<GrayscaleMap> gt_rank_maps(const VideoClip& clip);

/// Frames [f - radius, f + radius] clipped to the clip.
std::vector<const FeatureTensor*> frame_window(const VideoClip& clip, std::size_t frame, int radius);

class DivergenceError : public NumericDivergenceError {
 public:
  DivergenceError(const std::string& what, int last_finite_step)
      : NumericDivergenceError(what), last_finite_step_(last_finite_step) {}
  int last_finite_step() const { return last_finite_step_; }

 private:
  int last_finite_step_;
};

struct TrainResult {
  DenoiserParams params;
  std::vector<double> losses;
};

/// Adam on the joint encoder/denoiser parameters. Deterministic for a fixed
/// config seed. Throws DivergenceError on a non-finite loss.
TrainResult train(const SaliencyModel& model, const TrainingSet& data, const TrainConfig& config,
                  const std::function<void(int, double)>& on_step = {});

std::string loss_csv(const std::vector<double>& losses);

}  // namespace salrank::diffusion

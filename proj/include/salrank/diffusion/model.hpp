#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "salrank/core.hpp"
#include "salrank/diffusion/layers.hpp"
#include "salrank/diffusion/schedule.hpp"

namespace salrank::diffusion {

/// Architecture of the frame encoder plus the three-level conditioned
/// encoder-decoder denoiser. Map sides must be multiples of 4.
struct ModelConfig {
  int width = 32;
  int height = 32;
  int enc_channels = 8;
  int feat_channels = 8;
  int c1 = 12;
  int c2 = 24;
  int c3 = 48;
  int time_channels = 4;

  int feat_width() const { return width / 4; }
  int feat_height() const { return height / 4; }
  int cond_channels() const { return feat_channels + 1; }
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

struct ParamBlock {
  std::string name;
  std::vector<int> dims;
  std::size_t offset = 0;
  std::size_t size = 0;

  bool operator==(const ParamBlock&) const = default;
};

/// Layer-shape manifest; total equals the parameter vector length.
struct ParamManifest {
  std::vector<ParamBlock> blocks;
  std::size_t total = 0;

  const ParamBlock& find(const std::string& name) const;
  bool operator==(const ParamManifest&) const = default;
};

/// Flat weights of encoder and denoiser, trained jointly.
struct DenoiserParams {
  ParamManifest manifest;
  std::vector<double> values;

  std::span<const double> block(const ParamBlock& b) const {
    return {values.data() + b.offset, b.size};
  }
  bool all_finite() const;
};

/// One training example: target map in [-1,1], the frames whose mean
/// encoding conditions it, and the ranking map on the feature grid (all
/// zero when the frame is left unconditioned).
struct TrainItem {
  const FeatureTensor* m0 = nullptr;
  std::vector<const FeatureTensor*> frames;
  GrayscaleMap rank_map;
};

struct StepResult {
  double loss = 0.0;
  std::vector<double> grad;
};

class SaliencyModel {
 public:
  explicit SaliencyModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  const ParamManifest& manifest() const { return manifest_; }

  /// He-initialized weights, zero biases.
  DenoiserParams init_params(std::uint64_t seed) const;
  DenoiserParams zero_params() const;

  /// Mean over frames of the strided convolutional encoding (H/4 x W/4).
  FeatureTensor encode_frames(std::span<const FeatureTensor* const> frames,
                              const DenoiserParams& params) const;
  FeatureTensor encode_frames(std::span<const Frame> frames, const DenoiserParams& params) const;

  /// cond = ranking map (x) encoded features, resized to the feature grid.
  FeatureTensor make_condition(const GrayscaleMap& rank_map, const FeatureTensor& features) const;

  /// Raw network output (x0 estimate before clamping).
  FeatureTensor predict_x0(const FeatureTensor& mt, int t, const FeatureTensor& cond,
                           const DenoiserParams& params, const NoiseSchedule& sched) const;

  /// x0 estimate clamped to [-1,1].
  FeatureTensor denoise(const FeatureTensor& mt, int t, const FeatureTensor& cond,
                        const DenoiserParams& params, const NoiseSchedule& sched) const;

  /// Mean over items of ||m0 - D(m_t, t, cond)||^2 and its analytic gradient
  /// with respect to every encoder and denoiser parameter.
  StepResult training_step(std::span<const TrainItem> batch, std::span<const int> t_draws,
                           std::span<const FeatureTensor> noise, const DenoiserParams& params,
                           const NoiseSchedule& sched) const;

  /// Deterministic reverse trajectory T..1 from seeded Gaussian noise,
  /// mapped back to a [0,1] saliency map.
  GrayscaleMap sample(const FeatureTensor& cond, const DenoiserParams& params,
                      const NoiseSchedule& sched, std::uint64_t seed) const;

 private:
  struct Layer {
    std::string name;
    layers::ConvSpec spec;
  };
  struct EncoderCache;
  struct DenoiserCache;

  FeatureTensor encode_one(const FeatureTensor& frame, const DenoiserParams& params,
                           EncoderCache* cache) const;
  void encode_one_backward(const FeatureTensor& dfeat, const EncoderCache& cache,
                           const DenoiserParams& params, std::span<double> grad) const;
  FeatureTensor time_embedding(int t, int h, int w, const NoiseSchedule& sched) const;
  FeatureTensor forward(const FeatureTensor& mt, int t, const FeatureTensor& cond,
                        const DenoiserParams& params, const NoiseSchedule& sched,
                        DenoiserCache* cache) const;
  /// Returns dL/dcond.
  FeatureTensor backward(const FeatureTensor& dout, const DenoiserCache& cache,
                         const DenoiserParams& params, std::span<double> grad) const;

  FeatureTensor conv(const Layer& layer, const FeatureTensor& x, const DenoiserParams& params,
                     layers::ConvCache& cache) const;
  FeatureTensor conv_back(const Layer& layer, const FeatureTensor& dy, const layers::ConvCache& cache,
                          const DenoiserParams& params, std::span<double> grad) const;

  ModelConfig config_;
  ParamManifest manifest_;
  std::vector<Layer> layers_;
  std::vector<std::size_t> weight_offset_;
  std::vector<std::size_t> bias_offset_;
};

}  // namespace salrank::diffusion

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "salrank/core.hpp"

namespace salrank::synth {

/// Blob-world generator settings. Each clip holds `weights.size()` disks;
/// disk k attracts a fraction weights[k] of the fixations.
struct SynthSpec {
  int n_clips = 40;
  int frames_per_clip = 8;
  int width = 32;
  int height = 32;
  double radius_min = 3.2;
  double radius_max = 5.3;
  double max_speed = 0.5;  // pixels per frame
  std::vector<double> weights{0.6, 0.3, 0.1};
  int n_fix = 50;
  double blur_sigma = 0.0;  // <= 0 selects width / 30
  double background_noise = 0.15;
  std::uint64_t seed = 0;
  std::string id_prefix = "clip";

  int disks() const { return static_cast<int>(weights.size()); }
  double effective_sigma() const { return blur_sigma > 0.0 ? blur_sigma : width / 30.0; }
  /// Throws SpecError on infeasible geometry or malformed weights.
  void validate() const;
};

SynthSpec spec_from_json(const std::string& text);
std::string spec_to_json(const SynthSpec& spec);

/// Frames and saliency maps come out already quantized to 8 bits, so a
/// save/load round trip through PNG is lossless.
std::vector<VideoClip> generate(const SynthSpec& spec);

/// Separable Gaussian blur with zero padding, truncated at 3 sigma.
GrayscaleMap gaussian_blur(const GrayscaleMap& map, double sigma);

}  // namespace salrank::synth

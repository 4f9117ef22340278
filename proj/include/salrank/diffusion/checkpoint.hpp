#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "salrank/diffusion/model.hpp"
#include "salrank/diffusion/schedule.hpp"

namespace salrank::diffusion {

/// Everything needed to rebuild a trained decoder.
struct Checkpoint {
  ModelConfig model;
  int diffusion_steps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.07;
  std::uint64_t seed = 0;
  int temporal_radius = 1;
  DenoiserParams params;

  NoiseSchedule schedule() const { return NoiseSchedule::linear(diffusion_steps, beta_start, beta_end); }
};

// Binary layout, all integers and floats little-endian:
//   "SALRCKPT" | u32 version | model config (8 x i32)
//   | u32 T | f64 beta_start | f64 beta_end | u64 seed | u32 temporal radius
//   | u32 block count | per block: u32 name length, name, u32 ndims, i32 dims
//   | u64 parameter count | f32 parameters
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace salrank::diffusion

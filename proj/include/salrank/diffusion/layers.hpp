#pragma once

#include <span>
#include <vector>

#include "salrank/core.hpp"

// Forward/backward primitives for the small convolutional networks. Weights
// are laid out [out][in][k][k]; activations are FeatureTensor (C x H x W).
namespace salrank::diffusion::layers {

struct ConvSpec {
  int in = 0;
  int out = 0;
  int kernel = 3;
  int stride = 1;

  int pad() const { return kernel / 2; }
  int out_extent(int n) const { return (n + 2 * pad() - kernel) / stride + 1; }
  std::size_t weight_count() const {
    return static_cast<std::size_t>(out) * in * kernel * kernel;
  }
};

/// Convolution output plus the im2col buffer the backward pass needs.
struct ConvCache {
  std::vector<double> col;
  int in_h = 0;
  int in_w = 0;
};

FeatureTensor conv_forward(const FeatureTensor& x, std::span<const double> weight,
                           std::span<const double> bias, const ConvSpec& spec, ConvCache& cache);

/// Accumulates into dweight / dbias and returns dL/dx.
FeatureTensor conv_backward(const FeatureTensor& dy, const ConvCache& cache,
                            std::span<const double> weight, const ConvSpec& spec,
                            std::span<double> dweight, std::span<double> dbias);

void relu_inplace(FeatureTensor& x);
/// Zeroes dy wherever the (post-activation) output is not positive.
void relu_backward_inplace(FeatureTensor& dy, const FeatureTensor& y);

FeatureTensor avg_pool2(const FeatureTensor& x);
FeatureTensor avg_pool2_backward(const FeatureTensor& dy);

FeatureTensor upsample2(const FeatureTensor& x);
FeatureTensor upsample2_backward(const FeatureTensor& dy);

FeatureTensor concat(std::initializer_list<const FeatureTensor*> parts);
/// Splits along channels into pieces of the given channel counts.
std::vector<FeatureTensor> split(const FeatureTensor& x, std::initializer_list<int> channels);

}  // namespace salrank::diffusion::layers

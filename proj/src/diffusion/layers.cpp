#include "salrank/diffusion/layers.hpp"

#include <Eigen/Core>
#include <algorithm>

namespace salrank::diffusion::layers {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMatrix>;
using ConstMapRow = Eigen::Map<const RowMatrix>;

void check_input(const FeatureTensor& x, const ConvSpec& spec) {
  if (x.channels != spec.in) throw DimensionError("conv input channel mismatch");
}

}  // namespace

FeatureTensor conv_forward(const FeatureTensor& x, std::span<const double> weight,
                           std::span<const double> bias, const ConvSpec& spec, ConvCache& cache) {
  check_input(x, spec);
  const int k = spec.kernel;
  const int s = spec.stride;
  const int p = spec.pad();
  const int ho = spec.out_extent(x.height);
  const int wo = spec.out_extent(x.width);
  const int rows = spec.in * k * k;
  const int cols = ho * wo;

  cache.in_h = x.height;
  cache.in_w = x.width;
  cache.col.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  for (int ci = 0; ci < spec.in; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = cache.col.data() + static_cast<std::size_t>((ci * k + ky) * k + kx) * cols;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s + ky - p;
          if (iy < 0 || iy >= x.height) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s + kx - p;
            if (ix >= 0 && ix < x.width) row[oy * wo + ox] = x.at(ci, iy, ix);
          }
        }
      }
    }
  }

  FeatureTensor y(spec.out, ho, wo);
  ConstMapRow w(weight.data(), spec.out, rows);
  ConstMapRow col(cache.col.data(), rows, cols);
  MapRow out(y.data.data(), spec.out, cols);
  out.noalias() = w * col;
  for (int co = 0; co < spec.out; ++co) out.row(co).array() += bias[static_cast<std::size_t>(co)];
  return y;
}

FeatureTensor conv_backward(const FeatureTensor& dy, const ConvCache& cache,
                            std::span<const double> weight, const ConvSpec& spec,
                            std::span<double> dweight, std::span<double> dbias) {
  const int k = spec.kernel;
  const int s = spec.stride;
  const int p = spec.pad();
  const int ho = dy.height;
  const int wo = dy.width;
  const int rows = spec.in * k * k;
  const int cols = ho * wo;

  ConstMapRow g(dy.data.data(), spec.out, cols);
  ConstMapRow col(cache.col.data(), rows, cols);
  MapRow dw(dweight.data(), spec.out, rows);
  dw.noalias() += g * col.transpose();
  for (int co = 0; co < spec.out; ++co) dbias[static_cast<std::size_t>(co)] += g.row(co).sum();

  ConstMapRow w(weight.data(), spec.out, rows);
  thread_local std::vector<double> dcol_buf;
  dcol_buf.resize(static_cast<std::size_t>(rows) * cols);
  MapRow dcol(dcol_buf.data(), rows, cols);
  dcol.noalias() = w.transpose() * g;

  FeatureTensor dx(spec.in, cache.in_h, cache.in_w);
  for (int ci = 0; ci < spec.in; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = dcol.data() + static_cast<std::size_t>((ci * k + ky) * k + kx) * cols;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s + ky - p;
          if (iy < 0 || iy >= cache.in_h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s + kx - p;
            if (ix >= 0 && ix < cache.in_w) dx.at(ci, iy, ix) += row[oy * wo + ox];
          }
        }
      }
    }
  }
  return dx;
}

void relu_inplace(FeatureTensor& x) {
  for (double& v : x.data) v = std::max(v, 0.0);
}

void relu_backward_inplace(FeatureTensor& dy, const FeatureTensor& y) {
  for (std::size_t i = 0; i < dy.data.size(); ++i) {
    if (!(y.data[i] > 0.0)) dy.data[i] = 0.0;
  }
}

FeatureTensor avg_pool2(const FeatureTensor& x) {
  FeatureTensor y(x.channels, x.height / 2, x.width / 2);
  for (int c = 0; c < y.channels; ++c) {
    for (int yy = 0; yy < y.height; ++yy) {
      for (int xx = 0; xx < y.width; ++xx) {
        y.at(c, yy, xx) = 0.25 * (x.at(c, 2 * yy, 2 * xx) + x.at(c, 2 * yy, 2 * xx + 1) +
                                  x.at(c, 2 * yy + 1, 2 * xx) + x.at(c, 2 * yy + 1, 2 * xx + 1));
      }
    }
  }
  return y;
}

FeatureTensor avg_pool2_backward(const FeatureTensor& dy) {
  FeatureTensor dx(dy.channels, dy.height * 2, dy.width * 2);
  for (int c = 0; c < dx.channels; ++c) {
    for (int yy = 0; yy < dx.height; ++yy) {
      for (int xx = 0; xx < dx.width; ++xx) dx.at(c, yy, xx) = 0.25 * dy.at(c, yy / 2, xx / 2);
    }
  }
  return dx;
}

FeatureTensor upsample2(const FeatureTensor& x) {
  FeatureTensor y(x.channels, x.height * 2, x.width * 2);
  for (int c = 0; c < y.channels; ++c) {
    for (int yy = 0; yy < y.height; ++yy) {
      for (int xx = 0; xx < y.width; ++xx) y.at(c, yy, xx) = x.at(c, yy / 2, xx / 2);
    }
  }
  return y;
}

FeatureTensor upsample2_backward(const FeatureTensor& dy) {
  FeatureTensor dx(dy.channels, dy.height / 2, dy.width / 2);
  for (int c = 0; c < dy.channels; ++c) {
    for (int yy = 0; yy < dy.height; ++yy) {
      for (int xx = 0; xx < dy.width; ++xx) dx.at(c, yy / 2, xx / 2) += dy.at(c, yy, xx);
    }
  }
  return dx;
}

FeatureTensor concat(std::initializer_list<const FeatureTensor*> parts) {
  const FeatureTensor& first = **parts.begin();
  int channels = 0;
  for (const auto* p : parts) {
    if (p->height != first.height || p->width != first.width) {
      throw DimensionError("concat of tensors with different spatial size");
    }
    channels += p->channels;
  }
  FeatureTensor out(channels, first.height, first.width);
  auto dst = out.data.begin();
  for (const auto* p : parts) dst = std::copy(p->data.begin(), p->data.end(), dst);
  return out;
}

std::vector<FeatureTensor> split(const FeatureTensor& x, std::initializer_list<int> channels) {
  std::vector<FeatureTensor> out;
  auto src = x.data.begin();
  for (int c : channels) {
    FeatureTensor part(c, x.height, x.width);
    const auto n = static_cast<std::ptrdiff_t>(part.data.size());
    std::copy(src, src + n, part.data.begin());
    src += n;
    out.push_back(std::move(part));
  }
  return out;
}

}  // namespace salrank::diffusion::layers

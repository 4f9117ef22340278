#include "salrank/diffusion/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace salrank::diffusion {

namespace {

enum LayerId : std::size_t { kE1, kE2, kD1A, kD1B, kD2A, kD2B, kD3A, kD3B, kU2A, kU2B, kU1A, kU1B, kOut, kLayerCount };

bool is_zero(const GrayscaleMap& m) {
  return std::all_of(m.values().begin(), m.values().end(), [](double v) { return v == 0.0; });
}

}  // namespace

void ModelConfig::validate() const {
  if (width < 4 || height < 4 || width % 4 != 0 || height % 4 != 0) {
    throw DimensionError("model map size must be a positive multiple of 4");
  }
  if (enc_channels < 1 || feat_channels < 1 || c1 < 1 || c2 < 1 || c3 < 1 || time_channels < 0) {
    throw DomainError("model channel counts must be positive");
  }
}

const ParamBlock& ParamManifest::find(const std::string& name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return b;
  }
  throw DomainError("no parameter block named " + name);
}

bool DenoiserParams::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

struct SaliencyModel::EncoderCache {
  layers::ConvCache c1;
  layers::ConvCache c2;
  FeatureTensor a1;
  FeatureTensor a2;
};

struct SaliencyModel::DenoiserCache {
  layers::ConvCache conv[kLayerCount];
  FeatureTensor a, s1, b, s2, c, z, e, g, k, l;
};

SaliencyModel::SaliencyModel(ModelConfig config) : config_(config) {
  config_.validate();
  const auto& c = config_;
  const int E = c.time_channels;
  layers_ = {
      {"enc1", {3, c.enc_channels, 3, 2}},
      {"enc2", {c.enc_channels, c.feat_channels, 3, 2}},
      {"down1a", {1 + E + c.cond_channels(), c.c1, 3, 1}},
      {"down1b", {c.c1, c.c1, 3, 1}},
      {"down2a", {c.c1, c.c2, 3, 1}},
      {"down2b", {c.c2, c.c2, 3, 1}},
      {"mid_a", {c.c2 + c.cond_channels() + E, c.c3, 3, 1}},
      {"mid_b", {c.c3, c.c3, 3, 1}},
      {"up2a", {c.c3 + c.c2, c.c2, 3, 1}},
      {"up2b", {c.c2, c.c2, 3, 1}},
      {"up1a", {c.c2 + c.c1 + c.cond_channels(), c.c1, 3, 1}},
      {"up1b", {c.c1, c.c1, 3, 1}},
      {"out", {c.c1, 1, 1, 1}},
  };
  std::size_t offset = 0;
  for (const auto& layer : layers_) {
    const auto& s = layer.spec;
    weight_offset_.push_back(offset);
    manifest_.blocks.push_back({layer.name + ".weight", {s.out, s.in, s.kernel, s.kernel}, offset, s.weight_count()});
    offset += s.weight_count();
    bias_offset_.push_back(offset);
    manifest_.blocks.push_back({layer.name + ".bias", {s.out}, offset, static_cast<std::size_t>(s.out)});
    offset += static_cast<std::size_t>(s.out);
  }
  manifest_.total = offset;
}

DenoiserParams SaliencyModel::init_params(std::uint64_t seed) const {
  DenoiserParams p{manifest_, std::vector<double>(manifest_.total, 0.0)};
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& s = layers_[i].spec;
    const double fan_in = static_cast<double>(s.in * s.kernel * s.kernel);
    const double gain = i == kOut ? 1.0 : 2.0;
    std::normal_distribution<double> dist(0.0, std::sqrt(gain / fan_in));
    for (std::size_t j = 0; j < s.weight_count(); ++j) p.values[weight_offset_[i] + j] = dist(rng);
  }
  return p;
}

DenoiserParams SaliencyModel::zero_params() const {
  return {manifest_, std::vector<double>(manifest_.total, 0.0)};
}

FeatureTensor SaliencyModel::conv(const Layer& layer, const FeatureTensor& x, const DenoiserParams& params,
                                  layers::ConvCache& cache) const {
  const auto i = static_cast<std::size_t>(&layer - layers_.data());
  const auto& s = layer.spec;
  return layers::conv_forward(x, {params.values.data() + weight_offset_[i], s.weight_count()},
                              {params.values.data() + bias_offset_[i], static_cast<std::size_t>(s.out)}, s,
                              cache);
}

FeatureTensor SaliencyModel::conv_back(const Layer& layer, const FeatureTensor& dy,
                                       const layers::ConvCache& cache, const DenoiserParams& params,
                                       std::span<double> grad) const {
  const auto i = static_cast<std::size_t>(&layer - layers_.data());
  const auto& s = layer.spec;
  return layers::conv_backward(dy, cache, {params.values.data() + weight_offset_[i], s.weight_count()}, s,
                               grad.subspan(weight_offset_[i], s.weight_count()),
                               grad.subspan(bias_offset_[i], static_cast<std::size_t>(s.out)));
}

FeatureTensor SaliencyModel::encode_one(const FeatureTensor& frame, const DenoiserParams& params,
                                        EncoderCache* cache) const {
  if (frame.channels != 3 || frame.width != config_.width || frame.height != config_.height) {
    throw DimensionError("frame does not match the model input size");
  }
  thread_local EncoderCache local;
  EncoderCache& c = cache != nullptr ? *cache : local;
  c.a1 = conv(layers_[kE1], frame, params, c.c1);
  layers::relu_inplace(c.a1);
  c.a2 = conv(layers_[kE2], c.a1, params, c.c2);
  layers::relu_inplace(c.a2);
  return c.a2;
}

void SaliencyModel::encode_one_backward(const FeatureTensor& dfeat, const EncoderCache& cache,
                                        const DenoiserParams& params, std::span<double> grad) const {
  FeatureTensor d2 = dfeat;
  layers::relu_backward_inplace(d2, cache.a2);
  FeatureTensor d1 = conv_back(layers_[kE2], d2, cache.c2, params, grad);
  layers::relu_backward_inplace(d1, cache.a1);
  conv_back(layers_[kE1], d1, cache.c1, params, grad);
}

FeatureTensor SaliencyModel::encode_frames(std::span<const FeatureTensor* const> frames,
                                           const DenoiserParams& params) const {
  if (frames.empty()) throw EmptyInputError("encode_frames needs at least one frame");
  FeatureTensor mean(config_.feat_channels, config_.feat_height(), config_.feat_width());
  for (const FeatureTensor* f : frames) {
    const FeatureTensor e = encode_one(*f, params, nullptr);
    for (std::size_t i = 0; i < mean.data.size(); ++i) mean.data[i] += e.data[i];
  }
  for (double& v : mean.data) v /= static_cast<double>(frames.size());
  return mean;
}

FeatureTensor SaliencyModel::encode_frames(std::span<const Frame> frames, const DenoiserParams& params) const {
  std::vector<const FeatureTensor*> ptrs;
  for (const auto& f : frames) ptrs.push_back(&f.image);
  return encode_frames(std::span<const FeatureTensor* const>(ptrs), params);
}

FeatureTensor SaliencyModel::make_condition(const GrayscaleMap& rank_map, const FeatureTensor& features) const {
  return pointwise_product_concat(resize_nearest(rank_map, features.width, features.height), features);
}

FeatureTensor SaliencyModel::time_embedding(int t, int h, int w, const NoiseSchedule& sched) const {
  FeatureTensor emb(config_.time_channels, h, w);
  const double phase = std::numbers::pi * static_cast<double>(t) / sched.steps();
  for (int j = 0; j < config_.time_channels; ++j) {
    const double freq = static_cast<double>(j / 2 + 1);
    const double v = (j % 2 == 0) ? std::sin(freq * phase) : std::cos(freq * phase);
    std::fill(emb.channel(j).begin(), emb.channel(j).end(), v);
  }
  return emb;
}

FeatureTensor SaliencyModel::forward(const FeatureTensor& mt, int t, const FeatureTensor& cond,
                                     const DenoiserParams& params, const NoiseSchedule& sched,
                                     DenoiserCache* cache) const {
  const auto& cfg = config_;
  if (mt.channels != 1 || mt.width != cfg.width || mt.height != cfg.height) {
    throw DimensionError("noisy map does not match the model input size");
  }
  if (cond.channels != cfg.cond_channels() || cond.width != cfg.feat_width() ||
      cond.height != cfg.feat_height()) {
    throw DimensionError("condition tensor does not match the feature grid");
  }
  if (params.values.size() != manifest_.total) throw DimensionError("parameter vector length mismatch");

  thread_local DenoiserCache local;
  DenoiserCache& c = cache != nullptr ? *cache : local;
  using namespace layers;

  const FeatureTensor temb_full = time_embedding(t, cfg.height, cfg.width, sched);
  const FeatureTensor temb_low = time_embedding(t, cfg.feat_height(), cfg.feat_width(), sched);

  const FeatureTensor cond_full = upsample2(upsample2(cond));
  const FeatureTensor in1 = concat({&mt, &temb_full, &cond_full});
  c.a = conv(layers_[kD1A], in1, params, c.conv[kD1A]);
  relu_inplace(c.a);
  c.s1 = conv(layers_[kD1B], c.a, params, c.conv[kD1B]);
  relu_inplace(c.s1);

  const FeatureTensor p1 = avg_pool2(c.s1);
  c.b = conv(layers_[kD2A], p1, params, c.conv[kD2A]);
  relu_inplace(c.b);
  c.s2 = conv(layers_[kD2B], c.b, params, c.conv[kD2B]);
  relu_inplace(c.s2);

  const FeatureTensor p2 = avg_pool2(c.s2);
  const FeatureTensor in3 = concat({&p2, &cond, &temb_low});
  c.c = conv(layers_[kD3A], in3, params, c.conv[kD3A]);
  relu_inplace(c.c);
  c.z = conv(layers_[kD3B], c.c, params, c.conv[kD3B]);
  relu_inplace(c.z);

  const FeatureTensor up2 = upsample2(c.z);
  const FeatureTensor in4 = concat({&up2, &c.s2});
  c.e = conv(layers_[kU2A], in4, params, c.conv[kU2A]);
  relu_inplace(c.e);
  c.g = conv(layers_[kU2B], c.e, params, c.conv[kU2B]);
  relu_inplace(c.g);

  const FeatureTensor up1 = upsample2(c.g);
  const FeatureTensor in5 = concat({&up1, &c.s1, &cond_full});
  c.k = conv(layers_[kU1A], in5, params, c.conv[kU1A]);
  relu_inplace(c.k);
  c.l = conv(layers_[kU1B], c.k, params, c.conv[kU1B]);
  relu_inplace(c.l);

  return conv(layers_[kOut], c.l, params, c.conv[kOut]);
}

FeatureTensor SaliencyModel::backward(const FeatureTensor& dout, const DenoiserCache& c,
                                      const DenoiserParams& params, std::span<double> grad) const {
  using namespace layers;
  const auto& cfg = config_;

  FeatureTensor dl = conv_back(layers_[kOut], dout, c.conv[kOut], params, grad);
  relu_backward_inplace(dl, c.l);
  FeatureTensor dk = conv_back(layers_[kU1B], dl, c.conv[kU1B], params, grad);
  relu_backward_inplace(dk, c.k);
  auto in5 = split(conv_back(layers_[kU1A], dk, c.conv[kU1A], params, grad),
                   {cfg.c2, cfg.c1, cfg.cond_channels()});

  FeatureTensor dg = upsample2_backward(in5[0]);
  relu_backward_inplace(dg, c.g);
  FeatureTensor de = conv_back(layers_[kU2B], dg, c.conv[kU2B], params, grad);
  relu_backward_inplace(de, c.e);
  auto in4 = split(conv_back(layers_[kU2A], de, c.conv[kU2A], params, grad), {cfg.c3, cfg.c2});

  FeatureTensor dz = upsample2_backward(in4[0]);
  relu_backward_inplace(dz, c.z);
  FeatureTensor dc = conv_back(layers_[kD3B], dz, c.conv[kD3B], params, grad);
  relu_backward_inplace(dc, c.c);
  auto in3 = split(conv_back(layers_[kD3A], dc, c.conv[kD3A], params, grad),
                   {cfg.c2, cfg.cond_channels(), cfg.time_channels});

  FeatureTensor ds2 = avg_pool2_backward(in3[0]);
  for (std::size_t i = 0; i < ds2.data.size(); ++i) ds2.data[i] += in4[1].data[i];
  relu_backward_inplace(ds2, c.s2);
  FeatureTensor db = conv_back(layers_[kD2B], ds2, c.conv[kD2B], params, grad);
  relu_backward_inplace(db, c.b);
  FeatureTensor dp1 = conv_back(layers_[kD2A], db, c.conv[kD2A], params, grad);

  FeatureTensor ds1 = avg_pool2_backward(dp1);
  for (std::size_t i = 0; i < ds1.data.size(); ++i) ds1.data[i] += in5[1].data[i];
  relu_backward_inplace(ds1, c.s1);
  FeatureTensor da = conv_back(layers_[kD1B], ds1, c.conv[kD1B], params, grad);
  relu_backward_inplace(da, c.a);
  auto in1 = split(conv_back(layers_[kD1A], da, c.conv[kD1A], params, grad),
                   {1, cfg.time_channels, cfg.cond_channels()});

  for (std::size_t i = 0; i < in5[2].data.size(); ++i) in5[2].data[i] += in1[2].data[i];
  FeatureTensor dcond = upsample2_backward(upsample2_backward(in5[2]));
  for (std::size_t i = 0; i < dcond.data.size(); ++i) dcond.data[i] += in3[1].data[i];
  return dcond;
}

FeatureTensor SaliencyModel::predict_x0(const FeatureTensor& mt, int t, const FeatureTensor& cond,
                                        const DenoiserParams& params, const NoiseSchedule& sched) const {
  return forward(mt, t, cond, params, sched, nullptr);
}

FeatureTensor SaliencyModel::denoise(const FeatureTensor& mt, int t, const FeatureTensor& cond,
                                     const DenoiserParams& params, const NoiseSchedule& sched) const {
  FeatureTensor out = forward(mt, t, cond, params, sched, nullptr);
  for (double& v : out.data) v = std::clamp(v, -1.0, 1.0);
  return out;
}

StepResult SaliencyModel::training_step(std::span<const TrainItem> batch, std::span<const int> t_draws,
                                        std::span<const FeatureTensor> noise, const DenoiserParams& params,
                                        const NoiseSchedule& sched) const {
  if (batch.empty()) throw EmptyInputError("training batch is empty");
  if (t_draws.size() != batch.size() || noise.size() != batch.size()) {
    throw DimensionError("t_draws and noise must match the batch size");
  }
  StepResult result;
  result.grad.assign(manifest_.total, 0.0);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const TrainItem& item = batch[b];
    const int t = t_draws[b];
    if (t < 1 || t > sched.steps()) throw DomainError("training step t must lie in 1..T");
    if (item.frames.empty()) throw EmptyInputError("training item has no frames");

    const bool conditioned = !is_zero(item.rank_map);
    thread_local std::vector<EncoderCache> enc_caches;
    if (conditioned && enc_caches.size() < item.frames.size()) enc_caches.resize(item.frames.size());
    FeatureTensor features(config_.feat_channels, config_.feat_height(), config_.feat_width());
    if (conditioned) {
      for (std::size_t f = 0; f < item.frames.size(); ++f) {
        const FeatureTensor e = encode_one(*item.frames[f], params, &enc_caches[f]);
        for (std::size_t i = 0; i < features.data.size(); ++i) features.data[i] += e.data[i];
      }
      for (double& v : features.data) v /= static_cast<double>(item.frames.size());
    }
    const FeatureTensor cond = pointwise_product_concat(item.rank_map, features);
    const FeatureTensor mt = forward_sample(*item.m0, t, noise[b], sched);

    thread_local DenoiserCache cache;
    const FeatureTensor out = forward(mt, t, cond, params, sched, &cache);
    FeatureTensor dout(1, out.height, out.width);
    double sq = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      const double d = out.data[i] - item.m0->data[i];
      sq += d * d;
      dout.data[i] = 2.0 * d * inv_batch;
    }
    result.loss += sq * inv_batch;
    if (!std::isfinite(result.loss)) throw NumericDivergenceError("training loss is not finite");

    const FeatureTensor dcond = backward(dout, cache, params, result.grad);
    if (conditioned) {
      // Only the product block depends on the encoder; the raw ranking-map
      // channel is an input.
      FeatureTensor dfeat(config_.feat_channels, config_.feat_height(), config_.feat_width());
      const auto r = item.rank_map.values();
      const double inv_frames = 1.0 / static_cast<double>(item.frames.size());
      for (int ch = 0; ch < config_.feat_channels; ++ch) {
        auto src = dcond.channel(ch);
        auto dst = dfeat.channel(ch);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i] * r[i] * inv_frames;
      }
      for (std::size_t f = 0; f < item.frames.size(); ++f) {
        encode_one_backward(dfeat, enc_caches[f], params, result.grad);
      }
    }
  }
  return result;
}

GrayscaleMap SaliencyModel::sample(const FeatureTensor& cond, const DenoiserParams& params,
                                   const NoiseSchedule& sched, std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  FeatureTensor m(1, config_.height, config_.width);
  for (double& v : m.data) v = normal(rng);
  for (int t = sched.steps(); t >= 1; --t) {
    const FeatureTensor x0 = denoise(m, t, cond, params, sched);
    m = reverse_step(m, t, x0, sched);
    if (!m.all_finite()) throw NumericDivergenceError("non-finite value in reverse trajectory");
  }
  return from_signed(m);
}

}  // namespace salrank::diffusion

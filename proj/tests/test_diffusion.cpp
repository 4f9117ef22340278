#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "salrank/diffusion/checkpoint.hpp"
#include "salrank/diffusion/model.hpp"
#include "salrank/diffusion/schedule.hpp"
#include "salrank/diffusion/trainer.hpp"
#include "salrank/synth.hpp"

using namespace salrank;
using namespace salrank::diffusion;

namespace {

FeatureTensor gaussian_tensor(int c, int h, int w, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  FeatureTensor x(c, h, w);
  for (double& v : x.data) v = n(rng);
  return x;
}

FeatureTensor uniform_tensor(int c, int h, int w, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  FeatureTensor x(c, h, w);
  for (double& v : x.data) v = u(rng);
  return x;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.width = 8;
  c.height = 8;
  c.enc_channels = 3;
  c.feat_channels = 2;
  c.c1 = 3;
  c.c2 = 4;
  c.c3 = 5;
  c.time_channels = 2;
  return c;
}

}  // namespace

TEST_CASE("schedule is strictly decreasing and ends below 0.05") {
  const auto s = NoiseSchedule::linear(100, 1e-4, 0.07);
  CHECK(s.alpha_bar(0) == 1.0);
  for (int t = 1; t <= 100; ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
  CHECK(s.alpha_bar(100) > 0.0);
  CHECK(s.alpha_bar(100) < 0.05);
  CHECK_THROWS_AS(NoiseSchedule::linear(10, 1e-4, 0.02), DomainError);
  CHECK_THROWS_AS(NoiseSchedule({0.5, 1.0}), DomainError);
}

TEST_CASE("forward_sample endpoints") {
  std::mt19937_64 rng(3);
  const auto s = NoiseSchedule::linear(100, 1e-4, 0.07);
  const auto m0 = uniform_tensor(1, 4, 4, rng, -1, 1);
  const auto eps = gaussian_tensor(1, 4, 4, rng);
  CHECK(forward_sample(m0, 0, eps, s) == m0);
  CHECK_THROWS_AS(forward_sample(m0, 101, eps, s), DomainError);
  CHECK_THROWS_AS(forward_sample(m0, -1, eps, s), DomainError);

  const NoiseSchedule pure({0.5, 1.0 - 1e-15});
  const auto out = forward_sample(m0, 2, eps, pure);
  for (std::size_t i = 0; i < out.data.size(); ++i) CHECK(std::abs(out.data[i] - eps.data[i]) <= 1e-7);
}

TEST_CASE("reverse_step hand computation and final-step collapse") {
  // alpha_bar_1 = 0.5, alpha_bar_2 = 0.25
  const NoiseSchedule s({0.5, 0.5, 0.9});
  FeatureTensor mt(1, 2, 2);
  mt.data = {0.3, -0.2, 1.0, 0.0};
  FeatureTensor x0(1, 2, 2);
  x0.data = {0.5, 0.5, -1.0, 0.2};
  const auto out = reverse_step(mt, 2, x0, s);
  for (int i = 0; i < 4; ++i) {
    const double eps = (mt.data[i] - 0.5 * x0.data[i]) / std::sqrt(0.75);
    const double expect = std::sqrt(0.5) * x0.data[i] + std::sqrt(0.5) * eps;
    CHECK(out.data[i] == doctest::Approx(expect).epsilon(1e-14));
  }
  CHECK(reverse_step(mt, 1, x0, s) == x0);
  CHECK_THROWS_AS(reverse_step(mt, 0, x0, s), DomainError);
}

TEST_CASE("perfect x0 oracle reconstructs m0 along the whole trajectory") {
  std::mt19937_64 rng(11);
  const auto s = NoiseSchedule::linear(100, 1e-4, 0.07);
  for (int trial = 0; trial < 5; ++trial) {
    const auto m0 = uniform_tensor(1, 6, 6, rng, -1, 1);
    auto m = gaussian_tensor(1, 6, 6, rng);
    for (int t = s.steps(); t >= 1; --t) m = reverse_step(m, t, m0, s);
    for (std::size_t i = 0; i < m.data.size(); ++i) CHECK(std::abs(m.data[i] - m0.data[i]) <= 1e-12);
  }
}

TEST_CASE("to_signed and from_signed are inverse on the unit range") {
  const GrayscaleMap m(2, 2, std::vector<double>{0.0, 0.25, 0.5, 1.0});
  const auto x = to_signed(m);
  CHECK(x.data == std::vector<double>{-1.0, -0.5, 0.0, 1.0});
  CHECK(from_signed(x) == m);
}

TEST_CASE("encoder output is a quarter of the input size and symmetric in frame order") {
  const SaliencyModel model(tiny_config());
  const auto p = model.init_params(5);
  std::mt19937_64 rng(2);
  const auto f1 = uniform_tensor(3, 8, 8, rng, 0, 1);
  const auto f2 = uniform_tensor(3, 8, 8, rng, 0, 1);
  std::vector<const FeatureTensor*> ab{&f1, &f2};
  std::vector<const FeatureTensor*> ba{&f2, &f1};
  const auto ea = model.encode_frames(std::span<const FeatureTensor* const>(ab), p);
  const auto eb = model.encode_frames(std::span<const FeatureTensor* const>(ba), p);
  CHECK(ea.width == 2);
  CHECK(ea.height == 2);
  for (std::size_t i = 0; i < ea.data.size(); ++i) CHECK(ea.data[i] == doctest::Approx(eb.data[i]).epsilon(1e-14));
  std::vector<const FeatureTensor*> same{&f1, &f1, &f1};
  std::vector<const FeatureTensor*> one{&f1};
  CHECK(model.encode_frames(std::span<const FeatureTensor* const>(same), p).data ==
        model.encode_frames(std::span<const FeatureTensor* const>(one), p).data);
}

TEST_CASE("denoise shape contract and zero network") {
  const SaliencyModel model(tiny_config());
  const auto s = NoiseSchedule::linear(100, 1e-4, 0.07);
  std::mt19937_64 rng(4);
  const auto mt = gaussian_tensor(1, 8, 8, rng);
  const FeatureTensor cond(model.config().cond_channels(), 2, 2);
  const auto out = model.denoise(mt, 40, cond, model.init_params(1), s);
  CHECK(out.same_shape(mt));
  for (double v : out.data) CHECK(std::abs(v) <= 1.0);

  auto zero = model.zero_params();
  zero.values[zero.manifest.find("out.bias").offset] = 0.3;
  const auto z = model.denoise(mt, 40, cond, zero, s);
  for (double v : z.data) CHECK(v == 0.3);

  const FeatureTensor bad(model.config().cond_channels(), 3, 3);
  CHECK_THROWS_AS(model.denoise(mt, 40, bad, zero, s), DimensionError);
}

TEST_CASE("training_step loss vanishes at the optimum") {
  const SaliencyModel model(tiny_config());
  const auto s = NoiseSchedule::linear(100, 1e-4, 0.07);
  std::mt19937_64 rng(8);
  FeatureTensor m0(1, 8, 8, 0.3);
  const auto frame = uniform_tensor(3, 8, 8, rng, 0, 1);
  auto p = model.zero_params();
  p.values[p.manifest.find("out.bias").offset] = 0.3;
  TrainItem item{&m0, {&frame}, GrayscaleMap(2, 2, 0.0)};
  const std::vector<TrainItem> batch{item};
  const std::vector<int> ts{17};
  const std::vector<FeatureTensor> noise{gaussian_tensor(1, 8, 8, rng)};
  const auto r = model.training_step(batch, ts, noise, p, s);
  CHECK(r.loss == doctest::Approx(0.0).epsilon(1e-24));
  for (double g : r.grad) CHECK(g == 0.0);
}

TEST_CASE("training_step rejects malformed batches and non-finite losses") {
  const SaliencyModel model(tiny_config());
  const auto s = NoiseSchedule::linear(100, 1e-4, 0.07);
  std::mt19937_64 rng(9);
  FeatureTensor m0(1, 8, 8, 0.0);
  const auto frame = uniform_tensor(3, 8, 8, rng, 0, 1);
  TrainItem item{&m0, {&frame}, GrayscaleMap(2, 2, 1.0)};
  const std::vector<TrainItem> batch{item};
  const std::vector<FeatureTensor> noise{gaussian_tensor(1, 8, 8, rng)};
  auto p = model.init_params(0);
  CHECK_THROWS_AS(model.training_step(batch, std::vector<int>{0}, noise, p, s), DomainError);
  CHECK_THROWS_AS(model.training_step({}, {}, {}, p, s), EmptyInputError);
  p.values[p.manifest.find("out.bias").offset] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(model.training_step(batch, std::vector<int>{3}, noise, p, s), NumericDivergenceError);
}

TEST_CASE("analytic gradient matches central differences") {
  const SaliencyModel model(tiny_config());
  const auto s = NoiseSchedule::linear(100, 1e-4, 0.07);
  for (std::uint64_t init : {1u, 2u, 3u}) {
    std::mt19937_64 rng(100 + init);
    auto p = model.init_params(init);
    // Nonzero biases so every bias gradient is exercised.
    std::normal_distribution<double> n(0.0, 0.1);
    for (double& v : p.values) v += n(rng);

    std::vector<FeatureTensor> targets, frames;
    for (int i = 0; i < 2; ++i) targets.push_back(uniform_tensor(1, 8, 8, rng, -1, 1));
    for (int i = 0; i < 3; ++i) frames.push_back(uniform_tensor(3, 8, 8, rng, 0, 1));
    std::vector<double> rank(4);
    for (double& v : rank) v = std::uniform_real_distribution<double>(0.2, 1.0)(rng);
    const std::vector<TrainItem> batch{
        {&targets[0], {&frames[0], &frames[1], &frames[2]}, GrayscaleMap(2, 2, rank)},
        {&targets[1], {&frames[1]}, GrayscaleMap(2, 2, 0.0)},
    };
    const std::vector<int> ts{30, 71};
    const std::vector<FeatureTensor> noise{gaussian_tensor(1, 8, 8, rng), gaussian_tensor(1, 8, 8, rng)};

    const auto r = model.training_step(batch, ts, noise, p, s);
    std::uniform_int_distribution<std::size_t> pick(0, p.values.size() - 1);
    int checked = 0;
    double worst = 0.0;
    for (int k = 0; k < 120; ++k) {
      const std::size_t j = pick(rng);
      const double h = 1e-5;
      auto q = p;
      q.values[j] += h;
      const double lp = model.training_step(batch, ts, noise, q, s).loss;
      q.values[j] -= 2 * h;
      const double lm = model.training_step(batch, ts, noise, q, s).loss;
      const double fd = (lp - lm) / (2 * h);
      const double scale = std::max({std::abs(fd), std::abs(r.grad[j]), 1e-6});
      worst = std::max(worst, std::abs(fd - r.grad[j]) / scale);
      ++checked;
    }
    CHECK(checked >= 100);
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("encoder blocks receive gradient only from conditioned items") {
  const SaliencyModel model(tiny_config());
  const auto s = NoiseSchedule::linear(100, 1e-4, 0.07);
  std::mt19937_64 rng(21);
  const auto p = model.init_params(4);
  const auto m0 = uniform_tensor(1, 8, 8, rng, -1, 1);
  const auto frame = uniform_tensor(3, 8, 8, rng, 0, 1);
  const std::vector<FeatureTensor> noise{gaussian_tensor(1, 8, 8, rng)};
  const auto& enc = p.manifest.find("enc1.weight");
  auto grad_norm = [&](const GrayscaleMap& r) {
    const std::vector<TrainItem> batch{{&m0, {&frame}, r}};
    const auto g = model.training_step(batch, std::vector<int>{50}, noise, p, s).grad;
    double n = 0.0;
    for (std::size_t i = 0; i < enc.size; ++i) n += std::abs(g[enc.offset + i]);
    return n;
  };
  CHECK(grad_norm(GrayscaleMap(2, 2, 0.0)) == 0.0);
  CHECK(grad_norm(GrayscaleMap(2, 2, 1.0)) > 0.0);
}

TEST_CASE("sample is deterministic and bounded") {
  const SaliencyModel model(tiny_config());
  const auto s = NoiseSchedule::linear(20, 1e-3, 0.3);
  const auto p = model.init_params(6);
  FeatureTensor cond(model.config().cond_channels(), 2, 2, 0.5);
  const auto a = model.sample(cond, p, s, 77);
  const auto b = model.sample(cond, p, s, 77);
  CHECK(a == b);
  for (double v : a.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(model.sample(cond, p, s, 78) != a);
}

TEST_CASE("train config parsing") {
  const auto c = parse_train_config("steps = 12 # short\nratio=0.25\n\nlearning_rate = 1e-3\nseed = 7\n");
  CHECK(c.steps == 12);
  CHECK(c.ratio == 0.25);
  CHECK(c.learning_rate == 1e-3);
  CHECK(c.seed == 7);
  CHECK(parse_train_config(format_train_config(c)).steps == 12);
  CHECK_THROWS_AS(parse_train_config("stepz = 3"), SpecError);
  CHECK_THROWS_AS(parse_train_config("steps = three"), SpecError);
  CHECK_THROWS_AS(parse_train_config("ratio = 2"), SpecError);
  CHECK_THROWS_AS(parse_train_config("beta_end = 0.02"), SpecError);
  CHECK_THROWS_AS(parse_train_config("steps"), SpecError);
}

TEST_CASE("training is deterministic and checkpoints round-trip") {
  synth::SynthSpec spec;
  spec.n_clips = 2;
  spec.frames_per_clip = 3;
  spec.width = 8;
  spec.height = 8;
  spec.radius_min = 1.5;
  spec.radius_max = 2.0;
  const auto clips = synth::generate(spec);
  TrainConfig cfg;
  cfg.steps = 5;
  cfg.batch_size = 2;
  cfg.model = tiny_config();
  std::vector<std::vector<GrayscaleMap>> maps;
  for (const auto& c : clips) maps.push_back(gt_rank_maps(c));
  const auto data = build_training_set(clips, maps, cfg.model, cfg.temporal_radius);
  CHECK(data.size() == 6);
  const SaliencyModel model(cfg.model);
  int calls = 0;
  const auto a = train(model, data, cfg, [&](int, double) { ++calls; });
  const auto b = train(model, data, cfg);
  CHECK(calls == 5);
  CHECK(a.losses.size() == 5);
  CHECK(a.params.values == b.params.values);
  CHECK(a.losses == b.losses);

  Checkpoint ck{cfg.model, cfg.diffusion_steps, cfg.beta_start, cfg.beta_end, cfg.seed, cfg.temporal_radius, a.params};
  const auto bytes = serialize_checkpoint(ck);
  CHECK(bytes == serialize_checkpoint(ck));
  const auto back = deserialize_checkpoint(bytes);
  CHECK(back.model == cfg.model);
  CHECK(back.params.manifest == a.params.manifest);
  for (std::size_t i = 0; i < back.params.values.size(); ++i) {
    CHECK(back.params.values[i] == static_cast<double>(static_cast<float>(a.params.values[i])));
  }
  CHECK(serialize_checkpoint(back) == bytes);
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(bad), IoError);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(deserialize_checkpoint(bad), IoError);

  const auto csv = loss_csv(a.losses);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
}

TEST_CASE("learning-rate schedule key") {
  CHECK(parse_train_config("").cosine_decay);
  const auto c = parse_train_config("lr_schedule = constant");
  CHECK_FALSE(c.cosine_decay);
  CHECK_FALSE(parse_train_config(format_train_config(c)).cosine_decay);
  CHECK(parse_train_config("lr_schedule = cosine", c).cosine_decay);
  CHECK_THROWS_AS(parse_train_config("lr_schedule = step"), SpecError);
}

#include "salrank/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"
#include "salrank/random.hpp"

namespace salrank::synth {

namespace {

struct Disk {
  double cx = 0.0;
  double cy = 0.0;
  double r = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  double rgb[3] = {0.0, 0.0, 0.0};
};

void reflect(double& pos, double& vel, double lo, double hi) {
  if (pos < lo) {
    pos = 2.0 * lo - pos;
    vel = -vel;
  } else if (pos > hi) {
    pos = 2.0 * hi - pos;
    vel = -vel;
  }
  pos = std::clamp(pos, lo, hi);
}

// Fully saturated color from a hue in [0,1).
void hue_to_rgb(double hue, double out[3]) {
  const double h = hue * 6.0;
  const double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
  const int sector = static_cast<int>(h) % 6;
  const double table[6][3] = {{1, x, 0}, {x, 1, 0}, {0, 1, x}, {0, x, 1}, {x, 0, 1}, {1, 0, x}};
  for (int c = 0; c < 3; ++c) out[c] = 0.25 + 0.75 * table[sector][c];
}

bool inside(const Disk& d, int x, int y) {
  const double dx = x + 0.5 - d.cx;
  const double dy = y + 0.5 - d.cy;
  return dx * dx + dy * dy <= d.r * d.r;
}

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

}  // namespace

void SynthSpec::validate() const {
  if (n_clips < 1 || frames_per_clip < 1) throw SpecError("n_clips and frames_per_clip must be >= 1");
  if (width < 4 || height < 4 || width % 4 != 0 || height % 4 != 0) {
    throw SpecError("width and height must be positive multiples of 4");
  }
  if (weights.empty()) throw SpecError("at least one disk weight is required");
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw SpecError("disk weights must be positive");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-6) throw SpecError("disk weights must sum to 1");
  if (!(radius_min > 0.0) || radius_max < radius_min) throw SpecError("invalid radius range");
  if (2.0 * radius_max > std::min(width, height)) throw SpecError("disk larger than frame");
  if (n_fix < 1) throw SpecError("n_fix must be >= 1");
  if (max_speed < 0.0 || background_noise < 0.0 || background_noise > 1.0) {
    throw SpecError("invalid speed or noise amplitude");
  }
}

SynthSpec spec_from_json(const std::string& text) {
  SynthSpec s;
  try {
    const auto j = nlohmann::json::parse(text);
    s.n_clips = j.value("n_clips", s.n_clips);
    s.frames_per_clip = j.value("frames_per_clip", s.frames_per_clip);
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.radius_min = j.value("radius_min", s.radius_min);
    s.radius_max = j.value("radius_max", s.radius_max);
    s.max_speed = j.value("max_speed", s.max_speed);
    s.weights = j.value("weights", s.weights);
    s.n_fix = j.value("n_fix", s.n_fix);
    s.blur_sigma = j.value("blur_sigma", s.blur_sigma);
    s.background_noise = j.value("background_noise", s.background_noise);
    s.seed = j.value("seed", s.seed);
    s.id_prefix = j.value("id_prefix", s.id_prefix);
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("malformed synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::string spec_to_json(const SynthSpec& s) {
  nlohmann::ordered_json j;
  j["n_clips"] = s.n_clips;
  j["frames_per_clip"] = s.frames_per_clip;
  j["width"] = s.width;
  j["height"] = s.height;
  j["radius_min"] = s.radius_min;
  j["radius_max"] = s.radius_max;
  j["max_speed"] = s.max_speed;
  j["weights"] = s.weights;
  j["n_fix"] = s.n_fix;
  j["blur_sigma"] = s.blur_sigma;
  j["background_noise"] = s.background_noise;
  j["seed"] = s.seed;
  j["id_prefix"] = s.id_prefix;
  return j.dump(2);
}

GrayscaleMap gaussian_blur(const GrayscaleMap& map, double sigma) {
  if (!(sigma > 0.0)) return map;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
  }
  const int w = map.width();
  const int h = map.height();
  std::vector<double> tmp(map.size(), 0.0);
  std::vector<double> out(map.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int xx = x + k;
        if (xx >= 0 && xx < w) acc += kernel[static_cast<std::size_t>(k + radius)] * map.at(xx, y);
      }
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int yy = y + k;
        if (yy >= 0 && yy < h) acc += kernel[static_cast<std::size_t>(k + radius)] * tmp[static_cast<std::size_t>(yy) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  return GrayscaleMap(w, h, std::move(out));
}

std::vector<VideoClip> generate(const SynthSpec& spec) {
  spec.validate();
  const int W = spec.width;
  const int H = spec.height;
  const int K = spec.disks();
  std::vector<VideoClip> clips;
  clips.reserve(static_cast<std::size_t>(spec.n_clips));

  for (int ci = 0; ci < spec.n_clips; ++ci) {
    std::mt19937_64 rng(derive_seed(spec.seed, static_cast<std::uint64_t>(ci)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::discrete_distribution<int> pick_disk(spec.weights.begin(), spec.weights.end());

    std::vector<Disk> disks(static_cast<std::size_t>(K));
    const double hue0 = unit(rng);
    for (int k = 0; k < K; ++k) {
      Disk& d = disks[static_cast<std::size_t>(k)];
      d.r = spec.radius_min + (spec.radius_max - spec.radius_min) * unit(rng);
      d.cx = d.r + (W - 2.0 * d.r) * unit(rng);
      d.cy = d.r + (H - 2.0 * d.r) * unit(rng);
      const double angle = 2.0 * std::numbers::pi * unit(rng);
      const double speed = spec.max_speed * unit(rng);
      d.vx = speed * std::cos(angle);
      d.vy = speed * std::sin(angle);
      // Evenly spread hues from a random origin keep disks distinguishable
      // while leaving color uninformative about the weight.
      hue_to_rgb(std::fmod(hue0 + static_cast<double>(k) / K + 0.1 * unit(rng), 1.0), d.rgb);
    }

    std::ostringstream id;
    id << spec.id_prefix << '_';
    id.width(4);
    id.fill('0');
    id << ci;
    VideoClip clip;
    clip.id = id.str();

    for (int f = 0; f < spec.frames_per_clip; ++f) {
      if (f > 0) {
        for (auto& d : disks) {
          d.cx += d.vx;
          d.cy += d.vy;
          reflect(d.cx, d.vx, d.r, W - d.r);
          reflect(d.cy, d.vy, d.r, H - d.r);
        }
      }

      FeatureTensor image(3, H, W);
      for (int c = 0; c < 3; ++c) {
        for (double& v : image.channel(c)) v = quantize(spec.background_noise * unit(rng));
      }
      std::vector<std::vector<std::size_t>> masks(static_cast<std::size_t>(K));
      std::vector<Annotation> annotations;
      for (int k = 0; k < K; ++k) {
        const Disk& d = disks[static_cast<std::size_t>(k)];
        BoundingBox box{W, H, 0, 0};
        for (int y = 0; y < H; ++y) {
          for (int x = 0; x < W; ++x) {
            if (!inside(d, x, y)) continue;
            masks[static_cast<std::size_t>(k)].push_back(static_cast<std::size_t>(y) * W + x);
            for (int c = 0; c < 3; ++c) image.at(c, y, x) = quantize(d.rgb[c]);
            box.x0 = std::min(box.x0, x);
            box.y0 = std::min(box.y0, y);
            box.x1 = std::max(box.x1, x + 1);
            box.y1 = std::max(box.y1, y + 1);
          }
        }
        if (masks[static_cast<std::size_t>(k)].empty()) throw SpecError("disk covers no pixel");
        annotations.push_back({"disk" + std::to_string(k), box});
      }

      std::vector<double> fix(static_cast<std::size_t>(W) * H, 0.0);
      for (int n = 0; n < spec.n_fix; ++n) {
        const auto& mask = masks[static_cast<std::size_t>(pick_disk(rng))];
        std::uniform_int_distribution<std::size_t> pick_px(0, mask.size() - 1);
        fix[mask[pick_px(rng)]] = 1.0;
      }
      GrayscaleMap fix_map(W, H, std::move(fix));
      GrayscaleMap blurred = gaussian_blur(fix_map, spec.effective_sigma());
      const double peak = blurred.max_value();
      std::vector<double> sal(blurred.values().begin(), blurred.values().end());
      for (double& v : sal) v = quantize(v / peak);

      clip.frames.push_back({std::move(image), f});
      clip.fixations.emplace_back(std::move(fix_map));
      clip.saliency.emplace_back(W, H, std::move(sal));
      clip.annotations.push_back(std::move(annotations));
    }
    clip.validate();
    clips.push_back(std::move(clip));
  }
  return clips;
}

}  // namespace salrank::synth

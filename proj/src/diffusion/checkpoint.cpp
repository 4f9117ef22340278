#include "salrank/diffusion/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "salrank/image_io.hpp"

namespace salrank::diffusion {

namespace {

constexpr char kMagic[8] = {'S', 'A', 'L', 'R', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u32(std::uint32_t v) { le(v, 4); }
  void i32(std::int32_t v) { le(static_cast<std::uint32_t>(v), 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v), 4); }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  std::vector<std::uint8_t> out;

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::int32_t i32() { return static_cast<std::int32_t>(static_cast<std::uint32_t>(le(4))); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(le(8)); }
  float f32() { return std::bit_cast<float>(static_cast<std::uint32_t>(le(4))); }
  void raw(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError("truncated checkpoint");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kVersion);
  const auto& m = ckpt.model;
  for (int v : {m.width, m.height, m.enc_channels, m.feat_channels, m.c1, m.c2, m.c3, m.time_channels}) w.i32(v);
  w.u32(static_cast<std::uint32_t>(ckpt.diffusion_steps));
  w.f64(ckpt.beta_start);
  w.f64(ckpt.beta_end);
  w.u64(ckpt.seed);
  w.u32(static_cast<std::uint32_t>(ckpt.temporal_radius));
  const auto& man = ckpt.params.manifest;
  w.u32(static_cast<std::uint32_t>(man.blocks.size()));
  for (const auto& b : man.blocks) {
    w.u32(static_cast<std::uint32_t>(b.name.size()));
    w.raw(b.name.data(), b.name.size());
    w.u32(static_cast<std::uint32_t>(b.dims.size()));
    for (int d : b.dims) w.i32(d);
  }
  w.u64(ckpt.params.values.size());
  for (double v : ckpt.params.values) w.f32(static_cast<float>(v));
  return std::move(w.out);
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw IoError("not a salrank checkpoint");
  if (r.u32() != kVersion) throw IoError("unsupported checkpoint version");
  Checkpoint ckpt;
  auto& m = ckpt.model;
  for (int* v : {&m.width, &m.height, &m.enc_channels, &m.feat_channels, &m.c1, &m.c2, &m.c3, &m.time_channels}) {
    *v = r.i32();
  }
  ckpt.diffusion_steps = static_cast<int>(r.u32());
  ckpt.beta_start = r.f64();
  ckpt.beta_end = r.f64();
  ckpt.seed = r.u64();
  ckpt.temporal_radius = static_cast<int>(r.u32());

  ParamManifest stored;
  const std::uint32_t n_blocks = r.u32();
  for (std::uint32_t i = 0; i < n_blocks; ++i) {
    ParamBlock b;
    b.name.resize(r.u32());
    r.raw(b.name.data(), b.name.size());
    b.dims.resize(r.u32());
    b.size = 1;
    for (int& d : b.dims) {
      d = r.i32();
      b.size *= static_cast<std::size_t>(d);
    }
    b.offset = stored.total;
    stored.total += b.size;
    stored.blocks.push_back(std::move(b));
  }
  const SaliencyModel model(m);
  if (!(stored == model.manifest())) throw IoError("checkpoint manifest does not match its model config");
  const std::uint64_t count = r.u64();
  if (count != stored.total) throw IoError("checkpoint parameter count does not match manifest");
  ckpt.params.manifest = std::move(stored);
  ckpt.params.values.resize(count);
  for (double& v : ckpt.params.values) v = static_cast<double>(r.f32());
  if (!r.done()) throw IoError("trailing bytes in checkpoint");
  (void)ckpt.schedule();
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_bytes(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file_bytes(path));
}

}  // namespace salrank::diffusion

#include "pepsi/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include "pepsi/training.hpp"

namespace pepsi {

namespace {

constexpr char kMagic[4] = {'P', 'E', 'P', 'S'};
constexpr std::uint8_t kDtypeF32 = 0;
constexpr std::uint8_t kDtypeU64 = 1;

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint8_t u8() { return need(1)[0]; }
  std::uint32_t u32() {
    const std::uint8_t* p = need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const std::uint8_t* p = need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }
  std::string str(std::size_t n) {
    const std::uint8_t* p = need(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::uint8_t* need(std::size_t n) {
    if (b_.size() - pos_ < n) {
      throw CheckpointError("checkpoint truncated: need " + std::to_string(n) + " bytes at offset " +
                            std::to_string(pos_) + ", body has " + std::to_string(b_.size()));
    }
    const std::uint8_t* p = b_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::uint8_t* p, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::uint32_t variant_tag(Variant v) { return static_cast<std::uint32_t>(v); }

Variant variant_from_tag(std::uint32_t t) {
  if (t > static_cast<std::uint32_t>(Variant::kRed)) throw CheckpointError("unknown variant tag " + std::to_string(t));
  return static_cast<Variant>(t);
}

void write_entry_head(Writer& w, const std::string& name, std::uint8_t dtype, const Shape& s) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.bytes(name.data(), name.size());
  w.u8(dtype);
  w.u32(4);
  for (int d : s.dims()) w.u32(static_cast<std::uint32_t>(d));
}

}  // namespace

const Tensor<float>& CheckpointData::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw CheckpointError("checkpoint has no tensor '" + name + "'");
}

std::uint64_t CheckpointData::counter(const std::string& name) const {
  for (const auto& [n, v] : counters)
    if (n == name) return v;
  throw CheckpointError("checkpoint has no counter '" + name + "'");
}

bool CheckpointData::has_tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

std::vector<std::uint8_t> encode_checkpoint(const CheckpointData& data) {
  static_assert(std::endian::native == std::endian::little, "payloads are written as native little-endian floats");
  std::set<std::string> names;
  for (const auto& [n, t] : data.tensors)
    if (!names.insert(n).second) throw CheckpointError("duplicate checkpoint entry '" + n + "'");
  for (const auto& [n, v] : data.counters)
    if (!names.insert(n).second) throw CheckpointError("duplicate checkpoint entry '" + n + "'");

  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(variant_tag(data.header.variant));
  w.u32(static_cast<std::uint32_t>(data.header.width_divisor));
  w.u32(static_cast<std::uint32_t>(data.header.cam_mode));
  if (data.header.variant == Variant::kDietPepsi) {
    if (!data.header.dpu) throw CheckpointError("diet checkpoint without a DPU configuration");
    const DpuConfig& d = *data.header.dpu;
    w.u32(static_cast<std::uint32_t>(d.rates.size()));
    for (int r : d.rates) w.u32(static_cast<std::uint32_t>(r));
    w.u32(static_cast<std::uint32_t>(d.groups));
    w.u32(static_cast<std::uint32_t>(d.channels));
  }
  w.u32(static_cast<std::uint32_t>(data.tensors.size() + data.counters.size()));
  for (const auto& [name, t] : data.tensors) {
    write_entry_head(w, name, kDtypeF32, t.shape());
    w.bytes(t.ptr(), t.size() * sizeof(float));
  }
  for (const auto& [name, v] : data.counters) {
    write_entry_head(w, name, kDtypeU64, Shape{1, 1, 1, 1});
    w.u64(v);
  }
  std::vector<std::uint8_t>& buf = w.buffer();
  w.u32(crc_of(buf.data(), buf.size()));
  return std::move(buf);
}

CheckpointData decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) {
    throw CheckpointError("checkpoint too short: " + std::to_string(bytes.size()) + " bytes");
  }
  const std::size_t body = bytes.size() - 4;
  Reader tail(bytes.subspan(body));
  const std::uint32_t stored = tail.u32();
  const std::uint32_t actual = crc_of(bytes.data(), body);
  if (stored != actual) {
    throw CheckpointError("checkpoint CRC mismatch: stored value at offset " + std::to_string(body) + " of a " +
                          std::to_string(bytes.size()) + "-byte file does not match the contents (file truncated or corrupt)");
  }
  Reader r(bytes.first(body));
  if (r.str(4) != std::string(kMagic, 4)) throw CheckpointError("not a checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  CheckpointData data;
  data.header.variant = variant_from_tag(r.u32());
  data.header.width_divisor = static_cast<int>(r.u32());
  const std::uint32_t cam = r.u32();
  if (cam > 1) throw CheckpointError("unknown cam mode tag " + std::to_string(cam));
  data.header.cam_mode = static_cast<CamMode>(cam);
  if (data.header.variant == Variant::kDietPepsi) {
    DpuConfig d;
    const std::uint32_t n = r.u32();
    if (n > 64) throw CheckpointError("implausible DPU count " + std::to_string(n));
    d.rates.clear();
    for (std::uint32_t i = 0; i < n; ++i) d.rates.push_back(static_cast<int>(r.u32()));
    d.groups = static_cast<int>(r.u32());
    d.channels = static_cast<int>(r.u32());
    data.header.dpu = d;
  }
  const std::uint32_t count = r.u32();
  std::set<std::string> names;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::size_t at = r.offset();
    const std::uint32_t len = r.u32();
    std::string name = r.str(len);
    if (!names.insert(name).second) {
      throw CheckpointError("duplicate entry '" + name + "' at offset " + std::to_string(at));
    }
    const std::uint8_t dtype = r.u8();
    const std::uint32_t rank = r.u32();
    if (rank != 4) throw CheckpointError("entry '" + name + "' has rank " + std::to_string(rank) + ", expected 4");
    int dims[4];
    for (int& d : dims) d = static_cast<int>(r.u32());
    const Shape s{dims[0], dims[1], dims[2], dims[3]};
    if (dtype == kDtypeF32) {
      Tensor<float> t(s);
      const std::string raw = r.str(t.size() * sizeof(float));
      std::memcpy(t.ptr(), raw.data(), raw.size());
      data.tensors.emplace_back(std::move(name), std::move(t));
    } else if (dtype == kDtypeU64) {
      if (s.numel() != 1) throw CheckpointError("counter '" + name + "' must hold one value");
      data.counters.emplace_back(std::move(name), r.u64());
    } else {
      throw CheckpointError("entry '" + name + "' has unknown dtype " + std::to_string(dtype));
    }
  }
  if (!r.done()) throw CheckpointError("trailing bytes after entry table at offset " + std::to_string(r.offset()));
  return data;
}

void save_checkpoint(const std::string& path, const CheckpointData& data) {
  const std::vector<std::uint8_t> bytes = encode_checkpoint(data);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write to '" + path + "' failed");
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path + ": " + e.what());
  }
}

namespace {

std::uint64_t bits(double v) { return std::bit_cast<std::uint64_t>(v); }
double from_bits(std::uint64_t v) { return std::bit_cast<double>(v); }

void put_adam(CheckpointData& d, const std::string& prefix, const Adam<float>& adam) {
  for (const auto& [name, s] : adam.states()) {
    d.tensors.emplace_back(prefix + ".m." + name, s.m);
    d.tensors.emplace_back(prefix + ".v." + name, s.v);
    d.counters.emplace_back(prefix + ".t." + name, s.t);
  }
}

void get_adam(const CheckpointData& d, const std::string& prefix, Adam<float>& adam) {
  adam.states().clear();
  const std::string tag = prefix + ".t.";
  for (const auto& [n, t] : d.counters) {
    if (n.rfind(tag, 0) != 0) continue;
    const std::string name = n.substr(tag.size());
    AdamState<float> s;
    s.t = t;
    s.m = d.tensor(prefix + ".m." + name);
    s.v = d.tensor(prefix + ".v." + name);
    adam.states()[name] = std::move(s);
  }
}

// Keys are `prefix` + name; every checkpoint tensor under `owned` must be matched.
void load_params(const CheckpointData& d, const std::string& prefix, const std::string& owned,
                 ParamSet<float>& params) {
  std::set<std::string> expected;
  for (auto& p : params) {
    const std::string key = prefix + p->name;
    expected.insert(key);
    const Tensor<float>& t = d.tensor(key);
    if (t.shape() != p->value.shape()) {
      throw CheckpointError("tensor '" + key + "' is " + to_string(t.shape()) + ", network expects " +
                            to_string(p->value.shape()));
    }
    p->value = t;
  }
  for (const auto& [n, t] : d.tensors) {
    if (n.rfind(owned, 0) == 0 && !expected.count(n)) {
      throw CheckpointError("checkpoint tensor '" + n + "' has no counterpart in the network");
    }
  }
}

}  // namespace

GeneratorConfig generator_config(const CheckpointHeader& h) {
  GeneratorConfig cfg;
  if (h.variant == Variant::kRed) throw CheckpointError("checkpoint header names the red variant, not a generator");
  cfg.variant = h.variant;
  cfg.width_divisor = h.width_divisor;
  cfg.cam_mode = h.cam_mode;
  if (h.dpu) cfg.dpu = *h.dpu;
  return cfg;
}

CheckpointData snapshot(const Generator<float>& gen, const Discriminator<float>* red, const TrainState* state) {
  CheckpointData d;
  const GeneratorConfig& cfg = gen.config();
  d.header.variant = cfg.variant;
  d.header.width_divisor = cfg.width_divisor;
  d.header.cam_mode = cfg.cam_mode;
  if (cfg.variant == Variant::kDietPepsi) d.header.dpu = cfg.dpu;
  d.counters.emplace_back("meta.cam_lambda", bits(cfg.cam_lambda));
  for (const auto& p : gen.params()) d.tensors.emplace_back("gen." + p->name, p->value);
  if (red) {
    for (const auto& p : red->params()) d.tensors.emplace_back(p->name, p->value);
  }
  if (state) {
    if (!red) throw CheckpointError("training state requires the discriminator");
    put_adam(d, "state.adam_g", state->adam_g);
    put_adam(d, "state.adam_d", state->adam_d);
    for (const auto& [name, s] : red->spectral()) {
      Tensor<float> u(Shape{1, 1, 1, static_cast<int>(s.u.size())}, s.u);
      d.tensors.emplace_back("state.sn." + name, std::move(u));
    }
    d.counters.emplace_back("state.k", static_cast<std::uint64_t>(state->k));
    d.counters.emplace_back("state.k_max", static_cast<std::uint64_t>(state->k_max));
    d.counters.emplace_back("state.seed", state->seed);
    d.counters.emplace_back("state.lr_g", bits(state->lr_g));
    d.counters.emplace_back("state.lr_d", bits(state->lr_d));
  }
  return d;
}

void restore(const CheckpointData& d, Generator<float>& gen, Discriminator<float>* red, TrainState* state) {
  const GeneratorConfig& cfg = gen.config();
  if (d.header.variant != cfg.variant) {
    throw CheckpointError("variant mismatch: checkpoint holds " + to_string(d.header.variant) + ", network is " +
                          to_string(cfg.variant));
  }
  if (d.header.width_divisor != cfg.width_divisor) {
    throw CheckpointError("width mismatch: checkpoint width_divisor " + std::to_string(d.header.width_divisor) +
                          ", network " + std::to_string(cfg.width_divisor));
  }
  if (cfg.variant == Variant::kDietPepsi && !(d.header.dpu && *d.header.dpu == cfg.dpu)) {
    throw CheckpointError("DPU configuration of the checkpoint differs from the network's");
  }
  load_params(d, "gen.", "gen.", gen.params());
  if (red) load_params(d, "", "red.", red->params());
  if (state) {
    if (!red) throw CheckpointError("training state requires the discriminator");
    get_adam(d, "state.adam_g", state->adam_g);
    get_adam(d, "state.adam_d", state->adam_d);
    for (auto& [name, s] : red->spectral()) {
      const Tensor<float>& u = d.tensor("state.sn." + name);
      if (u.size() != s.u.size()) throw CheckpointError("spectral vector '" + name + "' has the wrong length");
      s.u.assign(u.ptr(), u.ptr() + u.size());
    }
    state->k = static_cast<std::int64_t>(d.counter("state.k"));
    state->k_max = static_cast<std::int64_t>(d.counter("state.k_max"));
    state->seed = d.counter("state.seed");
    state->lr_g = from_bits(d.counter("state.lr_g"));
    state->lr_d = from_bits(d.counter("state.lr_d"));
  }
}

}  // namespace pepsi

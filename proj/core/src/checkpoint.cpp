#include "msv/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <fstream>
#include <iterator>
#include <unordered_map>

namespace msv {
inline namespace MSV_PRECISION_NS {

namespace {

constexpr std::uint8_t kMagic[4] = {'M', 'S', 'V', 'M'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void floats(const std::vector<float>& v) {
    for (float x : v) f32(x);
  }
  std::vector<std::uint8_t>& bytes() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<float> floats(std::size_t n) {
    need(n * 4);
    std::vector<float> v(n);
    for (float& x : v) x = f32();
    return v;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) {
      throw IntegrityError("checkpoint truncated at byte " +
                           std::to_string(pos_) + " (needed " +
                           std::to_string(n) + " more bytes)");
    }
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes().insert(w.bytes().end(), std::begin(kMagic), std::end(kMagic));
  w.u32(kCheckpointVersion);
  w.u64(ckpt.step);
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.extents.size()));
    for (std::uint32_t e : t.extents) w.u32(e);
    w.floats(t.values);
  }
  w.u64(ckpt.adam_t);
  w.u32(static_cast<std::uint32_t>(ckpt.slots.size()));
  for (const auto& s : ckpt.slots) {
    w.str(s.name);
    w.u32(static_cast<std::uint32_t>(s.m.size()));
    w.floats(s.m);
    w.floats(s.v);
  }
  w.str(ckpt.rng_state);
  w.str(ckpt.config_text);
  w.u32(crc32_of(w.bytes()));
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw FormatError("checkpoint: bad magic at byte 0 (expected \"MSVM\")");
  }
  Reader r(bytes.subspan(4));
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " +
                      std::to_string(version) + " at byte 4");
  }
  if (bytes.size() < 12) throw IntegrityError("checkpoint truncated in header");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= std::uint32_t(bytes[body + i]) << (8 * i);
  if (crc32_of(bytes.first(body)) != stored) {
    throw IntegrityError("checkpoint: checksum mismatch (file corrupted or truncated)");
  }
  Checkpoint c;
  Reader b(bytes.first(body).subspan(8));
  c.step = b.u64();
  const std::uint32_t count = b.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    t.name = b.str();
    const std::uint32_t rank = b.u32();
    if (rank == 0 || rank > 4) {
      throw IntegrityError("checkpoint: tensor '" + t.name + "' has rank " +
                           std::to_string(rank));
    }
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      t.extents.push_back(b.u32());
      n *= t.extents.back();
    }
    t.values = b.floats(n);
    c.tensors.push_back(std::move(t));
  }
  c.adam_t = b.u64();
  const std::uint32_t slots = b.u32();
  for (std::uint32_t i = 0; i < slots; ++i) {
    CheckpointSlot s;
    s.name = b.str();
    const std::uint32_t n = b.u32();
    s.m = b.floats(n);
    s.v = b.floats(n);
    c.slots.push_back(std::move(s));
  }
  c.rng_state = b.str();
  c.config_text = b.str();
  if (b.pos() + 8 != body) {
    throw IntegrityError("checkpoint: " + std::to_string(body - 8 - b.pos()) +
                         " unexpected trailing bytes");
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void export_parameters(const ParameterList& params, Checkpoint& ckpt) {
  ckpt.tensors.clear();
  for (const NamedParam& p : params) {
    CheckpointTensor t;
    t.name = p.name;
    for (std::size_t e : p.tensor.shape().dims()) {
      t.extents.push_back(static_cast<std::uint32_t>(e));
    }
    t.values.assign(p.tensor.data().begin(), p.tensor.data().end());
    ckpt.tensors.push_back(std::move(t));
  }
}

void import_parameters(const ParameterList& params, const Checkpoint& ckpt) {
  std::unordered_map<std::string, const CheckpointTensor*> by_name;
  for (const auto& t : ckpt.tensors) by_name[t.name] = &t;
  if (by_name.size() != params.size()) {
    throw FormatError("checkpoint holds " + std::to_string(by_name.size()) +
                      " tensors, model has " + std::to_string(params.size()));
  }
  for (const NamedParam& p : params) {
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      throw FormatError("checkpoint is missing tensor '" + p.name + "'");
    }
    const CheckpointTensor& t = *it->second;
    const auto dims = p.tensor.shape().dims();
    if (!std::equal(dims.begin(), dims.end(), t.extents.begin(), t.extents.end())) {
      throw FormatError("checkpoint tensor '" + p.name +
                        "' has extents that differ from the model's " +
                        p.tensor.shape().str());
    }
    Tensor target = p.tensor;
    auto out = target.mutable_data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<real>(t.values[i]);
  }
}

void export_optimizer(const Adam& opt, Checkpoint& ckpt) {
  ckpt.adam_t = opt.steps();
  ckpt.slots.clear();
  for (const auto& s : opt.slots()) {
    ckpt.slots.push_back({s.name, std::vector<float>(s.m.begin(), s.m.end()),
                          std::vector<float>(s.v.begin(), s.v.end())});
  }
}

void import_optimizer(Adam& opt, const Checkpoint& ckpt) {
  std::vector<std::string> names;
  std::vector<std::vector<real>> m, v;
  for (const auto& s : ckpt.slots) {
    names.push_back(s.name);
    m.emplace_back(s.m.begin(), s.m.end());
    v.emplace_back(s.v.begin(), s.v.end());
  }
  opt.restore(ckpt.adam_t, names, m, v);
}

}  // namespace MSV_PRECISION_NS
}  // namespace msv

#include "velocorr/checkpoint.hpp"

#include <bit>
#include <cstring>

namespace velocorr::checkpoint {
namespace {

constexpr char kMagic[8] = {'V', 'E', 'L', 'O', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void str(std::string_view s) {
    u32(std::uint32_t(s.size()));
    raw(s.data(), s.size());
  }
  std::vector<std::uint8_t>& bytes() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  void raw(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, b_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, 8);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (n > b_.size() - pos_) {
      throw CheckpointError(CheckpointError::Kind::kCorrupt,
                            "checkpoint truncated at byte " + std::to_string(pos_));
    }
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

const NamedArray* Checkpoint::find(std::string_view name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view text) {
  return fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> encode(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kFormatVersion);
  w.u64(fnv1a64(ckpt.architecture));
  w.str(ckpt.architecture);
  w.str(ckpt.metadata);
  w.u32(std::uint32_t(ckpt.arrays.size()));
  for (const auto& a : ckpt.arrays) {
    w.str(a.name);
    w.u32(std::uint32_t(a.shape.size()));
    for (auto d : a.shape) w.u32(d);
    w.u32(std::uint32_t(a.values.size()));
    w.raw(a.values.data(), a.values.size() * sizeof(float));
  }
  w.u64(fnv1a64(w.bytes()));
  return std::move(w.bytes());
}

Checkpoint decode(std::span<const std::uint8_t> bytes, std::string_view expected_architecture) {
  using K = CheckpointError::Kind;
  if (bytes.size() < sizeof kMagic + 4 + 8 + 8 ||
      std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError(K::kCorrupt, "not a checkpoint file (bad magic)");
  }
  const auto body = bytes.first(bytes.size() - 8);
  std::uint64_t stored_sum;
  std::memcpy(&stored_sum, bytes.data() + bytes.size() - 8, 8);
  Reader r(body);
  char magic[8];
  r.raw(magic, 8);
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion) {
    throw CheckpointError(K::kVersion, "checkpoint format version " + std::to_string(version) +
                                           ", this build reads version " +
                                           std::to_string(kFormatVersion));
  }
  const std::uint64_t digest = r.u64();
  Checkpoint ckpt;
  ckpt.architecture = r.str();
  if (fnv1a64(body) != stored_sum) {
    throw CheckpointError(K::kCorrupt, "checkpoint checksum mismatch (truncated or corrupted)");
  }
  if (digest != fnv1a64(ckpt.architecture)) {
    throw CheckpointError(K::kCorrupt, "architecture digest does not match its description");
  }
  if (!expected_architecture.empty() && ckpt.architecture != expected_architecture) {
    throw CheckpointError(K::kArchitectureMismatch,
                          "checkpoint architecture '" + ckpt.architecture + "' does not match '" +
                              std::string(expected_architecture) + "'");
  }
  ckpt.metadata = r.str();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw CheckpointError(K::kCorrupt, "array '" + a.name + "' has rank " + std::to_string(rank));
    std::uint64_t expected = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      a.shape.push_back(r.u32());
      expected *= a.shape.back();
    }
    const std::uint32_t n = r.u32();
    if (n != expected) {
      throw CheckpointError(K::kCorrupt, "array '" + a.name + "' element count disagrees with shape");
    }
    a.values.resize(n);
    r.raw(a.values.data(), std::size_t(n) * sizeof(float));
    ckpt.arrays.push_back(std::move(a));
  }
  return ckpt;
}

}  // namespace velocorr::checkpoint

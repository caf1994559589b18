#pragma once

// Binary checkpoint container: a versioned header pinned to an architecture
// description, a metadata string and a list of named float32 arrays.
//
// Layout (all integers little-endian):
//
//   magic          8 bytes  "VELOCKPT"
//   version        u32      currently 1
//   arch_digest    u64      FNV-1a 64 of the architecture string
//   arch           u32 length + UTF-8 bytes
//   metadata       u32 length + UTF-8 bytes (JSON, sorted keys)
//   array_count    u32
//   per array:     u32 name length + name bytes,
//                  u32 rank, rank x u32 dims,
//                  u32 element count, count x float32
//   checksum       u64      FNV-1a 64 of every preceding byte

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace velocorr::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

struct NamedArray {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float> values;

  bool operator==(const NamedArray&) const = default;
};

struct Checkpoint {
  std::string architecture;
  std::string metadata;
  std::vector<NamedArray> arrays;

  const NamedArray* find(std::string_view name) const;
  bool operator==(const Checkpoint&) const = default;
};

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { kCorrupt, kVersion, kArchitectureMismatch, kMissingArray };

  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view text);

std::vector<std::uint8_t> encode(const Checkpoint& ckpt);

/// Decodes and verifies a checkpoint. When `expected_architecture` is
/// non-empty it must match the stored architecture exactly.
Checkpoint decode(std::span<const std::uint8_t> bytes,
                  std::string_view expected_architecture = {});

}  // namespace velocorr::checkpoint

#pragma once

// On-disk formats shared by the command-line tool: velocity grid files, the
// log-mel cache, corpus manifests and JSON configuration profiles.
//
// Grid file (little-endian):
//   "VGRD"  u32 version (1)  u32 frames  u32 keys  f32 frames_per_second
//   frames * keys f32 values, row-major
//
// Mel cache (little-endian):
//   "VMEL"  u32 version (1)  u64 source digest  u32 frames  u32 bins
//   f32 frames_per_second  frames * bins f32 values, row-major

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "velocorr/dsp.hpp"
#include "velocorr/evaluation.hpp"
#include "velocorr/models.hpp"
#include "velocorr/pianoroll.hpp"
#include "velocorr/synthcorpus.hpp"
#include "velocorr/trainer.hpp"

namespace velocorr::formats {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration or manifest content (the CLI maps it to exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

struct GridFile {
  Tensor2<float> values;
  float frames_per_second = 100.0f;
};

std::vector<std::uint8_t> encode_grid(const Tensor2<float>& values, float frames_per_second);
/// Rejects bad magic/version, a payload of the wrong size and values outside
/// [0, 1].
GridFile decode_grid(std::span<const std::uint8_t> bytes);

struct MelCache {
  std::uint64_t source_digest = 0;
  dsp::MelSpectrogram mel;
};

std::vector<std::uint8_t> encode_mel(const MelCache& cache);
MelCache decode_mel(std::span<const std::uint8_t> bytes);

struct ManifestItem {
  std::string id;
  std::filesystem::path midi;
  std::optional<std::filesystem::path> audio;
  std::optional<std::filesystem::path> grid;
  std::string split;  // train | val | test
};

/// Paths are stored relative to the manifest's directory.
struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestItem> items;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  std::vector<const ManifestItem*> split(const std::string& name) const;
  const ManifestItem* find(const std::string& id) const;
};

/// {"items": [{"id", "midi", "audio" | "grid", "split"}, ...]}. Checks unique
/// ids, exactly one source per item and known splits; with `check_files`
/// every referenced file must exist. Throws ConfigError.
Manifest parse_manifest(const std::string& json_text, const std::filesystem::path& base_dir,
                        bool check_files = true);
Manifest load_manifest(const std::filesystem::path& path, bool check_files = true);
std::string manifest_json(const Manifest& manifest);

/// Every tunable of the pipeline in one place.
struct Profile {
  std::string name;
  pianoroll::SegmentSpec segment;
  std::size_t hop_frames = 1001;
  double velocity_divisor = 127.0;
  bool pedal_extends_offsets = false;
  dsp::MelConfig mel;
  models::FeatureConfig features{true, false, false};
  models::CorrectionConfig correction;
  models::AcousticConfig acoustic;
  trainer::TrainConfig train;
  synth::SynthConfig synth;
  evaluation::MatchConfig match;
  std::size_t map_window = 0;
};

/// "paper": full-length segments and the published schedule.
/// "desk": 2 s segments and short runs for a laptop CPU.
Profile preset(const std::string& name);

/// Applies a JSON object of overrides onto `base`. Unknown sections or keys
/// are errors. An optional top-level "profile" picks the base preset.
Profile apply_config(const Profile& base, const std::string& json_text);

/// Preset named by `profile_name` (or by the file's "profile" key, default
/// "desk"), then the file's overrides.
Profile load_profile(const std::optional<std::filesystem::path>& config,
                     const std::optional<std::string>& profile_name);

/// Full JSON dump of a profile; apply_config(preset(p.name), to_json(p)) == p.
std::string profile_json(const Profile& profile);

}  // namespace velocorr::formats

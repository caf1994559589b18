#include "velocorr/formats.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "json.hpp"

namespace velocorr::formats {
namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "formats assume a little-endian host");

constexpr std::uint32_t kGridVersion = 1;
constexpr std::uint32_t kMelVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* b = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), b, b + sizeof v);
}

class Cursor {
 public:
  Cursor(std::span<const std::uint8_t> b, const char* what) : b_(b), what_(what) {}
  template <typename T>
  T get() {
    T v;
    need(sizeof v);
    std::memcpy(&v, b_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  void floats(float* dst, std::size_t n) {
    need(n * sizeof(float));
    std::memcpy(dst, b_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }
  std::size_t remaining() const { return b_.size() - pos_; }
  void magic(const char* m) {
    need(4);
    if (std::memcmp(b_.data(), m, 4) != 0) {
      throw FormatError(std::string(what_) + ": bad magic, expected '" + m + "'");
    }
    pos_ = 4;
  }

 private:
  void need(std::size_t n) const {
    if (n > b_.size() - pos_) {
      throw FormatError(std::string(what_) + ": truncated at byte " + std::to_string(pos_));
    }
  }
  std::span<const std::uint8_t> b_;
  const char* what_;
  std::size_t pos_ = 0;
};

// Symmetric field table: `f(section, key, ref)` is called for every scalar
// tunable, so dumping and overriding can never drift apart.
template <typename F>
void visit_fields(Profile& p, F&& f) {
  f("segment", "frames", p.segment.frames);
  f("segment", "frames_per_second", p.segment.frames_per_second);
  f("segment", "hop_frames", p.hop_frames);
  f("score", "velocity_divisor", p.velocity_divisor);
  f("score", "pedal_extends_offsets", p.pedal_extends_offsets);
  f("mel", "sample_rate", p.mel.sample_rate);
  f("mel", "n_fft", p.mel.n_fft);
  f("mel", "hop", p.mel.hop);
  f("mel", "mel_bins", p.mel.mel_bins);
  f("mel", "fmin", p.mel.fmin);
  f("mel", "fmax", p.mel.fmax);
  f("mel", "power_floor", p.mel.power_floor);
  f("correction", "hidden", p.correction.hidden);
  f("acoustic", "conv", p.acoustic.conv_channels);
  f("acoustic", "kernel", p.acoustic.kernel);
  f("acoustic", "rnn", p.acoustic.rnn_hidden);
  f("train", "iterations", p.train.iterations);
  f("train", "batch_size", p.train.batch_size);
  f("train", "base_lr", p.train.adam.base_lr);
  f("train", "beta1", p.train.adam.beta1);
  f("train", "beta2", p.train.adam.beta2);
  f("train", "eps", p.train.adam.eps);
  f("train", "decay_rate", p.train.adam.decay_rate);
  f("train", "decay_steps", p.train.adam.decay_steps);
  f("train", "grad_clip_norm", p.train.adam.grad_clip_norm);
  f("train", "weight_decay", p.train.adam.weight_decay);
  f("train", "seed", p.train.seed);
  f("train", "validation_interval", p.train.validation_interval);
  f("synth", "seed", p.synth.seed);
  f("synth", "notes_per_second", p.synth.notes_per_second);
  f("synth", "lowest_pitch", p.synth.lowest_pitch);
  f("synth", "highest_pitch", p.synth.highest_pitch);
  f("synth", "min_duration_s", p.synth.min_duration_s);
  f("synth", "max_duration_s", p.synth.max_duration_s);
  f("synth", "dynamics_period_s", p.synth.dynamics_period_s);
  f("synth", "dynamics_center", p.synth.dynamics_center);
  f("synth", "dynamics_depth", p.synth.dynamics_depth);
  f("synth", "jitter", p.synth.jitter);
  f("synth", "min_velocity", p.synth.min_velocity);
  f("synth", "max_velocity", p.synth.max_velocity);
  f("synth", "noise_sigma", p.synth.noise_sigma);
  f("synth", "bias", p.synth.bias);
  f("synth", "compression", p.synth.compression);
  f("synth", "compression_pivot", p.synth.compression_pivot);
  f("synth", "smear_frames", p.synth.smear_frames);
  f("synth", "fill_sustain", p.synth.fill_sustain);
  f("synth", "piece_seconds", p.synth.piece_seconds);
  f("synth", "train_pieces", p.synth.train_pieces);
  f("synth", "val_pieces", p.synth.val_pieces);
  f("synth", "test_pieces", p.synth.test_pieces);
  f("synth", "audio", p.synth.audio);
  f("match", "onset_tolerance", p.match.onset_tolerance);
  f("match", "offset_ratio", p.match.offset_ratio);
  f("match", "offset_min_tolerance", p.match.offset_min_tolerance);
  f("match", "velocity_tolerance", p.match.velocity_tolerance);
  f("match", "use_offset", p.match.use_offset);
  f("map", "window", p.map_window);
}

std::string reduction_name(nn::Reduction r) {
  return r == nn::Reduction::kSum ? "sum" : "mean";
}

// Keeps derived fields consistent and rejects impossible values.
void finalize(Profile& p) {
  if (p.segment.frames == 0) throw ConfigError("segment.frames must be positive");
  if (p.hop_frames == 0) throw ConfigError("segment.hop_frames must be positive");
  if (!(p.segment.frames_per_second > 0)) throw ConfigError("segment.frames_per_second must be positive");
  if (p.train.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(p.train.adam.base_lr > 0)) throw ConfigError("train.base_lr must be positive");
  if (p.train.adam.decay_steps == 0) throw ConfigError("train.decay_steps must be positive");
  if (!(p.velocity_divisor > 0)) throw ConfigError("score.velocity_divisor must be positive");
  if (p.acoustic.conv_channels.empty()) throw ConfigError("acoustic.conv needs at least one block");
  if (!(p.match.onset_tolerance > 0) || !(p.match.velocity_tolerance > 0) ||
      !(p.match.offset_min_tolerance > 0) || !(p.match.offset_ratio > 0)) {
    throw ConfigError("match tolerances must be positive");
  }
  p.segment.owned_frames = std::min(p.hop_frames, p.segment.frames);
  p.correction.features = p.features;
  p.acoustic.mel_bins = p.mel.mel_bins;
  p.synth.frames_per_second = p.segment.frames_per_second;
  p.synth.sample_rate = p.mel.sample_rate;
}

}  // namespace

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(is), {});
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!os) throw FormatError("cannot write " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// ---------------------------------------------------------------- grids

std::vector<std::uint8_t> encode_grid(const Tensor2<float>& values, float fps) {
  std::vector<std::uint8_t> out{'V', 'G', 'R', 'D'};
  put(out, kGridVersion);
  put(out, std::uint32_t(values.rows()));
  put(out, std::uint32_t(values.cols()));
  put(out, fps);
  for (float v : values.flat()) put(out, v);
  return out;
}

GridFile decode_grid(std::span<const std::uint8_t> bytes) {
  Cursor c(bytes, "grid file");
  c.magic("VGRD");
  if (const auto v = c.get<std::uint32_t>(); v != kGridVersion) {
    throw FormatError("grid file: version " + std::to_string(v) + " not supported");
  }
  const auto rows = c.get<std::uint32_t>();
  const auto cols = c.get<std::uint32_t>();
  GridFile g;
  g.frames_per_second = c.get<float>();
  if (std::uint64_t(rows) * cols * 4 != c.remaining()) {
    throw FormatError("grid file: payload is " + std::to_string(c.remaining()) + " bytes, header says " +
                      std::to_string(rows) + "x" + std::to_string(cols));
  }
  g.values = Tensor2<float>(rows, cols);
  c.floats(g.values.flat().data(), g.values.size());
  for (float v : g.values.flat()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw FormatError("grid file: value outside [0, 1]");
  }
  return g;
}

// ---------------------------------------------------------------- mel cache

std::vector<std::uint8_t> encode_mel(const MelCache& cache) {
  std::vector<std::uint8_t> out{'V', 'M', 'E', 'L'};
  put(out, kMelVersion);
  put(out, cache.source_digest);
  put(out, std::uint32_t(cache.mel.values.rows()));
  put(out, std::uint32_t(cache.mel.values.cols()));
  put(out, float(cache.mel.frames_per_second));
  for (float v : cache.mel.values.flat()) put(out, v);
  return out;
}

MelCache decode_mel(std::span<const std::uint8_t> bytes) {
  Cursor c(bytes, "mel cache");
  c.magic("VMEL");
  if (const auto v = c.get<std::uint32_t>(); v != kMelVersion) {
    throw FormatError("mel cache: version " + std::to_string(v) + " not supported");
  }
  MelCache m;
  m.source_digest = c.get<std::uint64_t>();
  const auto rows = c.get<std::uint32_t>();
  const auto cols = c.get<std::uint32_t>();
  m.mel.frames_per_second = c.get<float>();
  m.mel.mel_bins = cols;
  if (std::uint64_t(rows) * cols * 4 != c.remaining()) throw FormatError("mel cache: bad payload size");
  m.mel.values = Tensor2<float>(rows, cols);
  c.floats(m.mel.values.flat().data(), m.mel.values.size());
  return m;
}

// ---------------------------------------------------------------- manifest

std::filesystem::path Manifest::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : base_dir / p;
}

std::vector<const ManifestItem*> Manifest::split(const std::string& name) const {
  std::vector<const ManifestItem*> out;
  for (const auto& it : items) {
    if (name == "all" || it.split == name) out.push_back(&it);
  }
  return out;
}

const ManifestItem* Manifest::find(const std::string& id) const {
  for (const auto& it : items) {
    if (it.id == id) return &it;
  }
  return nullptr;
}

Manifest parse_manifest(const std::string& json_text, const std::filesystem::path& base_dir,
                        bool check_files) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("items") || !j["items"].is_array()) {
    throw ConfigError("manifest must be an object with an \"items\" array");
  }
  Manifest m;
  m.base_dir = base_dir;
  std::set<std::string> ids;
  for (const auto& e : j["items"]) {
    auto str = [&](const char* key) -> std::optional<std::string> {
      if (!e.contains(key)) return std::nullopt;
      if (!e[key].is_string()) throw ConfigError(std::string("manifest field '") + key + "' must be a string");
      return e[key].get<std::string>();
    };
    for (const auto& [key, _] : e.items()) {
      if (key != "id" && key != "midi" && key != "audio" && key != "grid" && key != "split") {
        throw ConfigError("manifest item has unknown field '" + key + "'");
      }
    }
    ManifestItem item;
    const auto id = str("id");
    const auto midi = str("midi");
    const auto split = str("split");
    if (!id || id->empty() || !midi || !split) {
      throw ConfigError("manifest item needs id, midi and split");
    }
    item.id = *id;
    item.midi = *midi;
    item.split = *split;
    if (const auto a = str("audio")) item.audio = *a;
    if (const auto g = str("grid")) item.grid = *g;
    if (item.split != "train" && item.split != "val" && item.split != "test") {
      throw ConfigError("item '" + item.id + "': split must be train, val or test");
    }
    if (item.audio.has_value() == item.grid.has_value()) {
      throw ConfigError("item '" + item.id + "': exactly one of audio or grid is required");
    }
    if (!ids.insert(item.id).second) throw ConfigError("duplicate manifest id '" + item.id + "'");
    if (check_files) {
      for (const auto* p : {&item.midi, item.audio ? &*item.audio : &*item.grid}) {
        if (!std::filesystem::exists(m.resolve(*p))) {
          throw ConfigError("item '" + item.id + "': missing file " + m.resolve(*p).string());
        }
      }
    }
    m.items.push_back(std::move(item));
  }
  return m;
}

Manifest load_manifest(const std::filesystem::path& path, bool check_files) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(path);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  return parse_manifest(std::string(bytes.begin(), bytes.end()), path.parent_path(), check_files);
}

std::string manifest_json(const Manifest& manifest) {
  json items = json::array();
  for (const auto& it : manifest.items) {
    json e;
    e["id"] = it.id;
    e["midi"] = it.midi.generic_string();
    if (it.audio) e["audio"] = it.audio->generic_string();
    if (it.grid) e["grid"] = it.grid->generic_string();
    e["split"] = it.split;
    items.push_back(std::move(e));
  }
  return json{{"items", items}}.dump(2) + "\n";
}

// ---------------------------------------------------------------- profiles

Profile preset(const std::string& name) {
  Profile p;
  p.name = name;
  if (name == "paper") {
    p.segment.frames = 1001;
    p.hop_frames = 1001;
    p.train.iterations = 200000;
    p.train.batch_size = 12;
    p.train.adam.base_lr = 1e-4;
    p.train.validation_interval = 1000;
    p.synth.piece_seconds = 30.0;
    p.synth.train_pieces = 100;
    p.synth.val_pieces = 10;
    p.synth.test_pieces = 10;
  } else if (name == "desk") {
    p.segment.frames = 200;
    p.hop_frames = 200;
    p.train.iterations = 2000;
    p.train.batch_size = 4;
    p.train.adam.base_lr = 1e-4;
    p.train.validation_interval = 250;
    p.synth.piece_seconds = 2.0;
    p.synth.train_pieces = 8;
    p.synth.val_pieces = 2;
    p.synth.test_pieces = 2;
  } else {
    throw ConfigError("unknown profile '" + name + "' (expected paper or desk)");
  }
  finalize(p);
  return p;
}

Profile apply_config(const Profile& base, const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  Profile p = base;
  if (j.contains("profile")) {
    if (!j["profile"].is_string()) throw ConfigError("'profile' must be a string");
    p = preset(j["profile"].get<std::string>());
  }
  std::set<std::string> known{"profile", "features", "train.reduction"};
  visit_fields(p, [&](const char* sec, const char* key, auto& ref) {
    known.insert(std::string(sec) + "." + key);
    if (j.contains(sec) && j[sec].is_object() && j[sec].contains(key)) {
      try {
        j[sec][key].get_to(ref);
      } catch (const json::exception&) {
        throw ConfigError(std::string("config ") + sec + "." + key + " has the wrong type");
      }
    }
  });
  for (const auto& [sec, val] : j.items()) {
    if (known.count(sec)) continue;
    if (!val.is_object()) throw ConfigError("unknown config key '" + sec + "'");
    for (const auto& [key, _] : val.items()) {
      if (!known.count(sec + "." + key)) throw ConfigError("unknown config key '" + sec + "." + key + "'");
    }
  }
  if (j.contains("features")) {
    try {
      p.features = models::FeatureConfig::parse(j["features"].get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config features: ") + e.what());
    }
  }
  if (j.contains("train") && j["train"].contains("reduction")) {
    const auto r = j["train"]["reduction"].get<std::string>();
    if (r == "sum") {
      p.train.reduction = nn::Reduction::kSum;
    } else if (r == "mean") {
      p.train.reduction = nn::Reduction::kMeanOverMask;
    } else {
      throw ConfigError("train.reduction must be sum or mean");
    }
  }
  finalize(p);
  return p;
}

Profile load_profile(const std::optional<std::filesystem::path>& config,
                     const std::optional<std::string>& profile_name) {
  std::string text = "{}";
  if (config) {
    std::vector<std::uint8_t> bytes;
    try {
      bytes = read_file(*config);
    } catch (const FormatError& e) {
      throw ConfigError(e.what());
    }
    text.assign(bytes.begin(), bytes.end());
  }
  // An explicit --profile wins over the file's "profile" key.
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  std::string name = "desk";
  if (j.is_object() && j.contains("profile") && j["profile"].is_string()) name = j["profile"];
  if (profile_name) name = *profile_name;
  if (j.is_object()) j.erase("profile");
  return apply_config(preset(name), j.dump());
}

std::string profile_json(const Profile& profile) {
  Profile p = profile;
  json j;
  j["profile"] = p.name;
  visit_fields(p, [&](const char* sec, const char* key, auto& ref) { j[sec][key] = ref; });
  std::string feats;
  if (p.features.onset) feats += "onset,";
  if (p.features.frame) feats += "frame,";
  if (p.features.frame_ex) feats += "frame_ex,";
  if (!feats.empty()) feats.pop_back();
  j["features"] = feats.empty() ? "none" : feats;
  j["train"]["reduction"] = reduction_name(p.train.reduction);
  return j.dump(2) + "\n";
}

}  // namespace velocorr::formats

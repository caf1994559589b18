#include "velocorr/cli.hpp"

#include <fstream>
#include <memory>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "velocorr/checkpoint.hpp"
#include "velocorr/evaluation.hpp"
#include "velocorr/formats.hpp"
#include "velocorr/synthcorpus.hpp"
#include "velocorr/trainer.hpp"

namespace velocorr::cli {
namespace {

namespace fs = std::filesystem;
using formats::ConfigError;

// Raised for conditions that map onto a specific exit code.
struct ExitError : std::runtime_error {
  ExitError(int c, const std::string& what) : std::runtime_error(what), code(c) {}
  int code;
};

struct Common {
  std::optional<fs::path> config;
  std::optional<std::string> profile;
  std::optional<std::string> features;
  std::optional<std::uint64_t> seed;

  formats::Profile load() const {
    formats::Profile p = formats::load_profile(config, profile);
    if (features) {
      try {
        p.features = models::FeatureConfig::parse(*features);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      p.correction.features = p.features;
    }
    if (seed) {
      p.train.seed = *seed;
      p.synth.seed = *seed;
    }
    return p;
  }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON configuration file");
  cmd->add_option("--profile", c.profile, "preset: desk or paper");
  cmd->add_option("--features", c.features,
                  "score features for the correction input, e.g. onset,frame_ex");
  cmd->add_option("--seed", c.seed, "seed for training and corpus generation");
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

midi::MidiPerformance load_midi(const fs::path& path, const formats::Profile& p) {
  midi::ParseOptions opts;
  opts.pedal_extends_offsets = p.pedal_extends_offsets;
  return midi::parse_smf(formats::read_file(path), opts);
}

std::uint64_t mel_digest(std::span<const std::uint8_t> audio, const formats::Profile& p) {
  nlohmann::json cfg{{"sample_rate", p.mel.sample_rate}, {"n_fft", p.mel.n_fft},
                     {"hop", p.mel.hop},                 {"mel_bins", p.mel.mel_bins},
                     {"fmin", p.mel.fmin},               {"fmax", p.mel.fmax},
                     {"floor", p.mel.power_floor}};
  return checkpoint::fnv1a64(audio, checkpoint::fnv1a64(cfg.dump()));
}

class Pipeline {
 public:
  Pipeline(const formats::Manifest& m, formats::Profile p, fs::path cache_dir)
      : manifest_(m), profile_(std::move(p)), cache_dir_(std::move(cache_dir)) {}

  const formats::Profile& profile() const { return profile_; }

  void set_acoustic(const fs::path& ckpt_path) {
    auto ckpt = read_checkpoint(ckpt_path, profile_.acoustic.architecture());
    acoustic_ = std::make_unique<models::AcousticModel<float>>(profile_.acoustic, 0);
    models::load_checkpoint<float>(*acoustic_, ckpt);
  }

  void set_correction(const fs::path& ckpt_path) {
    auto ckpt = read_checkpoint(ckpt_path, profile_.correction.architecture());
    correction_ = std::make_unique<models::CorrectionModel<float>>(profile_.correction, 0);
    models::load_checkpoint<float>(*correction_, ckpt);
  }

  static checkpoint::Checkpoint read_checkpoint(const fs::path& path, const std::string& arch) {
    std::vector<std::uint8_t> bytes;
    try {
      bytes = formats::read_file(path);
    } catch (const formats::FormatError& e) {
      throw ExitError(kExitCheckpoint, e.what());
    }
    try {
      return checkpoint::decode(bytes, arch);
    } catch (const checkpoint::CheckpointError& e) {
      throw ExitError(kExitCheckpoint, path.string() + ": " + e.what());
    }
  }

  midi::MidiPerformance performance(const formats::ManifestItem& item) const {
    return load_midi(manifest_.resolve(item.midi), profile_);
  }

  std::vector<pianoroll::Segment> segments(const midi::MidiPerformance& perf) const {
    return pianoroll::segment_performance(perf, profile_.segment, profile_.hop_frames,
                                          {profile_.velocity_divisor});
  }

  /// Log-mel for an audio item, through the digest-keyed cache. `hit`
  /// reports whether the cache was used.
  dsp::MelSpectrogram mel(const formats::ManifestItem& item, bool* hit = nullptr) const {
    const auto audio = formats::read_file(manifest_.resolve(*item.audio));
    const std::uint64_t digest = mel_digest(audio, profile_);
    const fs::path cache = cache_dir_ / (item.id + ".vmel");
    if (fs::exists(cache)) {
      try {
        auto c = formats::decode_mel(formats::read_file(cache));
        if (c.source_digest == digest) {
          if (hit) *hit = true;
          return c.mel;
        }
      } catch (const formats::FormatError&) {
        // Recompute below.
      }
    }
    if (hit) *hit = false;
    formats::MelCache c{digest, dsp::log_mel(dsp::read_wav(audio, profile_.mel.sample_rate), profile_.mel)};
    formats::write_file(cache, formats::encode_mel(c));
    return c.mel;
  }

  /// Piece-level preliminary grid: the item's grid file, or the acoustic
  /// branch run window by window over its audio.
  Tensor2<float> preliminary(const formats::ManifestItem& item,
                             const midi::MidiPerformance& perf) const {
    if (item.grid) {
      auto g = formats::decode_grid(formats::read_file(manifest_.resolve(*item.grid)));
      if (g.values.cols() != profile_.segment.keys) {
        throw ConfigError("item '" + item.id + "': grid has " + std::to_string(g.values.cols()) +
                          " keys, expected " + std::to_string(profile_.segment.keys));
      }
      if (std::abs(g.frames_per_second - profile_.segment.frames_per_second) > 1e-3) {
        throw ConfigError("item '" + item.id + "': grid frame rate differs from the profile");
      }
      return std::move(g.values);
    }
    if (!acoustic_) {
      throw ConfigError("item '" + item.id +
                        "' has audio; pass --acoustic-checkpoint to produce preliminary grids");
    }
    const auto mel_spec = mel(item);
    const auto segs = segments(perf);
    const auto& spec = profile_.segment;
    Tensor2<float> out(pianoroll::piece_frames(segs.size(), spec, profile_.hop_frames), spec.keys);
    for (const auto& seg : segs) {
      const std::size_t first = std::size_t(seg.spec.first_frame());
      const auto grid = models::acoustic_forward(
          *acoustic_, {slice_rows(mel_spec.values, first, spec.frames), mel_spec.frames_per_second,
                       mel_spec.mel_bins});
      place(grid.values, seg.spec, out);
    }
    return out;
  }

  /// Grids per segment for evaluation or inference.
  std::vector<models::VelocityGrid> grids(const std::vector<pianoroll::Segment>& segs,
                                          const Tensor2<float>& prelim, bool refined) {
    std::vector<models::VelocityGrid> out;
    for (const auto& seg : segs) {
      models::VelocityGrid g{
          slice_rows(prelim, std::size_t(seg.spec.first_frame()), seg.spec.frames),
          models::GridRole::kPreliminary};
      if (refined) {
        g = models::correction_forward(
            *correction_, models::build_correction_input(g, seg.features, profile_.features));
      }
      out.push_back(std::move(g));
    }
    return out;
  }

  /// Writes a window's owned rows into a piece-level grid.
  static void place(const Tensor2<float>& window, const pianoroll::SegmentSpec& spec,
                    Tensor2<float>& piece) {
    const std::size_t first = std::size_t(spec.first_frame());
    for (std::size_t r = 0; r < spec.owned_frames && first + r < piece.rows(); ++r) {
      std::copy_n(window.row(r).data(), window.cols(), piece.row(first + r).data());
    }
  }

  bool has_correction() const { return correction_ != nullptr; }

 private:
  const formats::Manifest& manifest_;
  formats::Profile profile_;
  fs::path cache_dir_;
  std::unique_ptr<models::AcousticModel<float>> acoustic_;
  std::unique_ptr<models::CorrectionModel<float>> correction_;
};

fs::path default_cache(const formats::Manifest& m) { return m.base_dir / "cache"; }

// ---------------------------------------------------------------- commands

int cmd_gen_synth(const Common& common, const fs::path& out_dir, std::ostream& out) {
  const auto profile = common.load();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    throw ConfigError("cannot create output directory " + out_dir.string());
  }
  {
    std::ofstream probe(out_dir / ".write_test");
    if (!probe) throw ConfigError("output directory " + out_dir.string() + " is not writable");
  }
  fs::remove(out_dir / ".write_test");

  const auto corpus = synth::generate(profile.synth);
  formats::Manifest manifest;
  manifest.base_dir = out_dir;
  for (const auto& piece : corpus.pieces) {
    formats::ManifestItem item;
    item.id = piece.id;
    item.split = piece.split;
    item.midi = fs::path("midi") / (piece.id + ".mid");
    formats::write_file(out_dir / item.midi, midi::write_smf(piece.performance));
    const fs::path grid = fs::path("grids") / (piece.id + ".vgrd");
    formats::write_file(out_dir / grid, formats::encode_grid(
                                            piece.prelim, float(profile.segment.frames_per_second)));
    if (piece.audio) {
      item.audio = fs::path("audio") / (piece.id + ".wav");
      formats::write_file(out_dir / *item.audio, dsp::write_wav_pcm16(*piece.audio));
    } else {
      item.grid = grid;
    }
    manifest.items.push_back(std::move(item));
  }
  formats::write_text(out_dir / "manifest.json", formats::manifest_json(manifest));
  formats::write_text(out_dir / "config.json", formats::profile_json(profile));
  out << "wrote " << manifest.items.size() << " items (" << profile.synth.train_pieces << " train, "
      << profile.synth.val_pieces << " val, " << profile.synth.test_pieces << " test) to "
      << out_dir.string() << "\n";
  return kExitOk;
}

int cmd_extract(const Common& common, const fs::path& manifest_path,
                const std::optional<fs::path>& cache_opt, std::ostream& out, std::ostream& err) {
  const auto profile = common.load();
  const auto manifest = formats::load_manifest(manifest_path);
  const fs::path cache_dir = cache_opt.value_or(default_cache(manifest));
  Pipeline pipe(manifest, profile, cache_dir);
  std::size_t done = 0, skipped = 0, failed = 0;
  for (const auto& item : manifest.items) {
    try {
      const auto midi_bytes = formats::read_file(manifest.resolve(item.midi));
      // The stamp covers the score and every setting that shapes features.
      std::uint64_t digest = checkpoint::fnv1a64(midi_bytes);
      const std::string settings = formats::profile_json(profile);
      digest = checkpoint::fnv1a64(
          std::span(reinterpret_cast<const std::uint8_t*>(settings.data()), settings.size()), digest);
      if (item.audio) {
        digest ^= mel_digest(formats::read_file(manifest.resolve(*item.audio)), profile);
      }
      const fs::path stamp = cache_dir / (item.id + ".stamp");
      if (fs::exists(stamp) && fs::exists(cache_dir / (item.id + ".features")) &&
          (!item.audio || fs::exists(cache_dir / (item.id + ".vmel")))) {
        std::ifstream is(stamp);
        std::string stored;
        is >> stored;
        if (stored == hex(digest)) {
          ++skipped;
          continue;
        }
      }
      const auto perf = pipe.performance(item);
      const auto segs = pipe.segments(perf);
      // One grid file per item: every window's onset | frame | frame_ex |
      // target columns, windows stacked along the rows.
      const std::size_t K = profile.segment.keys;
      Tensor2<float> stack(segs.size() * profile.segment.frames, 4 * K);
      for (std::size_t s = 0; s < segs.size(); ++s) {
        const auto& f = segs[s].features;
        for (std::size_t t = 0; t < profile.segment.frames; ++t) {
          float* row = stack.row(s * profile.segment.frames + t).data();
          for (std::size_t k = 0; k < K; ++k) {
            row[k] = f.onset(t, k);
            row[K + k] = f.frame(t, k);
            row[2 * K + k] = f.frame_ex(t, k);
            row[3 * K + k] = f.target_vel(t, k);
          }
        }
      }
      formats::write_file(cache_dir / (item.id + ".features"),
                          formats::encode_grid(stack, float(profile.segment.frames_per_second)));
      if (item.audio) {
        const auto m = pipe.mel(item);
        out << item.id << ": " << segs.size() << " segments, mel " << m.values.rows() << "x"
            << m.values.cols() << "\n";
      } else {
        out << item.id << ": " << segs.size() << " segments\n";
      }
      formats::write_text(stamp, hex(digest) + "\n");
      ++done;
    } catch (const std::exception& e) {
      err << "extract " << item.id << ": " << e.what() << "\n";
      ++failed;
    }
  }
  out << "extracted " << done << ", up to date " << skipped << ", failed " << failed << "\n";
  if (failed > 0 && failed == manifest.items.size()) return kExitFailure;
  return kExitOk;
}

int cmd_train(const Common& common, const fs::path& manifest_path, const std::string& model_name,
              const fs::path& out_dir, const std::optional<fs::path>& acoustic_ckpt,
              const std::optional<fs::path>& cache_opt, std::ostream& out, std::ostream& err) {
  if (model_name != "correction" && model_name != "acoustic") {
    throw ConfigError("--model must be correction or acoustic, got '" + model_name + "'");
  }
  auto profile = common.load();
  const auto manifest = formats::load_manifest(manifest_path);
  Pipeline pipe(manifest, profile, cache_opt.value_or(default_cache(manifest)));
  if (acoustic_ckpt) pipe.set_acoustic(*acoustic_ckpt);

  std::vector<trainer::Sample> train_set, val_set;
  for (const auto& item : manifest.items) {
    if (item.split == "test") continue;
    auto& dst = item.split == "train" ? train_set : val_set;
    const auto perf = pipe.performance(item);
    std::vector<trainer::Sample> samples;
    if (model_name == "acoustic") {
      if (!item.audio) {
        err << "skipping " << item.id << ": acoustic training needs audio\n";
        continue;
      }
      samples = trainer::acoustic_samples(item.id, perf, pipe.mel(item).values, profile.segment,
                                          profile.hop_frames);
    } else {
      samples = trainer::correction_samples(item.id, perf, pipe.preliminary(item, perf),
                                            profile.segment, profile.hop_frames, profile.features);
    }
    for (auto& s : samples) dst.push_back(std::move(s));
  }

  std::unique_ptr<models::VelocityModel<float>> model;
  if (model_name == "acoustic") {
    model = std::make_unique<models::AcousticModel<float>>(profile.acoustic, profile.train.seed);
  } else {
    model = std::make_unique<models::CorrectionModel<float>>(profile.correction, profile.train.seed);
  }
  auto cfg = profile.train;
  cfg.checkpoint_dir = out_dir;
  cfg.metadata_json = nlohmann::json{{"model", model_name}, {"profile", profile.name}}.dump();
  fs::create_directories(out_dir);
  std::ofstream log(out_dir / "train.log", std::ios::trunc);
  trainer::TrainState state;
  try {
    state = trainer::train(*model, train_set, val_set, cfg, &log);
  } catch (const trainer::TrainError& e) {
    throw ExitError(kExitTraining, std::string("training failed: ") + e.what());
  } catch (const nn::NonFiniteError& e) {
    throw ExitError(kExitTraining, std::string("training failed: ") + e.what());
  }
  for (const auto& w : state.warnings) err << "warning: " << w << "\n";
  out << "architecture " << model->architecture() << "\n";
  out << "iterations " << state.iteration << "\n";
  out << "best_val_mae=" << (state.best_mae ? std::to_string(*state.best_mae) : "n/a")
      << " at iteration " << state.best_iteration << "\n";
  out << "checkpoints " << (out_dir / "best.ckpt").string() << " " << (out_dir / "last.ckpt").string()
      << "\n";
  return kExitOk;
}

int cmd_infer(const Common& common, const fs::path& manifest_path,
              const std::vector<std::string>& ids, const std::string& split,
              const std::optional<fs::path>& ckpt, const std::optional<fs::path>& acoustic_ckpt,
              const std::string& source, const fs::path& out_dir,
              const std::optional<fs::path>& cache_opt, std::ostream& out) {
  const auto profile = common.load();
  const auto manifest = formats::load_manifest(manifest_path);
  Pipeline pipe(manifest, profile, cache_opt.value_or(default_cache(manifest)));
  if (acoustic_ckpt) pipe.set_acoustic(*acoustic_ckpt);
  const bool refined = source == "refined";
  if (!refined && source != "preliminary") throw ConfigError("--source must be preliminary or refined");
  if (refined) {
    if (!ckpt) throw ConfigError("--checkpoint is required for refined output");
    pipe.set_correction(*ckpt);
  }
  std::vector<const formats::ManifestItem*> items;
  if (!ids.empty()) {
    for (const auto& id : ids) {
      const auto* it = manifest.find(id);
      if (!it) throw ConfigError("no manifest item '" + id + "'");
      items.push_back(it);
    }
  } else {
    items = manifest.split(split);
  }
  if (items.empty()) throw ConfigError("nothing to infer");
  const models::MapOptions map{profile.map_window, {profile.velocity_divisor}};
  for (const auto* item : items) {
    const auto perf = pipe.performance(*item);
    const auto segs = pipe.segments(perf);
    const auto grids = pipe.grids(segs, pipe.preliminary(*item, perf), refined);
    Tensor2<float> piece(pianoroll::piece_frames(segs.size(), profile.segment, profile.hop_frames),
                         profile.segment.keys);
    for (std::size_t s = 0; s < segs.size(); ++s) Pipeline::place(grids[s].values, segs[s].spec, piece);
    evaluation::PieceInput input{item->id, perf, segs, grids};
    midi::MidiPerformance corrected = perf;
    corrected.notes = evaluation::estimated_notes(input, map);
    formats::write_file(out_dir / (item->id + "." + source + ".vgrd"),
                        formats::encode_grid(piece, float(profile.segment.frames_per_second)));
    formats::write_file(out_dir / (item->id + ".mid"), midi::write_smf(corrected));
    out << item->id << ": " << corrected.notes.size() << " notes, grid " << piece.rows() << "x"
        << piece.cols() << "\n";
  }
  return kExitOk;
}

int cmd_eval(const Common& common, const fs::path& manifest_path, const std::string& split,
             const std::string& source, const std::optional<fs::path>& ckpt,
             const std::optional<fs::path>& acoustic_ckpt, bool no_offset,
             const std::optional<fs::path>& report_path, const std::optional<fs::path>& cache_opt,
             std::ostream& out) {
  auto profile = common.load();
  if (no_offset) profile.match.use_offset = false;
  const auto manifest = formats::load_manifest(manifest_path);
  const auto items = manifest.split(split);
  if (items.empty()) throw ConfigError("split '" + split + "' is empty");
  Pipeline pipe(manifest, profile, cache_opt.value_or(default_cache(manifest)));
  if (acoustic_ckpt) pipe.set_acoustic(*acoustic_ckpt);
  const bool refined = source == "refined";
  if (!refined && source != "preliminary") throw ConfigError("--source must be preliminary or refined");
  if (refined) {
    if (!ckpt) throw ConfigError("--checkpoint is required for --source refined");
    pipe.set_correction(*ckpt);
  }
  std::vector<evaluation::PieceInput> pieces;
  for (const auto* item : items) {
    auto perf = pipe.performance(*item);
    auto segs = pipe.segments(perf);
    auto grids = pipe.grids(segs, pipe.preliminary(*item, perf), refined);
    pieces.push_back({item->id, std::move(perf), std::move(segs), std::move(grids)});
  }
  const auto report = evaluation::evaluate_pipeline(
      pieces, profile.match, {profile.map_window, {profile.velocity_divisor}});
  std::string text = report.to_text();
  text.insert(text.find('\n') + 1, "source=" + source + "\nsplit=" + split + "\n");
  out << text;
  if (report_path) formats::write_text(*report_path, text);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Score-informed MIDI velocity correction", "velocorr"};
  app.require_subcommand(1);

  Common common;
  fs::path out_dir;
  fs::path manifest;
  std::string model = "correction";
  std::string source = "refined";
  std::string split = "test";
  std::vector<std::string> ids;
  std::optional<fs::path> ckpt, acoustic_ckpt, cache, report;
  bool no_offset = false;

  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic corpus and its manifest");
  add_common(gen, common);
  gen->add_option("--out", out_dir, "output directory")->required();

  auto* ext = app.add_subcommand("extract", "cache score features and log-mel spectrograms");
  add_common(ext, common);
  ext->add_option("--manifest", manifest)->required();
  ext->add_option("--cache", cache, "cache directory (default: <manifest dir>/cache)");

  auto* tr = app.add_subcommand("train", "train the correction or acoustic branch");
  add_common(tr, common);
  tr->add_option("--manifest", manifest)->required();
  tr->add_option("--model", model, "correction or acoustic");
  tr->add_option("--out", out_dir, "checkpoint directory")->required();
  tr->add_option("--acoustic-checkpoint", acoustic_ckpt, "frozen acoustic branch for audio items");
  tr->add_option("--cache", cache);

  auto* inf = app.add_subcommand("infer", "write refined grids and corrected MIDI");
  add_common(inf, common);
  inf->add_option("--manifest", manifest)->required();
  inf->add_option("--item", ids, "manifest ids (default: every item of --split)");
  inf->add_option("--split", split, "train, val, test or all");
  inf->add_option("--checkpoint", ckpt, "correction checkpoint");
  inf->add_option("--acoustic-checkpoint", acoustic_ckpt);
  inf->add_option("--source", source, "preliminary or refined");
  inf->add_option("--out", out_dir)->required();
  inf->add_option("--cache", cache);

  auto* ev = app.add_subcommand("eval", "report MAE, STD and recall on a split");
  add_common(ev, common);
  ev->add_option("--manifest", manifest)->required();
  ev->add_option("--split", split, "train, val, test or all");
  ev->add_option("--source", source, "preliminary or refined");
  ev->add_option("--checkpoint", ckpt, "correction checkpoint");
  ev->add_option("--acoustic-checkpoint", acoustic_ckpt);
  ev->add_flag("--no-offset", no_offset, "match on onsets only");
  ev->add_option("--out", report, "also write the report here");
  ev->add_option("--cache", cache);

  std::vector<std::string> argv_store{"velocorr"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_synth(common, out_dir, out);
    if (ext->parsed()) return cmd_extract(common, manifest, cache, out, err);
    if (tr->parsed()) return cmd_train(common, manifest, model, out_dir, acoustic_ckpt, cache, out, err);
    if (inf->parsed()) {
      return cmd_infer(common, manifest, ids, split, ckpt, acoustic_ckpt, source, out_dir, cache, out);
    }
    if (ev->parsed()) {
      return cmd_eval(common, manifest, split, source, ckpt, acoustic_ckpt, no_offset, report, cache,
                      out);
    }
  } catch (const ExitError& e) {
    err << "error: " << e.what() << "\n";
    return e.code;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const checkpoint::CheckpointError& e) {
    err << "error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace velocorr::cli

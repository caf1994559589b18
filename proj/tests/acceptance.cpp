// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance            every criterion
//   acceptance 1 3 8      a subset
//
// Tolerances and experiment settings are pinned below. Experiments run
// through the command-line front end in a scratch directory.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "grad_suite.hpp"
#include "oracles.hpp"
#include "velocorr/cli.hpp"
#include "velocorr/dsp.hpp"
#include "velocorr/evaluation.hpp"
#include "velocorr/formats.hpp"
#include "velocorr/midi_io.hpp"
#include "velocorr/models.hpp"
#include "velocorr/pianoroll.hpp"

using namespace velocorr;
namespace fs = std::filesystem;

namespace {

// Pinned thresholds.
constexpr double kGradTolerance = 1e-4;
constexpr double kGradBudgetS = 120.0;
constexpr double kRollBudgetS = 60.0;
constexpr double kMetricTolerance = 1e-9;
constexpr double kOverfitMaxMae = 2.0;
constexpr double kOverfitBudgetS = 600.0;
constexpr double kRefineMinReduction = 0.30;
constexpr double kRefineClusterBand = 0.20;
constexpr double kRefineBudgetS = 1800.0;

// Overfit experiment: the desk profile's 8 synthetic training segments.
const char* kOverfitConfig = R"({"profile": "desk",
  "train": {"iterations": 2000, "batch_size": 4, "seed": 13, "validation_interval": 250},
  "synth": {"seed": 13, "noise_sigma": 0.07874015748031496,
            "train_pieces": 8, "val_pieces": 2, "test_pieces": 2}})";

// Refinement experiment: velocity-dependent bias (compression halfway toward
// the middle of the range) plus small noise, written on onset frames only.
// A one-octave pitch range gives every key enough onsets per batch to learn
// its mapping within the budget.
const char* kRefineConfig = R"({"profile": "desk",
  "train": {"iterations": 3000, "batch_size": 4, "seed": 13, "validation_interval": 250,
            "base_lr": 0.003, "decay_rate": 0.5, "decay_steps": 750},
  "synth": {"seed": 13, "noise_sigma": 0.015748031496062992, "compression": 0.5,
            "fill_sustain": false, "lowest_pitch": 60, "highest_pitch": 71,
            "train_pieces": 1000, "val_pieces": 4, "test_pieces": 16}})";

const char* kRefineFeatures[] = {"onset", "frame", "onset,frame_ex"};

fs::path scratch_root() {
#ifdef VELOCORR_ACCEPT_TMP
  return VELOCORR_ACCEPT_TMP;
#else
  return fs::temp_directory_path() / "velocorr_acceptance";
#endif
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli_run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) std::fprintf(stderr, "velocorr %s failed (%d): %s", args[0].c_str(), code, err.str().c_str());
  return {code, out.str(), err.str()};
}

std::map<std::string, std::string> report_fields(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos && line[0] != '#') kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::string slurp(const fs::path& p) {
  const auto b = formats::read_file(p);
  return {b.begin(), b.end()};
}

// --- 1 ---------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_case;
  int failures = 0, runs = 0;
  for (const auto& c : grad_suite::kCases) {
    for (int seed = 0; seed < grad_suite::kSeeds; ++seed) {
      const double rel = c.run(seed);
      ++runs;
      if (!(rel < kGradTolerance)) ++failures;
      if (rel > worst) {
        worst = rel;
        worst_case = std::string(c.name) + "#" + std::to_string(seed);
      }
    }
  }
  const double s = seconds_since(t0);
  return {failures == 0 && s < kGradBudgetS,
          std::to_string(runs) + " instances, worst relative error " + fmt("%.2e", worst) + " (" +
              worst_case + "), " + fmt("%.1f s", s)};
}

// --- 2 ---------------------------------------------------------------------

Outcome pianoroll_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2);
  std::size_t segments = 0, violations = 0;
  std::string first;
  pianoroll::SegmentSpec spec;
  spec.frames = 300;
  spec.owned_frames = 250;
  for (int i = 0; i < 1000; ++i) {
    auto perf = oracle::random_performance(rng, 30, 8.0, true);
    for (const auto& seg : pianoroll::segment_performance(perf, spec, std::size_t(250))) {
      ++segments;
      const auto why = oracle::roll_identity_violation(seg.features);
      if (!why.empty()) {
        ++violations;
        if (first.empty()) first = "performance " + std::to_string(i) + ": " + why;
      }
    }
  }
  const double s = seconds_since(t0);
  return {violations == 0 && s < kRollBudgetS,
          "1000 performances, " + std::to_string(segments) + " segments, " +
              std::to_string(violations) + " violations" + (first.empty() ? "" : " (" + first + ")") +
              ", " + fmt("%.1f s", s)};
}

// --- 3 ---------------------------------------------------------------------

Outcome metric_oracle() {
  std::mt19937_64 rng(3);
  int mismatches = 0;
  std::size_t matched = 0;
  for (int i = 0; i < 500; ++i) {
    const auto [ref, est] = oracle::matching_instance(rng);
    evaluation::MatchConfig cfg;
    cfg.use_offset = i % 4 != 0;
    const auto got = evaluation::match_notes(ref, est, cfg);
    const auto want = oracle::match(ref, est, cfg);
    matched += got.pairs.size();
    if (got.pairs != want.pairs || *got.recall != want.recall) ++mismatches;
  }
  double worst = 0.0;
  std::uniform_int_distribution<int> vel(0, 127), len(1, 500);
  for (int i = 0; i < 500; ++i) {
    std::vector<int> a(std::size_t(len(rng))), b(a.size());
    for (auto& x : a) x = vel(rng);
    for (auto& x : b) x = vel(rng);
    const auto got = evaluation::mae_std(a, b);
    const auto want = oracle::loop_mae_std(a, b);
    worst = std::max({worst, std::abs(got.mae - want.mae), std::abs(got.std - want.std)});
  }
  return {mismatches == 0 && worst <= kMetricTolerance,
          "500 matching instances, " + std::to_string(mismatches) + " mismatches (" +
              std::to_string(matched) + " pairs); mae/std max deviation " + fmt("%.1e", worst)};
}

// --- 4 ---------------------------------------------------------------------

Outcome midi_round_trip() {
  std::mt19937_64 rng(4);
  // The writer uses 480 ticks per quarter at 500000 us per quarter.
  const double tick = 0.5 / 480.0;
  int bad = 0;
  double worst = 0.0;
  std::uniform_int_distribution<std::size_t> count(0, 200);
  for (int i = 0; i < 200; ++i) {
    auto perf = oracle::random_performance(rng, count(rng), 60.0, false);
    for (auto& n : perf.notes) n.pitch = std::clamp(n.pitch, 21, 108);
    // Only tick-representable inputs: every note at least two ticks long
    // once same-pitch overlaps are resolved.
    midi::normalize(perf);
    std::erase_if(perf.notes, [&](const midi::NoteEvent& n) { return n.offset_s - n.onset_s < 2 * tick; });
    const auto back = midi::parse_smf(midi::write_smf(perf));
    // Notes sharing an onset tick may come back in another order; pair by
    // (pitch, onset) instead of by position.
    auto by_key = [](std::vector<midi::NoteEvent> v) {
      std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
        return std::pair(a.pitch, a.onset_s) < std::pair(b.pitch, b.onset_s);
      });
      return v;
    };
    const auto want = by_key(perf.notes), got = by_key(back.notes);
    bool ok = got.size() == want.size();
    for (std::size_t k = 0; ok && k < want.size(); ++k) {
      const auto& a = want[k];
      const auto& b = got[k];
      const double d = std::max(std::abs(a.onset_s - b.onset_s), std::abs(a.offset_s - b.offset_s));
      worst = std::max(worst, d);
      ok = a.pitch == b.pitch && a.velocity == b.velocity && d <= tick;
    }
    bad += !ok;
  }
  return {bad == 0, "200 performances, " + std::to_string(bad) + " failures, worst time error " +
                        fmt("%.2e s", worst) + " (quantum " + fmt("%.2e s)", tick)};
}

// --- 5 and 6 -----------------------------------------------------------------

struct ExperimentResult {
  bool ok = false;
  std::string detail;
  std::vector<fs::path> artifacts;  // compared byte for byte by criterion 7
};

ExperimentResult overfit(const fs::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult r;
  fs::remove_all(dir);
  fs::create_directories(dir);
  formats::write_text(dir / "config.json", kOverfitConfig);
  const auto cfg = (dir / "config.json").string();
  if (cli_run({"gen-synth", "--config", cfg, "--out", (dir / "corpus").string()}).code != 0) {
    r.detail = "gen-synth failed";
    return r;
  }
  const auto manifest = (dir / "corpus" / "manifest.json").string();
  if (cli_run({"train", "--config", cfg, "--manifest", manifest, "--out", (dir / "ckpt").string()})
          .code != 0) {
    r.detail = "training failed";
    return r;
  }
  // Train-set MAE of the final parameters.
  const auto ev = cli_run({"eval", "--config", cfg, "--manifest", manifest, "--split", "train",
                           "--checkpoint", (dir / "ckpt" / "last.ckpt").string(), "--out",
                           (dir / "train_report.txt").string()});
  if (ev.code != 0) {
    r.detail = "evaluation failed";
    return r;
  }
  const double mae = std::stod(report_fields(ev.out)["mae"]);
  const auto notes = report_fields(ev.out)["n_reference_notes"];
  const double s = seconds_since(t0);
  r.ok = mae < kOverfitMaxMae && s < kOverfitBudgetS;
  r.detail = "train MAE " + fmt("%.3f", mae) + " over " + notes + " notes (< " +
             fmt("%.1f", kOverfitMaxMae) + "), " + fmt("%.0f s", s);
  r.artifacts = {dir / "ckpt" / "last.ckpt", dir / "ckpt" / "best.ckpt", dir / "train_report.txt"};
  return r;
}

ExperimentResult refinement(const fs::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult r;
  fs::remove_all(dir);
  fs::create_directories(dir);
  formats::write_text(dir / "config.json", kRefineConfig);
  const auto cfg = (dir / "config.json").string();
  if (cli_run({"gen-synth", "--config", cfg, "--out", (dir / "corpus").string()}).code != 0) {
    r.detail = "gen-synth failed";
    return r;
  }
  const auto manifest = (dir / "corpus" / "manifest.json").string();
  const auto pre = cli_run({"eval", "--config", cfg, "--manifest", manifest, "--source",
                            "preliminary", "--out", (dir / "report_preliminary.txt").string()});
  if (pre.code != 0) {
    r.detail = "preliminary evaluation failed";
    return r;
  }
  const double mae0 = std::stod(report_fields(pre.out)["mae"]);
  const double rec0 = std::stod(report_fields(pre.out)["recall"]);
  r.artifacts.push_back(dir / "report_preliminary.txt");

  std::vector<double> maes, recalls;
  std::string rows;
  for (const char* feats : kRefineFeatures) {
    std::string tag = feats;
    std::replace(tag.begin(), tag.end(), ',', '+');
    const auto ckpt = dir / ("ckpt_" + tag);
    const auto report = dir / ("report_" + tag + ".txt");
    if (cli_run({"train", "--config", cfg, "--features", feats, "--manifest", manifest, "--out",
                 ckpt.string()})
            .code != 0) {
      r.detail = std::string("training failed for ") + feats;
      return r;
    }
    const auto ev = cli_run({"eval", "--config", cfg, "--features", feats, "--manifest", manifest,
                             "--checkpoint", (ckpt / "best.ckpt").string(), "--out",
                             report.string()});
    if (ev.code != 0) {
      r.detail = std::string("evaluation failed for ") + feats;
      return r;
    }
    maes.push_back(std::stod(report_fields(ev.out)["mae"]));
    recalls.push_back(std::stod(report_fields(ev.out)["recall"]));
    rows += " | audio+" + tag + " MAE " + fmt("%.3f", maes.back()) + " recall " +
            fmt("%.3f", recalls.back());
    r.artifacts.push_back(ckpt / "best.ckpt");
    r.artifacts.push_back(report);
  }
  const double s = seconds_since(t0);
  const double reduction = 1.0 - maes[0] / mae0;
  const double best = *std::min_element(maes.begin(), maes.end());
  bool clustered = true;
  for (double m : maes) clustered = clustered && m <= best * (1.0 + kRefineClusterBand);
  r.ok = reduction >= kRefineMinReduction && recalls[0] > rec0 && clustered && s < kRefineBudgetS;
  r.detail = "preliminary MAE " + fmt("%.3f", mae0) + " recall " + fmt("%.3f", rec0) + rows +
             " | onset reduction " + fmt("%.1f%%", 100.0 * reduction) + " (need >= 30%), within 20% of best: " +
             (clustered ? "yes" : "no") + ", " + fmt("%.0f s", s);
  return r;
}

bool same_bytes(const std::vector<fs::path>& a, const std::vector<fs::path>& b, std::string& why) {
  if (a.size() != b.size()) {
    why = "different artifact lists";
    return false;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!fs::exists(a[i]) || !fs::exists(b[i]) || slurp(a[i]) != slurp(b[i])) {
      why = a[i].filename().string() + " differs";
      return false;
    }
  }
  return true;
}

// --- 8 ---------------------------------------------------------------------

Outcome shape_contracts() {
  std::vector<std::string> problems;
  dsp::AudioClip clip;
  clip.samples.resize(160160);
  for (std::size_t n = 0; n < clip.samples.size(); ++n) {
    clip.samples[n] = float(0.3 * std::sin(2.0 * 3.141592653589793 * 440.0 * double(n) / 16000.0));
  }
  const auto mel = dsp::log_mel(clip);
  if (mel.values.rows() != 1001 || mel.values.cols() != 229) problems.push_back("mel shape");

  models::AcousticConfig ac;
  models::AcousticModel<float> acoustic(ac, 13);
  const auto prelim = models::acoustic_forward(acoustic, mel);
  if (prelim.values.rows() != 1001 || prelim.values.cols() != 88) problems.push_back("acoustic grid shape");

  midi::MidiPerformance perf;
  perf.notes = {{0.5, 1.0, 60, 80}, {2.0, 2.5, 64, 90}};
  pianoroll::SegmentSpec spec;  // 1001 frames
  const auto sf = pianoroll::rasterize(perf, spec);
  std::vector<std::string> widths;
  for (const char* f : {"onset", "onset,frame_ex"}) {
    models::CorrectionConfig cc;
    cc.features = models::FeatureConfig::parse(f);
    models::CorrectionModel<float> corr(cc, 13);
    const auto x = models::build_correction_input(prelim, sf, cc.features);
    const auto refined = models::correction_forward(corr, x);
    widths.push_back(std::to_string(x.cols()));
    if (refined.values.rows() != 1001 || refined.values.cols() != 88) {
      problems.push_back(std::string("refined grid shape for ") + f);
    }
  }
  if (widths[0] != "176" || widths[1] != "264") problems.push_back("concatenation widths");
  std::string detail = "mel " + std::to_string(mel.values.rows()) + "x" +
                       std::to_string(mel.values.cols()) + ", grids " +
                       std::to_string(prelim.values.rows()) + "x" +
                       std::to_string(prelim.values.cols()) + ", widths " + widths[0] + "/" + widths[1];
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto wanted = [&](int id) { return only.empty() || only.count(id) > 0; };
  const fs::path root = scratch_root();
  int failed = 0;
  auto report = [&](int id, const char* name, const Outcome& o) {
    std::printf("[%s] %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  };

  if (wanted(1)) report(1, "gradient suite", gradient_suite());
  if (wanted(2)) report(2, "pianoroll identities", pianoroll_suite());
  if (wanted(3)) report(3, "metric oracle", metric_oracle());
  if (wanted(4)) report(4, "MIDI round trip", midi_round_trip());

  ExperimentResult o1, r1;
  if (wanted(5) || wanted(7)) {
    o1 = overfit(root / "overfit_a");
    if (wanted(5)) report(5, "overfit experiment", {o1.ok, o1.detail});
  }
  if (wanted(6) || wanted(7)) {
    r1 = refinement(root / "refine_a");
    if (wanted(6)) report(6, "refinement experiment", {r1.ok, r1.detail});
  }
  if (wanted(7)) {
    const auto o2 = overfit(root / "overfit_b");
    const auto r2 = refinement(root / "refine_b");
    std::string why_o = "identical", why_r = "identical";
    const bool so = same_bytes(o1.artifacts, o2.artifacts, why_o);
    const bool sr = same_bytes(r1.artifacts, r2.artifacts, why_r);
    report(7, "determinism",
           {so && sr && !o1.artifacts.empty() && !r1.artifacts.empty(),
            "overfit " + std::to_string(o1.artifacts.size()) + " artifacts " + why_o +
                "; refinement " + std::to_string(r1.artifacts.size()) + " artifacts " + why_r});
  }
  if (wanted(8)) report(8, "shape contracts", shape_contracts());
  std::printf("%s\n", failed == 0 ? "all criteria passed" : (std::to_string(failed) + " criteria failed").c_str());
  return failed == 0 ? 0 : 1;
}

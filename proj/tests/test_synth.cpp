#include <cmath>
#include <numbers>

#include "doctest.h"
#include "velocorr/synthcorpus.hpp"

using namespace velocorr;
using namespace velocorr::synth;

namespace {

// Per-note |degraded - true| in velocity units, read at the onset row.
std::vector<double> onset_errors(const SynthCorpus& c) {
  std::vector<double> out;
  for (const auto& p : c.pieces) {
    for (const auto& n : p.performance.notes) {
      const long row = pianoroll::frame_index(n.onset_s, 100.0);
      const double d = p.prelim(std::size_t(row), std::size_t(n.pitch - 21));
      out.push_back(std::abs(d * 127.0 - n.velocity));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("generation is deterministic and seed dependent") {
  SynthConfig cfg;
  const auto a = generate(cfg);
  const auto b = generate(cfg);
  REQUIRE(a.pieces.size() == 12);
  for (std::size_t k = 0; k < a.pieces.size(); ++k) {
    CHECK(a.pieces[k].performance.notes == b.pieces[k].performance.notes);
    CHECK(a.pieces[k].prelim == b.pieces[k].prelim);
  }
  CHECK(a.pieces[0].id == "synth0000");
  CHECK(a.pieces[8].split == "val");
  CHECK(a.pieces[11].split == "test");
  cfg.seed = 14;
  CHECK(generate(cfg).pieces[0].performance.notes != a.pieces[0].performance.notes);

  // Piece k does not depend on how many pieces come after it.
  SynthConfig more;
  more.train_pieces = 20;
  CHECK(generate(more).pieces[3].performance.notes == a.pieces[3].performance.notes);
}

TEST_CASE("performances respect the configured ranges") {
  SynthConfig cfg;
  cfg.train_pieces = 20;
  for (const auto& p : generate(cfg).pieces) {
    CHECK_FALSE(p.performance.notes.empty());
    CHECK(p.prelim.cols() == 88);
    for (const auto& n : p.performance.notes) {
      CHECK(n.pitch >= 36);
      CHECK(n.pitch <= 96);
      CHECK(n.velocity >= 20);
      CHECK(n.velocity <= 115);
      CHECK(n.offset_s < cfg.piece_seconds);
      CHECK(n.offset_s > n.onset_s);
    }
    for (float v : p.prelim.flat()) CHECK((v >= 0.0f && v <= 1.0f));
  }
}

TEST_CASE("noise-only degradation has the half-normal MAE") {
  SynthConfig cfg;
  cfg.train_pieces = 150;
  const auto err = onset_errors(generate(cfg));
  double mae = 0.0;
  for (double e : err) mae += e;
  mae /= double(err.size());
  const double expected = cfg.noise_sigma * std::sqrt(2.0 / std::numbers::pi) * 127.0;  // ~7.98
  CHECK(err.size() > 1000);
  CHECK(mae == doctest::Approx(expected).epsilon(0.15));
}

TEST_CASE("noise-free degradation is exact") {
  SynthConfig cfg;
  cfg.noise_sigma = 0.0;
  for (double comp : {0.0, 0.4}) {
    cfg.compression = comp;
    const auto c = generate(cfg);
    for (const auto& p : c.pieces) {
      for (const auto& n : p.performance.notes) {
        const double v = n.velocity / 127.0;
        const double want = v + comp * (64.0 / 127.0 - v);
        const long row = pianoroll::frame_index(n.onset_s, 100.0);
        CHECK(p.prelim(std::size_t(row), std::size_t(n.pitch - 21)) ==
              doctest::Approx(want).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("noise stream does not depend on sigma") {
  SynthConfig a, b;
  b.noise_sigma = 0.0;
  const auto ca = generate(a), cb = generate(b);
  CHECK(ca.pieces[5].performance.notes == cb.pieces[5].performance.notes);
}

TEST_CASE("smearing leaks half the value before the onset") {
  midi::MidiPerformance p;
  p.notes.push_back({0.5, 0.6, 60, 100});
  p.duration_s = 1.0;
  SynthConfig cfg;
  cfg.noise_sigma = 0.0;
  cfg.smear_frames = 2;
  const auto g = degrade(p, cfg, 1);
  const std::size_t key = 39;
  CHECK(g(50, key) == doctest::Approx(100.0 / 127.0));
  CHECK(g(49, key) == doctest::Approx(50.0 / 127.0));
  CHECK(g(48, key) == doctest::Approx(50.0 / 127.0));
  CHECK(g(47, key) == 0.0f);
}

TEST_CASE("proxy audio") {
  midi::MidiPerformance soft, loud;
  soft.notes.push_back({0.1, 0.5, 69, 30});
  loud.notes.push_back({0.1, 0.5, 69, 120});
  soft.duration_s = loud.duration_s = 0.6;
  const auto a = render_proxy_audio(soft, 16000);
  const auto b = render_proxy_audio(loud, 16000);
  CHECK(a.samples.size() == 16000 * 7 / 10);
  double ea = 0.0, eb = 0.0;
  for (float x : a.samples) ea += double(x) * x;
  for (float x : b.samples) eb += double(x) * x;
  CHECK(eb > 10.0 * ea);
  for (std::size_t i = 0; i < 1600; ++i) CHECK(a.samples[i] == 0.0f);  // silent before the onset

  SynthConfig cfg;
  cfg.audio = true;
  cfg.train_pieces = 1;
  cfg.val_pieces = cfg.test_pieces = 0;
  const auto c = generate(cfg);
  REQUIRE(c.pieces[0].audio);
  CHECK(c.pieces[0].audio->sample_rate == 16000);
}

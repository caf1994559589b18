#include "velocorr/synthcorpus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace velocorr::synth {
namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(index),
                    std::uint32_t(index >> 32)};
  return std::mt19937_64(seq);
}

midi::MidiPerformance make_performance(const SynthConfig& cfg, std::mt19937_64& rng) {
  std::exponential_distribution<double> gap(cfg.notes_per_second);
  std::uniform_int_distribution<int> pitch(cfg.lowest_pitch, cfg.highest_pitch);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> jitter(-cfg.jitter, cfg.jitter);
  const double phase = 2.0 * std::numbers::pi * unit(rng);
  // Keep every offset strictly inside the piece so a piece of L seconds
  // covers exactly L * fps frames.
  const double last = cfg.piece_seconds - 1.5 / cfg.frames_per_second;

  midi::MidiPerformance perf;
  for (double t = gap(rng); t + cfg.min_duration_s <= last; t += gap(rng)) {
    const double dur = cfg.min_duration_s *
                       std::pow(cfg.max_duration_s / cfg.min_duration_s, unit(rng));
    const double dyn = cfg.dynamics_center +
                       cfg.dynamics_depth *
                           std::sin(2.0 * std::numbers::pi * t / cfg.dynamics_period_s + phase);
    midi::NoteEvent n;
    n.onset_s = t;
    n.offset_s = std::min(t + dur, last);
    n.pitch = pitch(rng);
    n.velocity = std::clamp(int(std::lround(dyn)) + jitter(rng), cfg.min_velocity,
                            cfg.max_velocity);
    perf.notes.push_back(n);
  }
  midi::normalize(perf);
  // Snap to the file quantization so the in-memory notes and the written
  // MIDI agree exactly.
  return midi::parse_smf(midi::write_smf(perf));
}

}  // namespace

Tensor2<float> degrade(const midi::MidiPerformance& perf, const SynthConfig& cfg,
                       std::uint64_t rng_seed) {
  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const long frames =
      std::max(pianoroll::frame_index(perf.duration_s, cfg.frames_per_second) + 1, 1L);
  Tensor2<float> grid(std::size_t(frames), pianoroll::kPianoKeys);
  for (const auto& n : perf.notes) {
    const double v = n.velocity / 127.0;
    double d = cfg.bias * (v + cfg.compression * (cfg.compression_pivot - v));
    // Always draw so the stream does not depend on sigma being zero.
    const double z = noise(rng);
    d = std::clamp(d + cfg.noise_sigma * z, 0.0, 1.0);
    const std::size_t key = std::size_t(n.pitch - midi::kLowestPianoPitch);
    const long on = pianoroll::frame_index(n.onset_s, cfg.frames_per_second);
    const long off = cfg.fill_sustain
                         ? std::max(on, pianoroll::frame_index(n.offset_s, cfg.frames_per_second))
                         : on;
    for (long r = on; r <= off && r < frames; ++r) grid(std::size_t(r), key) = float(d);
    for (long r = std::max(0L, on - long(cfg.smear_frames)); r < on; ++r) {
      auto& cell = grid(std::size_t(r), key);
      cell = std::max(cell, float(0.5 * d));
    }
  }
  return grid;
}

dsp::AudioClip render_proxy_audio(const midi::MidiPerformance& perf, int sample_rate) {
  const double tail = 0.1;
  const std::size_t len = std::size_t(std::ceil((perf.duration_s + tail) * sample_rate));
  dsp::AudioClip clip;
  clip.sample_rate = sample_rate;
  std::vector<double> acc(len, 0.0);
  const double nyquist = 0.5 * sample_rate;
  for (const auto& n : perf.notes) {
    const double f0 = 440.0 * std::pow(2.0, (n.pitch - 69) / 12.0);
    const double amp = 0.05 * std::pow(n.velocity / 127.0, 2.0);
    const std::size_t begin = std::size_t(std::llround(n.onset_s * sample_rate));
    const std::size_t end =
        std::min(len, std::size_t(std::llround((n.offset_s + tail) * sample_rate)));
    for (std::size_t i = begin; i < end; ++i) {
      const double t = double(i - begin) / sample_rate;
      const double release =
          i / double(sample_rate) > n.offset_s ? std::exp(-40.0 * (i / double(sample_rate) - n.offset_s)) : 1.0;
      const double env = amp * std::exp(-3.0 * t) * release;
      for (int k = 1; k <= 4 && k * f0 < nyquist; ++k) {
        acc[i] += env / k * std::sin(2.0 * std::numbers::pi * k * f0 * t);
      }
    }
  }
  clip.samples.resize(len);
  for (std::size_t i = 0; i < len; ++i) clip.samples[i] = float(std::clamp(acc[i], -1.0, 1.0));
  return clip;
}

SynthCorpus generate(const SynthConfig& cfg) {
  SynthCorpus corpus;
  const std::size_t total = cfg.train_pieces + cfg.val_pieces + cfg.test_pieces;
  for (std::size_t k = 0; k < total; ++k) {
    auto rng = stream(cfg.seed, k);
    SynthPiece piece;
    const char* split = k < cfg.train_pieces                     ? "train"
                        : k < cfg.train_pieces + cfg.val_pieces ? "val"
                                                                 : "test";
    piece.split = split;
    char id[32];
    std::snprintf(id, sizeof id, "synth%04zu", k);
    piece.id = id;
    piece.performance = make_performance(cfg, rng);
    piece.prelim = degrade(piece.performance, cfg, rng());
    if (cfg.audio) piece.audio = render_proxy_audio(piece.performance, cfg.sample_rate);
    corpus.pieces.push_back(std::move(piece));
  }
  return corpus;
}

}  // namespace velocorr::synth

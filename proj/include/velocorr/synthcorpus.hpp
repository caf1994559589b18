#pragma once

// Seeded synthetic performances with known velocities and a degraded copy of
// the velocity roll standing in for an acoustic model's preliminary output.
//
// Velocities follow a slow sinusoidal dynamics curve plus integer jitter.
// The degraded value of each note is
//   clamp(bias * (v + compression * (pivot - v)) + N(0, sigma), 0, 1)
// (all in normalized units) and fills the note's frame rows; smearing copies
// half of it to the frames just before the onset.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "velocorr/dsp.hpp"
#include "velocorr/midi_io.hpp"
#include "velocorr/pianoroll.hpp"

namespace velocorr::synth {

struct SynthConfig {
  std::uint64_t seed = 13;
  double notes_per_second = 8.0;
  int lowest_pitch = 36;
  int highest_pitch = 96;
  /// Durations are log-uniform in [min, max].
  double min_duration_s = 0.08;
  double max_duration_s = 0.8;
  double dynamics_period_s = 8.0;
  double dynamics_center = 67.5;
  double dynamics_depth = 35.0;
  int jitter = 4;
  int min_velocity = 20;
  int max_velocity = 115;

  double noise_sigma = 10.0 / 127.0;
  double bias = 1.0;
  double compression = 0.0;
  double compression_pivot = 64.0 / 127.0;
  std::size_t smear_frames = 0;
  /// Write the degraded value on every sounding frame of the note instead of
  /// the onset frame only.
  bool fill_sustain = true;

  double piece_seconds = 2.0;
  double frames_per_second = 100.0;
  std::size_t train_pieces = 8;
  std::size_t val_pieces = 2;
  std::size_t test_pieces = 2;

  bool audio = false;
  int sample_rate = 16000;
};

struct SynthPiece {
  std::string id;
  std::string split;  // train | val | test
  midi::MidiPerformance performance;
  /// Piece-level preliminary grid, frames x 88, in [0, 1].
  Tensor2<float> prelim;
  std::optional<dsp::AudioClip> audio;
};

struct SynthCorpus {
  std::vector<SynthPiece> pieces;
};

/// Deterministic for a given config; piece k draws from its own stream
/// seeded by (seed, k).
SynthCorpus generate(const SynthConfig& cfg);

/// The velocity-roll stand-in for one performance (the degradation step on
/// its own); `rng_seed` selects the noise stream.
Tensor2<float> degrade(const midi::MidiPerformance& perf, const SynthConfig& cfg,
                       std::uint64_t rng_seed);

/// Decaying harmonics whose amplitudes follow velocity.
dsp::AudioClip render_proxy_audio(const midi::MidiPerformance& perf, int sample_rate);

}  // namespace velocorr::synth

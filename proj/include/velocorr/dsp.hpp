#pragma once

// Audio decoding and the log-mel front end of the acoustic branch.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "velocorr/tensor.hpp"

namespace velocorr::dsp {

struct AudioClip {
  std::vector<float> samples;  // mono, [-1, 1]
  int sample_rate = 16000;
};

class AudioError : public std::runtime_error {
 public:
  enum class Kind { kMalformed, kUnsupported, kSampleRate, kTooShort };

  AudioError(Kind kind, std::size_t offset, const std::string& what)
      : std::runtime_error(what), kind_(kind), offset_(offset) {}

  Kind kind() const { return kind_; }
  std::size_t offset() const { return offset_; }

 private:
  Kind kind_;
  std::size_t offset_;
};

/// Decodes RIFF/WAVE with 16-bit PCM or 32-bit IEEE float samples (plain or
/// WAVE_FORMAT_EXTENSIBLE). Channels are averaged to mono. A sample rate other
/// than `expected_rate` is an error; pass 0 to accept any rate.
AudioClip read_wav(std::span<const std::uint8_t> bytes, int expected_rate = 16000);

/// Mono 16-bit PCM. Samples are clipped to [-1, 1] and scaled by 32767.
std::vector<std::uint8_t> write_wav_pcm16(const AudioClip& clip);

struct MelConfig {
  int sample_rate = 16000;
  std::size_t n_fft = 2048;
  std::size_t hop = 160;
  std::size_t mel_bins = 229;
  double fmin = 30.0;
  double fmax = 8000.0;
  double power_floor = 1e-10;
};

struct MelSpectrogram {
  Tensor2<float> values;  // frames x mel_bins, natural log of power
  double frames_per_second = 100.0;
  std::size_t mel_bins = 229;
};

/// Slaney mel scale: linear below 1 kHz, logarithmic above.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filters with Slaney area normalization, as a sparse row per mel
/// bin over the n_fft / 2 + 1 FFT bins.
struct MelFilterbank {
  struct Row {
    std::size_t first_bin = 0;
    std::vector<double> weights;
  };
  std::vector<Row> rows;
  std::vector<double> center_hz;
  std::size_t fft_bins = 0;

  static MelFilterbank build(const MelConfig& cfg);
  /// Dense mel_bins x fft_bins copy, for inspection and tests.
  Tensor2<double> dense() const;
};

/// Frames whose center sample lies inside the clip: ceil(samples / hop).
std::size_t frame_count(std::size_t samples, std::size_t hop);

/// Centered STFT (periodic Hann window, reflect padding of n_fft / 2), power
/// spectrum, mel projection and log(max(power, floor)).
MelSpectrogram log_mel(const AudioClip& clip, const MelConfig& cfg = {});

}  // namespace velocorr::dsp

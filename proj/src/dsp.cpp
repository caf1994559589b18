#include "velocorr/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <mutex>
#include <numbers>

#include "velocorr/kernels.hpp"

namespace velocorr::dsp {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t le16(std::span<const std::uint8_t> b, std::size_t at) {
  return std::uint16_t(b[at] | b[at + 1] << 8);
}

std::uint32_t le32(std::span<const std::uint8_t> b, std::size_t at) {
  return std::uint32_t(b[at]) | std::uint32_t(b[at + 1]) << 8 | std::uint32_t(b[at + 2]) << 16 |
         std::uint32_t(b[at + 3]) << 24;
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(std::uint8_t(v));
  out.push_back(std::uint8_t(v >> 8));
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(std::uint8_t(v >> s));
}

// FFTW's planner is not thread-safe; execution with the new-array API is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace

AudioClip read_wav(std::span<const std::uint8_t> bytes, int expected_rate) {
  using K = AudioError::Kind;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw AudioError(K::kMalformed, 0, "not a RIFF/WAVE file (at byte 0)");
  }
  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::span<const std::uint8_t> data;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t len = le32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (std::uint64_t(body) + len > bytes.size()) {
      throw AudioError(K::kMalformed, pos,
                       "truncated chunk '" + std::string(bytes.begin() + pos, bytes.begin() + pos + 4) +
                           "' at byte " + std::to_string(pos));
    }
    if (std::memcmp(bytes.data() + pos, "fmt ", 4) == 0) {
      if (len < 16) {
        throw AudioError(K::kMalformed, pos, "fmt chunk too short at byte " + std::to_string(pos));
      }
      format = le16(bytes, body);
      channels = le16(bytes, body + 2);
      rate = le32(bytes, body + 4);
      block_align = le16(bytes, body + 12);
      bits = le16(bytes, body + 14);
      if (format == kFormatExtensible) {
        if (len < 40) {
          throw AudioError(K::kMalformed, pos,
                           "extensible fmt chunk too short at byte " + std::to_string(pos));
        }
        format = le16(bytes, body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(bytes.data() + pos, "data", 4) == 0) {
      data = bytes.subspan(body, len);
      have_data = true;
    }
    pos = body + len + (len & 1);
  }
  if (!have_fmt || !have_data) {
    throw AudioError(K::kMalformed, pos, "missing fmt or data chunk");
  }
  if (channels == 0) throw AudioError(K::kMalformed, 12, "zero channels");
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32) {
    throw AudioError(K::kUnsupported, 12,
                     "unsupported WAV encoding (format " + std::to_string(format) + ", " +
                         std::to_string(bits) + " bits)");
  }
  if (expected_rate > 0 && int(rate) != expected_rate) {
    throw AudioError(K::kSampleRate, 12,
                     "sample rate " + std::to_string(rate) + " Hz, expected " +
                         std::to_string(expected_rate) + " Hz (resampling is not supported)");
  }
  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame_bytes = std::max<std::size_t>(block_align, bytes_per_sample * channels);
  const std::size_t frames = data.size() / frame_bytes;

  AudioClip clip;
  clip.sample_rate = int(rate);
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t at = i * frame_bytes + c * bytes_per_sample;
      if (pcm16) {
        acc += double(std::int16_t(le16(data, at))) / 32768.0;
      } else {
        const std::uint32_t raw = le32(data, at);
        float v;
        std::memcpy(&v, &raw, sizeof v);
        acc += v;
      }
    }
    clip.samples[i] = float(acc / channels);
  }
  return clip;
}

std::vector<std::uint8_t> write_wav_pcm16(const AudioClip& clip) {
  const std::uint32_t data_bytes = std::uint32_t(clip.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(out, 16);
  put16(out, kFormatPcm);
  put16(out, 1);
  put32(out, std::uint32_t(clip.sample_rate));
  put32(out, std::uint32_t(clip.sample_rate) * 2);
  put16(out, 2);
  put16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(out, data_bytes);
  for (float s : clip.samples) {
    const double v = std::clamp(double(s), -1.0, 1.0);
    put16(out, std::uint16_t(std::int16_t(std::lround(v * 32767.0))));
  }
  return out;
}

double hz_to_mel(double hz) {
  constexpr double kLinearStep = 200.0 / 3.0;
  constexpr double kBreakHz = 1000.0;
  constexpr double kBreakMel = kBreakHz / kLinearStep;
  const double log_step = std::log(6.4) / 27.0;
  if (hz < kBreakHz) return hz / kLinearStep;
  return kBreakMel + std::log(hz / kBreakHz) / log_step;
}

double mel_to_hz(double mel) {
  constexpr double kLinearStep = 200.0 / 3.0;
  constexpr double kBreakHz = 1000.0;
  constexpr double kBreakMel = kBreakHz / kLinearStep;
  const double log_step = std::log(6.4) / 27.0;
  if (mel < kBreakMel) return mel * kLinearStep;
  return kBreakHz * std::exp(log_step * (mel - kBreakMel));
}

MelFilterbank MelFilterbank::build(const MelConfig& cfg) {
  if (cfg.mel_bins == 0 || cfg.n_fft < 2 || !(cfg.fmax > cfg.fmin) || cfg.fmin < 0.0) {
    throw std::invalid_argument("mel filterbank: invalid configuration");
  }
  MelFilterbank fb;
  fb.fft_bins = cfg.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> edges(cfg.mel_bins + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * double(i) / double(cfg.mel_bins + 1));
  }
  const double bin_hz = double(cfg.sample_rate) / double(cfg.n_fft);
  for (std::size_t m = 0; m < cfg.mel_bins; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    const double norm = 2.0 / (hi - lo);
    Row row;
    bool started = false;
    for (std::size_t k = 0; k < fb.fft_bins; ++k) {
      const double f = double(k) * bin_hz;
      const double w = std::max(0.0, std::min((f - lo) / (center - lo), (hi - f) / (hi - center)));
      if (w > 0.0) {
        if (!started) {
          row.first_bin = k;
          started = true;
        }
        row.weights.resize(k - row.first_bin + 1, 0.0);
        row.weights.back() = w * norm;
      }
    }
    fb.rows.push_back(std::move(row));
    fb.center_hz.push_back(center);
  }
  return fb;
}

Tensor2<double> MelFilterbank::dense() const {
  Tensor2<double> out(rows.size(), fft_bins);
  for (std::size_t m = 0; m < rows.size(); ++m) {
    for (std::size_t j = 0; j < rows[m].weights.size(); ++j) {
      out(m, rows[m].first_bin + j) = rows[m].weights[j];
    }
  }
  return out;
}

std::size_t frame_count(std::size_t samples, std::size_t hop) {
  return (samples + hop - 1) / hop;
}

MelSpectrogram log_mel(const AudioClip& clip, const MelConfig& cfg) {
  if (clip.sample_rate != cfg.sample_rate) {
    throw AudioError(AudioError::Kind::kSampleRate, 0,
                     "clip sample rate " + std::to_string(clip.sample_rate) +
                         " Hz does not match the configured " + std::to_string(cfg.sample_rate) +
                         " Hz");
  }
  const std::size_t n = clip.samples.size();
  if (n < cfg.n_fft) {
    throw AudioError(AudioError::Kind::kTooShort, 0,
                     "clip of " + std::to_string(n) + " samples is shorter than one " +
                         std::to_string(cfg.n_fft) + "-sample window");
  }
  const auto fb = MelFilterbank::build(cfg);
  const std::size_t nfft = cfg.n_fft;
  const std::size_t pad = nfft / 2;
  const std::size_t frames = frame_count(n, cfg.hop);

  std::vector<double> padded(n + 2 * pad);
  for (std::size_t i = 0; i < padded.size(); ++i) {
    const long src = long(i) - long(pad);
    std::size_t j;
    if (src < 0) {
      j = std::size_t(-src);
    } else if (src >= long(n)) {
      j = 2 * (n - 1) - std::size_t(src);
    } else {
      j = std::size_t(src);
    }
    padded[i] = clip.samples[j];
  }
  std::vector<double> window(nfft);
  for (std::size_t i = 0; i < nfft; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(i) / double(nfft));
  }

  std::unique_ptr<double, FftwFree> in(static_cast<double*>(fftw_malloc(sizeof(double) * nfft)));
  std::unique_ptr<fftw_complex, FftwFree> out(
      static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * fb.fft_bins)));
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_r2c_1d(int(nfft), in.get(), out.get(), FFTW_ESTIMATE);
  }

  const auto& k = kernels::active<double>();
  MelSpectrogram mel;
  mel.values = Tensor2<float>(frames, cfg.mel_bins);
  mel.frames_per_second = double(cfg.sample_rate) / double(cfg.hop);
  mel.mel_bins = cfg.mel_bins;
  std::vector<double> power(fb.fft_bins);
  const double log_floor = std::log(cfg.power_floor);
  for (std::size_t f = 0; f < frames; ++f) {
    const double* src = padded.data() + f * cfg.hop;
    for (std::size_t i = 0; i < nfft; ++i) in.get()[i] = src[i] * window[i];
    fftw_execute(plan);
    for (std::size_t b = 0; b < fb.fft_bins; ++b) {
      const double re = out.get()[b][0], im = out.get()[b][1];
      power[b] = re * re + im * im;
    }
    for (std::size_t m = 0; m < cfg.mel_bins; ++m) {
      const auto& row = fb.rows[m];
      const double e = row.weights.empty()
                           ? 0.0
                           : k.dot(row.weights.data(), power.data() + row.first_bin, row.weights.size());
      mel.values(f, m) = float(e > cfg.power_floor ? std::log(e) : log_floor);
    }
  }
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  return mel;
}

}  // namespace velocorr::dsp

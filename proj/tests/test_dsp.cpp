#include <cmath>
#include <cstring>
#include <numbers>

#include "doctest.h"
#include "velocorr/dsp.hpp"

using namespace velocorr::dsp;
using Bytes = std::vector<std::uint8_t>;

namespace {

double slaney_mel(double hz) {
  return hz < 1000.0 ? hz / (200.0 / 3.0) : 15.0 + std::log(hz / 1000.0) / (std::log(6.4) / 27.0);
}

double slaney_hz(double mel) {
  return mel < 15.0 ? mel * 200.0 / 3.0 : 1000.0 * std::exp((mel - 15.0) * std::log(6.4) / 27.0);
}

// Dense triangular filterbank with area normalization, built straight from
// the definition.
std::vector<std::vector<double>> oracle_bank(const MelConfig& c) {
  const std::size_t bins = c.n_fft / 2 + 1;
  std::vector<double> edges(c.mel_bins + 2);
  const double lo = slaney_mel(c.fmin), hi = slaney_mel(c.fmax);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = slaney_hz(lo + (hi - lo) * double(i) / double(c.mel_bins + 1));
  }
  std::vector<std::vector<double>> w(c.mel_bins, std::vector<double>(bins, 0.0));
  for (std::size_t m = 0; m < c.mel_bins; ++m) {
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = double(k) * c.sample_rate / double(c.n_fft);
      const double up = (f - edges[m]) / (edges[m + 1] - edges[m]);
      const double down = (edges[m + 2] - f) / (edges[m + 2] - edges[m + 1]);
      w[m][k] = std::max(0.0, std::min(up, down)) * 2.0 / (edges[m + 2] - edges[m]);
    }
  }
  return w;
}

AudioClip sine(double hz, double seconds, double amp = 0.5, int rate = 16000) {
  AudioClip c;
  c.sample_rate = rate;
  c.samples.resize(std::size_t(std::llround(seconds * rate)));
  for (std::size_t n = 0; n < c.samples.size(); ++n) {
    c.samples[n] = float(amp * std::sin(2.0 * std::numbers::pi * hz * double(n) / rate));
  }
  return c;
}

void le(Bytes& b, std::uint32_t v, int n) {
  for (int i = 0; i < n; ++i) b.push_back(std::uint8_t(v >> (8 * i)));
}

Bytes wav(std::uint16_t fmt, std::uint16_t channels, std::uint32_t rate, std::uint16_t bits,
          const Bytes& payload) {
  Bytes b{'R', 'I', 'F', 'F'};
  le(b, std::uint32_t(36 + payload.size()), 4);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  le(b, 16, 4);
  le(b, fmt, 2);
  le(b, channels, 2);
  le(b, rate, 4);
  le(b, rate * channels * bits / 8, 4);
  le(b, channels * bits / 8, 2);
  le(b, bits, 2);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  le(b, std::uint32_t(payload.size()), 4);
  b.insert(b.end(), payload.begin(), payload.end());
  return b;
}

}  // namespace

TEST_CASE("10.01 s of audio gives 1001 x 229") {
  const auto mel = log_mel(sine(440.0, 10.01));
  CHECK(mel.values.rows() == 1001);
  CHECK(mel.values.cols() == 229);
  CHECK(mel.frames_per_second == 100.0);
  CHECK(frame_count(160160, 160) == 1001);
  CHECK(frame_count(160161, 160) == 1002);
}

TEST_CASE("mel scale and filter centers") {
  for (double hz : {0.0, 30.0, 440.0, 999.0, 1000.0, 4000.0, 8000.0}) {
    CHECK(hz_to_mel(hz) == doctest::Approx(slaney_mel(hz)).epsilon(1e-12));
    CHECK(mel_to_hz(hz_to_mel(hz)) == doctest::Approx(hz).epsilon(1e-12));
  }
  const MelConfig cfg;
  const auto bank = MelFilterbank::build(cfg);
  const auto want = oracle_bank(cfg);
  const auto dense = bank.dense();
  REQUIRE(dense.rows() == 229);
  REQUIRE(dense.cols() == 1025);
  double worst = 0.0;
  for (std::size_t m = 0; m < 229; ++m) {
    for (std::size_t k = 0; k < 1025; ++k) worst = std::max(worst, std::abs(dense(m, k) - want[m][k]));
  }
  CHECK(worst < 1e-12);
  const double lo = slaney_mel(30.0), hi = slaney_mel(8000.0);
  for (std::size_t m = 0; m < 229; ++m) {
    CHECK(bank.center_hz[m] == doctest::Approx(slaney_hz(lo + (hi - lo) * double(m + 1) / 230.0)));
  }
}

TEST_CASE("a 440 Hz frame matches a direct DFT through the oracle bank") {
  const MelConfig cfg;
  const auto clip = sine(440.0, 2.0);
  const auto mel = log_mel(clip, cfg);
  const std::size_t t = 100;
  const long start = long(t * cfg.hop) - long(cfg.n_fft / 2);
  std::vector<double> power(cfg.n_fft / 2 + 1);
  for (std::size_t k = 0; k < power.size(); ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t n = 0; n < cfg.n_fft; ++n) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(n) / double(cfg.n_fft));
      const double x = w * clip.samples[std::size_t(start + long(n))];
      const double a = -2.0 * std::numbers::pi * double(k) * double(n) / double(cfg.n_fft);
      re += x * std::cos(a);
      im += x * std::sin(a);
    }
    power[k] = re * re + im * im;
  }
  const auto bank = oracle_bank(cfg);
  std::size_t want_arg = 0, got_arg = 0;
  std::vector<double> want(229);
  for (std::size_t m = 0; m < 229; ++m) {
    double s = 0.0;
    for (std::size_t k = 0; k < power.size(); ++k) s += bank[m][k] * power[k];
    want[m] = std::log(std::max(s, cfg.power_floor));
    if (want[m] > want[want_arg]) want_arg = m;
    if (mel.values(t, m) > mel.values(t, got_arg)) got_arg = m;
  }
  CHECK(got_arg == want_arg);
  for (std::size_t m = 0; m < 229; ++m) {
    if (want[m] > -10.0) CHECK(std::abs(mel.values(t, m) - want[m]) < 1e-3);
  }
  // The peak filter brackets 440 Hz.
  const auto fb = MelFilterbank::build(cfg);
  CHECK(std::abs(fb.center_hz[got_arg] - 440.0) < 30.0);
}

TEST_CASE("scaling the input by c shifts log power by 2 log c") {
  const auto a = log_mel(sine(1000.0, 0.5, 0.1));
  const auto b = log_mel(sine(1000.0, 0.5, 0.4));
  const double shift = 2.0 * std::log(4.0);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    if (a.values.flat()[i] > -12.0) {
      CHECK(b.values.flat()[i] - a.values.flat()[i] == doctest::Approx(shift).epsilon(1e-3));
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("silence sits at the floor") {
  AudioClip c;
  c.samples.assign(3200, 0.0f);
  const auto mel = log_mel(c);
  CHECK(mel.values.rows() == 20);
  for (float v : mel.values.flat()) CHECK(v == doctest::Approx(std::log(1e-10)));
}

TEST_CASE("clips shorter than one window are refused") {
  AudioClip c;
  c.samples.assign(1600, 0.0f);
  try {
    log_mel(c);
    FAIL("expected an error");
  } catch (const AudioError& e) {
    CHECK(e.kind() == AudioError::Kind::kTooShort);
  }
}

TEST_CASE("wav decoding") {
  SUBCASE("pcm16 round trip") {
    const auto clip = sine(300.0, 0.1);
    const auto back = read_wav(write_wav_pcm16(clip));
    REQUIRE(back.samples.size() == clip.samples.size());
    for (std::size_t i = 0; i < clip.samples.size(); ++i) {
      CHECK(std::abs(back.samples[i] - clip.samples[i]) <= 1.0 / 32767.0);
    }
  }
  SUBCASE("stereo float32 is averaged") {
    Bytes payload;
    for (float v : {0.5f, -0.5f, 1.0f, 0.0f}) {
      std::uint32_t u;
      std::memcpy(&u, &v, 4);
      le(payload, u, 4);
    }
    const auto clip = read_wav(wav(3, 2, 16000, 32, payload));
    REQUIRE(clip.samples.size() == 2);
    CHECK(clip.samples[0] == 0.0f);
    CHECK(clip.samples[1] == 0.5f);
  }
  auto kind = [](const Bytes& b, int rate = 16000) {
    try {
      read_wav(b, rate);
    } catch (const AudioError& e) {
      return int(e.kind());
    }
    return -1;
  };
  const Bytes two_samples{0, 0, 0, 0};
  CHECK(kind(wav(1, 1, 44100, 16, two_samples)) == int(AudioError::Kind::kSampleRate));
  CHECK(kind(wav(1, 1, 44100, 16, two_samples), 0) == -1);
  CHECK(kind(wav(1, 1, 16000, 8, two_samples)) == int(AudioError::Kind::kUnsupported));
  auto cut = wav(1, 1, 16000, 16, two_samples);
  cut.resize(30);
  CHECK(kind(cut) == int(AudioError::Kind::kMalformed));
  CHECK(kind(Bytes{'R', 'I', 'F', 'X'}) == int(AudioError::Kind::kMalformed));
}

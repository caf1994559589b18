#include "velocorr/pianoroll.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace velocorr::pianoroll {

long SegmentSpec::first_frame() const { return frame_index(start_s, frames_per_second); }

int VelocityScale::denormalize(double value) const {
  const double v = std::floor(value * divisor + 0.5);
  return int(std::clamp(v, 0.0, 127.0));
}

long frame_index(double seconds, double frames_per_second) {
  return std::lround(seconds * frames_per_second);
}

ScoreFeatures rasterize(const midi::MidiPerformance& perf, const SegmentSpec& spec,
                        const VelocityScale& scale) {
  if (spec.frames == 0 || spec.keys == 0 || !(spec.frames_per_second > 0.0)) {
    throw std::invalid_argument("rasterize: segment spec needs frames, keys and fps > 0");
  }
  const std::size_t T = spec.frames;
  const std::size_t P = spec.keys;
  const long owned = long(std::min(spec.owned_frames, T));
  ScoreFeatures sf;
  sf.onset = BinaryRoll(T, P);
  sf.frame = BinaryRoll(T, P);
  sf.frame_ex = BinaryRoll(T, P);
  sf.target_vel = Tensor2<float>(T, P);

  const long first = spec.first_frame();
  for (std::size_t id = 0; id < perf.notes.size(); ++id) {
    const auto& n = perf.notes[id];
    const long key = n.pitch - spec.lowest_pitch;
    if (key < 0 || key >= long(P)) continue;
    const long on = frame_index(n.onset_s, spec.frames_per_second) - first;
    const long off = std::max(frame_index(n.offset_s, spec.frames_per_second) - first, on);
    if (off < 0 || on >= long(T)) continue;
    const float v = scale.normalize(n.velocity);
    for (long r = std::max(on, 0L); r <= std::min(off, long(T) - 1); ++r) {
      sf.frame(std::size_t(r), std::size_t(key)) = 1;
      sf.target_vel(std::size_t(r), std::size_t(key)) = v;
    }
    if (on >= 0 && on < owned) {
      sf.onset(std::size_t(on), std::size_t(key)) = 1;
      sf.onset_notes.push_back(OnsetCell{std::size_t(on), std::size_t(key), id});
    }
  }
  for (std::size_t i = 0; i < sf.frame.size(); ++i) {
    sf.frame_ex.flat()[i] = std::uint8_t(sf.frame.flat()[i] - sf.onset.flat()[i]);
  }
  return sf;
}

const BinaryRoll& onset_mask(const ScoreFeatures& sf) { return sf.onset; }

std::size_t segment_count(const midi::MidiPerformance& perf, const SegmentSpec& spec,
                          std::size_t hop_frames) {
  if (hop_frames == 0) throw std::invalid_argument("segment hop must be positive");
  long last_row = frame_index(perf.duration_s, spec.frames_per_second);
  for (const auto& n : perf.notes) {
    last_row = std::max(last_row, frame_index(n.onset_s, spec.frames_per_second));
  }
  return std::size_t(std::max(last_row, 0L)) / hop_frames + 1;
}

std::vector<Segment> segment_performance(const midi::MidiPerformance& perf,
                                         const SegmentSpec& spec, std::size_t hop_frames,
                                         const VelocityScale& scale) {
  const std::size_t count = segment_count(perf, spec, hop_frames);
  std::vector<Segment> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    SegmentSpec s = spec;
    s.start_s = double(k * hop_frames) / spec.frames_per_second;
    s.owned_frames = std::min(hop_frames, spec.frames);
    out.push_back(Segment{s, rasterize(perf, s, scale)});
  }
  return out;
}

std::vector<Segment> segment_performance(const midi::MidiPerformance& perf,
                                         const SegmentSpec& spec, double hop_s,
                                         const VelocityScale& scale) {
  if (!(hop_s > 0.0)) throw std::invalid_argument("segment hop must be positive");
  const long hop = frame_index(hop_s, spec.frames_per_second);
  return segment_performance(perf, spec, std::size_t(std::max(hop, 1L)), scale);
}

std::size_t piece_frames(std::size_t segments, const SegmentSpec& spec, std::size_t hop_frames) {
  if (segments == 0) return 0;
  return (segments - 1) * hop_frames + spec.frames;
}

}  // namespace velocorr::pianoroll

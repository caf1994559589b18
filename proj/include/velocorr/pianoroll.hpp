#pragma once

// Piano-roll rasterization of a performance into fixed-shape segments:
// binary onset, frame and sustain-only (frame minus onset) matrices plus the
// normalized velocity target.

#include <cstdint>
#include <vector>

#include "velocorr/midi_io.hpp"
#include "velocorr/tensor.hpp"

namespace velocorr::pianoroll {

using BinaryRoll = Tensor2<std::uint8_t>;

inline constexpr int kPianoKeys = 88;

struct SegmentSpec {
  double frames_per_second = 100.0;
  std::size_t frames = 1001;
  std::size_t keys = kPianoKeys;
  int lowest_pitch = midi::kLowestPianoPitch;
  /// Window start; always a whole number of frames.
  double start_s = 0.0;
  /// Rows [0, owned_frames) own the note onsets that fall in them. Rows past
  /// that (the overlap with the next window) receive sustain but no onsets.
  std::size_t owned_frames = 1001;

  /// Index of the first global frame covered by this window.
  long first_frame() const;
};

/// One note whose onset lies in a window's owned rows.
struct OnsetCell {
  std::size_t row;
  std::size_t key;
  std::size_t note_id;  // index into MidiPerformance::notes
};

struct ScoreFeatures {
  BinaryRoll onset;
  BinaryRoll frame;
  BinaryRoll frame_ex;
  Tensor2<float> target_vel;
  /// Notes owned by this window, in note order. Two same-pitch notes that
  /// round to the same onset frame share a cell.
  std::vector<OnsetCell> onset_notes;
};

/// Velocity normalization; the divisor is 127 by default so that 127 maps
/// to exactly 1.0.
struct VelocityScale {
  double divisor = 127.0;

  float normalize(int velocity) const { return float(velocity / divisor); }
  /// Round half up, clamp to [0, 127].
  int denormalize(double value) const;
};

/// Global frame index for a time in seconds: round(seconds * fps), half away
/// from zero.
long frame_index(double seconds, double frames_per_second);

ScoreFeatures rasterize(const midi::MidiPerformance& perf, const SegmentSpec& spec,
                        const VelocityScale& scale = {});

/// The canonical loss/evaluation mask: the onset matrix.
const BinaryRoll& onset_mask(const ScoreFeatures& sf);

struct Segment {
  SegmentSpec spec;
  ScoreFeatures features;
};

/// Number of hop-spaced windows needed so every onset row of the performance
/// is owned by some window (at least one).
std::size_t segment_count(const midi::MidiPerformance& perf, const SegmentSpec& spec,
                          std::size_t hop_frames);

/// Tiles the performance into windows of spec.frames frames starting every
/// hop_frames frames. Each onset belongs to exactly one window: the one whose
/// owned rows contain it. The last window is zero-padded.
std::vector<Segment> segment_performance(const midi::MidiPerformance& perf,
                                         const SegmentSpec& spec, std::size_t hop_frames,
                                         const VelocityScale& scale = {});

/// Same as above with the hop given in seconds (rounded to whole frames).
std::vector<Segment> segment_performance(const midi::MidiPerformance& perf,
                                         const SegmentSpec& spec, double hop_s,
                                         const VelocityScale& scale = {});

/// Number of frames of a piece-level grid covering `segments` windows.
std::size_t piece_frames(std::size_t segments, const SegmentSpec& spec, std::size_t hop_frames);

}  // namespace velocorr::pianoroll

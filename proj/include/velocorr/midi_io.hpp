#pragma once

// Standard MIDI File reading and writing, reduced to the note list a
// performance needs: absolute onset/offset seconds through the tempo map,
// pitch and velocity.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace velocorr::midi {

inline constexpr int kLowestPianoPitch = 21;
inline constexpr int kHighestPianoPitch = 108;

struct NoteEvent {
  double onset_s = 0.0;
  double offset_s = 0.0;
  int pitch = 0;
  int velocity = 0;

  bool operator==(const NoteEvent&) const = default;
};

struct SmfInfo {
  int format = 0;
  int division = 480;
  int track_count = 0;
  /// Non-fatal findings while parsing: dangling notes, dropped notes.
  std::vector<std::string> warnings;
};

struct MidiPerformance {
  /// Sorted by (onset_s, pitch).
  std::vector<NoteEvent> notes;
  double duration_s = 0.0;
  SmfInfo source;
};

class MidiError : public std::runtime_error {
 public:
  enum class Kind { kMalformed, kUnsupported, kUnrepresentable };

  MidiError(Kind kind, std::size_t offset, const std::string& what);

  Kind kind() const { return kind_; }
  /// Byte offset of the problem in the input; 0 for writer errors.
  std::size_t offset() const { return offset_; }

 private:
  Kind kind_;
  std::size_t offset_;
};

struct ParseOptions {
  /// Hold note-offs while the sustain pedal (CC64 >= 64) is down.
  bool pedal_extends_offsets = false;
  int lowest_pitch = kLowestPianoPitch;
  int highest_pitch = kHighestPianoPitch;
};

/// Piecewise-constant tempo map for tick -> seconds conversion.
class TempoMap {
 public:
  explicit TempoMap(int division) : division_(division) {}

  /// Tempo changes may be added in any order; the last one added for a tick
  /// wins.
  void add(std::uint64_t tick, std::uint32_t us_per_quarter);
  double seconds(std::uint64_t tick) const;

 private:
  struct Change {
    std::uint64_t tick;
    std::uint32_t us_per_quarter;
    double seconds;
  };
  void rebuild() const;

  int division_;
  std::vector<std::pair<std::uint64_t, std::uint32_t>> raw_;
  mutable std::vector<Change> changes_;
  mutable bool dirty_ = true;
};

/// Parses format 0 or 1 files with ticks-per-quarter division. Overlapping
/// same-pitch notes are truncated at the later onset, zero-length notes and
/// notes outside the pitch range are dropped (with warnings), and a note-on
/// still sounding at the end of its track ends there.
MidiPerformance parse_smf(std::span<const std::uint8_t> bytes,
                          const ParseOptions& options = {});

struct WriteOptions {
  std::uint16_t ticks_per_quarter = 480;
  std::uint32_t us_per_quarter = 500000;
};

/// Writes a format-0 file with a single tempo. Times are rounded to the
/// nearest tick; a note that would collapse to zero ticks keeps one tick.
/// Velocity 0 cannot be expressed as a note-on and is written as 1.
std::vector<std::uint8_t> write_smf(const MidiPerformance& perf,
                                    const WriteOptions& options = {});

/// Sorts notes by (onset, pitch), truncates same-pitch overlaps, drops
/// zero-length notes and extends duration_s to cover every offset.
void normalize(MidiPerformance& perf);

}  // namespace velocorr::midi

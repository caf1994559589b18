#pragma once

// Per-note velocity metrics: MAE and population STD of absolute errors, and
// note recall under timing and velocity tolerances with a global velocity
// rescaling of the estimates.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "velocorr/midi_io.hpp"
#include "velocorr/models.hpp"
#include "velocorr/pianoroll.hpp"

namespace velocorr::evaluation {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MaeStd {
  double mae = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

/// Element i of `reference` and `estimate` belong to the same note.
/// Throws EvalError on empty input or a length mismatch.
MaeStd mae_std(std::span<const int> reference, std::span<const int> estimate);

struct MatchConfig {
  double onset_tolerance = 0.05;
  double offset_ratio = 0.2;
  double offset_min_tolerance = 0.05;
  double velocity_tolerance = 0.1;
  bool use_offset = true;
};

using Pair = std::pair<std::size_t, std::size_t>;  // (reference, estimate)

struct MatchResult {
  /// Sorted by reference index.
  std::vector<Pair> pairs;
  /// matches / |reference|; empty when the reference is empty.
  std::optional<double> recall;
  /// Global factor applied to the estimated velocities.
  double velocity_scale = 0.0;
};

/// Pitch and timing candidates (distances compared after rounding to 1e-7 s).
std::vector<Pair> timing_candidates(const std::vector<midi::NoteEvent>& reference,
                                    const std::vector<midi::NoteEvent>& estimate,
                                    const MatchConfig& cfg);

/// One-to-one matching over `candidates` of maximum cardinality; ties go to
/// the smallest total |onset difference| (whole nanoseconds), then to the
/// lexicographically smallest pair list.
std::vector<Pair> max_matching(const std::vector<midi::NoteEvent>& reference,
                               const std::vector<midi::NoteEvent>& estimate,
                               const std::vector<Pair>& candidates);

/// Matching with timing and velocity criteria:
///   1. timing candidates;
///   2. reference velocities divided by their maximum;
///   3. s = sum(r e) / sum(e^2) over a timing-only maximum matching;
///   4. candidates with |r - s e| > velocity_tolerance dropped;
///   5. maximum matching of the survivors.
MatchResult match_notes(const std::vector<midi::NoteEvent>& reference,
                        const std::vector<midi::NoteEvent>& estimate,
                        const MatchConfig& cfg = {});

struct PieceInput {
  std::string id;
  midi::MidiPerformance reference;
  std::vector<pianoroll::Segment> segments;
  std::vector<models::VelocityGrid> grids;  // one per segment
};

struct PieceReport {
  std::string id;
  std::size_t n_reference_notes = 0;
  std::size_t n_matched = 0;
  double mae = 0.0;
  double std = 0.0;
  std::optional<double> recall;
};

struct EvalReport {
  double mae = 0.0;
  double std = 0.0;
  std::optional<double> recall;
  std::size_t n_reference_notes = 0;
  std::size_t n_matched = 0;
  std::vector<PieceReport> pieces;

  /// Key=value header lines followed by a per-piece table; see README.
  std::string to_text() const;
};

/// Estimated notes keep the reference timing and take their velocities from
/// the grids at the onset cells.
std::vector<midi::NoteEvent> estimated_notes(const PieceInput& piece,
                                             const models::MapOptions& map = {});

/// Throws EvalError naming unassigned notes when the segments do not cover
/// every note, and when there are no notes at all.
EvalReport evaluate_pipeline(const std::vector<PieceInput>& pieces, const MatchConfig& cfg = {},
                             const models::MapOptions& map = {});

}  // namespace velocorr::evaluation

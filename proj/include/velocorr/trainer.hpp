#pragma once

// Seeded training loop: uniform-with-replacement batches, masked BCE summed
// per segment and averaged over the batch, one Adam step per iteration,
// periodic validation by per-note MAE and best/last checkpoints.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "velocorr/models.hpp"
#include "velocorr/pianoroll.hpp"

namespace velocorr::trainer {

/// A note owned by a sample's window, with its true velocity (0-127).
struct NoteTruth {
  std::size_t row;
  std::size_t key;
  int velocity;
};

struct Sample {
  std::string id;
  Tensor2<float> input;   // frames x model input width
  Tensor2<float> target;  // frames x keys, normalized
  pianoroll::BinaryRoll mask;
  std::vector<NoteTruth> notes;
};

/// Builds a sample from a segment's score features and the performance the
/// segment was cut from; the notes come from the owned onset cells.
Sample make_sample(std::string id, Tensor2<float> input, const pianoroll::ScoreFeatures& sf,
                   const midi::MidiPerformance& perf);

/// Cuts a piece into hop-spaced windows and pairs each window's slice of the
/// piece-level preliminary grid with its score features (correction input).
std::vector<Sample> correction_samples(const std::string& id, const midi::MidiPerformance& perf,
                                       const Tensor2<float>& prelim,
                                       const pianoroll::SegmentSpec& spec, std::size_t hop_frames,
                                       const models::FeatureConfig& features);

/// Same windows over a piece-level log-mel (acoustic input).
std::vector<Sample> acoustic_samples(const std::string& id, const midi::MidiPerformance& perf,
                                     const Tensor2<float>& mel, const pianoroll::SegmentSpec& spec,
                                     std::size_t hop_frames);

struct TrainConfig {
  std::uint64_t iterations = 200000;
  std::size_t batch_size = 12;
  nn::AdamConfig adam{};
  std::uint64_t seed = 13;
  /// Validate (and checkpoint) every this many iterations and after the
  /// last one; 0 validates only at the end.
  std::uint64_t validation_interval = 1000;
  /// Empty: keep checkpoints in memory only.
  std::filesystem::path checkpoint_dir;
  nn::Reduction reduction = nn::Reduction::kSum;
  /// Extra fields merged into checkpoint metadata (a JSON object).
  std::string metadata_json = "{}";
};

struct ValidationRecord {
  std::uint64_t iteration;
  double mae;
};

struct TrainState {
  std::uint64_t iteration = 0;
  std::vector<double> losses;  // one batch loss per iteration
  std::vector<ValidationRecord> validations;
  std::optional<double> best_mae;
  std::uint64_t best_iteration = 0;
  std::vector<std::uint8_t> best_checkpoint;  // encoded
  std::vector<std::uint8_t> last_checkpoint;  // encoded
  std::vector<std::string> warnings;
};

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pooled per-note MAE (velocity units) of the model's denormalized onset
/// predictions over every note in `split`. Empty splits (no notes) throw.
double validate(models::VelocityModel<float>& model, const std::vector<Sample>& split,
                const pianoroll::VelocityScale& scale = {});

/// Trains `model` in place. Samples whose shapes do not fit the model are
/// skipped with a warning; TrainError if none remain. When `val` is empty,
/// validation runs on `train`. `log` receives one line per iteration:
///   iteration lr loss val_mae       (val_mae is "-" between validations)
TrainState train(models::VelocityModel<float>& model, const std::vector<Sample>& train,
                 const std::vector<Sample>& val, const TrainConfig& cfg,
                 std::ostream* log = nullptr);

}  // namespace velocorr::trainer

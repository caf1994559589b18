#pragma once

// The two model branches. The acoustic branch turns a log-mel segment into
// preliminary per-frame, per-key velocities; the correction branch refines a
// preliminary grid given piano-roll score features through a BiLSTM, a
// linear layer and a sigmoid.

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "velocorr/checkpoint.hpp"
#include "velocorr/dsp.hpp"
#include "velocorr/nn.hpp"
#include "velocorr/pianoroll.hpp"

namespace velocorr::models {

/// Which score features are concatenated after the preliminary grid. The
/// column order is fixed: preliminary, onset, frame, frame_ex.
struct FeatureConfig {
  bool onset = false;
  bool frame = false;
  bool frame_ex = false;

  std::size_t enabled() const { return std::size_t(onset) + frame + frame_ex; }
  std::size_t width(std::size_t keys = pianoroll::kPianoKeys) const {
    return keys * (1 + enabled());
  }
  /// "audio", "audio+onset", "audio+onset+frame_ex", ...
  std::string name() const;
  /// Accepts a comma- or plus-separated list of onset/frame/frame_ex; the
  /// words "audio" and "none" are ignored. Throws std::invalid_argument.
  static FeatureConfig parse(std::string_view list);

  bool operator==(const FeatureConfig&) const = default;
};

enum class GridRole { kPreliminary, kRefined };

struct VelocityGrid {
  Tensor2<float> values;  // frames x keys, in [0, 1]
  GridRole role = GridRole::kPreliminary;
};

/// Common surface the trainer drives. Inputs are frames x input_width();
/// outputs are frames x keys in (0, 1).
template <typename T>
class VelocityModel {
 public:
  virtual ~VelocityModel() = default;
  virtual Tensor2<T> forward(const Tensor2<T>& input) = 0;
  virtual void backward(const Tensor2<T>& grad_out) = 0;
  virtual nn::ParamList<T> params() = 0;
  virtual std::string architecture() const = 0;
  virtual std::size_t input_width() const = 0;
};

struct CorrectionConfig {
  FeatureConfig features{true, false, false};
  std::size_t hidden = 256;
  std::size_t keys = pianoroll::kPianoKeys;

  std::string architecture() const;
};

template <typename T>
class CorrectionModel final : public VelocityModel<T> {
 public:
  CorrectionModel(const CorrectionConfig& cfg, std::uint64_t seed);

  Tensor2<T> forward(const Tensor2<T>& input) override;
  void backward(const Tensor2<T>& grad_out) override;
  nn::ParamList<T> params() override;
  std::string architecture() const override { return cfg_.architecture(); }
  std::size_t input_width() const override { return cfg_.features.width(cfg_.keys); }

  const CorrectionConfig& config() const { return cfg_; }
  nn::BiLstm<T>& lstm() { return lstm_; }
  nn::Linear<T>& output() { return out_; }

 private:
  CorrectionConfig cfg_;
  nn::BiLstm<T> lstm_;
  nn::Linear<T> out_;
  nn::Sigmoid<T> act_;
};

struct AcousticConfig {
  std::size_t mel_bins = 229;
  std::vector<std::size_t> conv_channels{16, 32};
  std::size_t kernel = 3;
  std::size_t rnn_hidden = 64;
  std::size_t keys = pianoroll::kPianoKeys;

  std::string architecture() const;
  /// Width of each frame's flattened feature vector after the conv blocks.
  std::size_t conv_output_width() const;
};

/// Conv blocks (conv, ReLU, 2x frequency average pooling) over the
/// per-segment standardized log-mel, then a BiLSTM, a linear layer and a
/// sigmoid.
template <typename T>
class AcousticModel final : public VelocityModel<T> {
 public:
  AcousticModel(const AcousticConfig& cfg, std::uint64_t seed);

  Tensor2<T> forward(const Tensor2<T>& input) override;
  void backward(const Tensor2<T>& grad_out) override;
  nn::ParamList<T> params() override;
  std::string architecture() const override { return cfg_.architecture(); }
  std::size_t input_width() const override { return cfg_.mel_bins; }

  const AcousticConfig& config() const { return cfg_; }
  nn::Linear<T>& output() { return out_; }

 private:
  struct Block {
    nn::Conv2d<T> conv;
    nn::Relu<T> relu;
    nn::AvgPoolWidth2<T> pool;
  };

  AcousticConfig cfg_;
  std::vector<Block> blocks_;
  nn::BiLstm<T> lstm_;
  nn::Linear<T> out_;
  nn::Sigmoid<T> act_;
  std::size_t frames_ = 0;
  std::size_t last_channels_ = 0;
  std::size_t last_width_ = 0;
};

/// Per-frame concatenation [prelim | onset | frame | frame_ex] of the enabled
/// features. Throws nn::ShapeError when frame or key counts disagree.
Tensor2<float> build_correction_input(const VelocityGrid& prelim,
                                      const pianoroll::ScoreFeatures& sf,
                                      const FeatureConfig& cfg);

VelocityGrid acoustic_forward(AcousticModel<float>& model, const dsp::MelSpectrogram& mel);
VelocityGrid correction_forward(CorrectionModel<float>& model, const Tensor2<float>& input);

struct NoteVelocity {
  std::size_t note_id;
  int velocity;
};

struct MapOptions {
  /// 0 reads the onset frame only; 1 takes the maximum over onset +-1 frame.
  std::size_t window = 0;
  pianoroll::VelocityScale scale{};
};

/// One assignment per note owned by the segment, read from the grid at the
/// note's onset cell and denormalized to 0-127.
std::vector<NoteVelocity> map_onset_velocities(const VelocityGrid& grid,
                                               const pianoroll::ScoreFeatures& sf,
                                               const MapOptions& options = {});

/// Serializes parameters (and optionally Adam moments) with metadata JSON.
/// `metadata_json` must be a JSON object; "adam_step" is added when a state
/// is given.
template <typename T>
checkpoint::Checkpoint to_checkpoint(VelocityModel<T>& model, const nn::AdamState<T>* state,
                                     const std::string& metadata_json = "{}");

/// Loads parameters (and Adam moments if `state` is non-null) after checking
/// the architecture and every array's shape; nothing is modified on error.
template <typename T>
void load_checkpoint(VelocityModel<T>& model, const checkpoint::Checkpoint& ckpt,
                     nn::AdamState<T>* state = nullptr);

/// Reads the architecture line of a checkpoint and rebuilds the matching
/// correction configuration. Throws CheckpointError for other architectures.
CorrectionConfig correction_config_from_architecture(std::string_view architecture);
AcousticConfig acoustic_config_from_architecture(std::string_view architecture);

}  // namespace velocorr::models

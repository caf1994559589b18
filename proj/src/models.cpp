#include "velocorr/models.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "json.hpp"

namespace velocorr::models {
namespace {

using checkpoint::CheckpointError;

std::map<std::string, std::string> parse_architecture(std::string_view text,
                                                      std::string_view expected_kind) {
  std::istringstream is{std::string(text)};
  std::string kind;
  is >> kind;
  if (kind != expected_kind) {
    throw CheckpointError(CheckpointError::Kind::kArchitectureMismatch,
                          "expected a '" + std::string(expected_kind) + "' checkpoint, got '" +
                              std::string(text) + "'");
  }
  std::map<std::string, std::string> fields;
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) continue;
    fields[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return fields;
}

std::size_t field_size(const std::map<std::string, std::string>& f, const std::string& key) {
  auto it = f.find(key);
  if (it == f.end()) {
    throw CheckpointError(CheckpointError::Kind::kCorrupt, "architecture lacks '" + key + "'");
  }
  return std::stoul(it->second);
}

template <typename T>
Tensor2<T> standardize(const Tensor2<T>& x) {
  double mean = 0.0;
  for (T v : x.flat()) mean += double(v);
  mean /= double(std::max<std::size_t>(x.size(), 1));
  double var = 0.0;
  for (T v : x.flat()) var += (double(v) - mean) * (double(v) - mean);
  const double sd = std::sqrt(var / double(std::max<std::size_t>(x.size(), 1)));
  const double inv = sd > 1e-6 ? 1.0 / sd : 1.0;
  Tensor2<T> out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out.flat()[i] = T((double(x.flat()[i]) - mean) * inv);
  return out;
}

}  // namespace

std::string FeatureConfig::name() const {
  std::string s = "audio";
  if (onset) s += "+onset";
  if (frame) s += "+frame";
  if (frame_ex) s += "+frame_ex";
  return s;
}

FeatureConfig FeatureConfig::parse(std::string_view list) {
  FeatureConfig cfg;
  std::string token;
  auto flush = [&] {
    if (token.empty() || token == "audio" || token == "none") {
    } else if (token == "onset") {
      cfg.onset = true;
    } else if (token == "frame") {
      cfg.frame = true;
    } else if (token == "frame_ex") {
      cfg.frame_ex = true;
    } else {
      throw std::invalid_argument("unknown score feature '" + token +
                                  "' (expected onset, frame, frame_ex)");
    }
    token.clear();
  };
  for (char c : list) {
    if (c == ',' || c == '+' || c == ' ') {
      flush();
    } else {
      token.push_back(c);
    }
  }
  flush();
  return cfg;
}

std::string CorrectionConfig::architecture() const {
  std::string feats;
  if (features.onset) feats += "onset,";
  if (features.frame) feats += "frame,";
  if (features.frame_ex) feats += "frame_ex,";
  if (feats.empty()) {
    feats = "none";
  } else {
    feats.pop_back();
  }
  std::ostringstream os;
  os << "correction/v1 keys=" << keys << " hidden=" << hidden
     << " input=" << features.width(keys) << " features=" << feats;
  return os.str();
}

CorrectionConfig correction_config_from_architecture(std::string_view architecture) {
  const auto f = parse_architecture(architecture, "correction/v1");
  CorrectionConfig cfg;
  cfg.keys = field_size(f, "keys");
  cfg.hidden = field_size(f, "hidden");
  auto it = f.find("features");
  cfg.features = FeatureConfig::parse(it == f.end() ? "none" : it->second);
  if (cfg.features.width(cfg.keys) != field_size(f, "input")) {
    throw CheckpointError(CheckpointError::Kind::kCorrupt,
                          "architecture input width disagrees with its feature list");
  }
  return cfg;
}

std::string AcousticConfig::architecture() const {
  std::ostringstream os;
  os << "acoustic/v1 mel=" << mel_bins << " conv=";
  for (std::size_t i = 0; i < conv_channels.size(); ++i) {
    os << (i ? "," : "") << conv_channels[i];
  }
  os << " kernel=" << kernel << " rnn=" << rnn_hidden << " keys=" << keys;
  return os.str();
}

std::size_t AcousticConfig::conv_output_width() const {
  std::size_t w = mel_bins;
  for (std::size_t i = 0; i < conv_channels.size(); ++i) w /= 2;
  return (conv_channels.empty() ? 1 : conv_channels.back()) * w;
}

AcousticConfig acoustic_config_from_architecture(std::string_view architecture) {
  const auto f = parse_architecture(architecture, "acoustic/v1");
  AcousticConfig cfg;
  cfg.mel_bins = field_size(f, "mel");
  cfg.kernel = field_size(f, "kernel");
  cfg.rnn_hidden = field_size(f, "rnn");
  cfg.keys = field_size(f, "keys");
  cfg.conv_channels.clear();
  std::istringstream conv(f.count("conv") ? f.at("conv") : "");
  std::string tok;
  while (std::getline(conv, tok, ',')) {
    if (!tok.empty()) cfg.conv_channels.push_back(std::stoul(tok));
  }
  return cfg;
}

// ---------------------------------------------------------------- correction

template <typename T>
CorrectionModel<T>::CorrectionModel(const CorrectionConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      lstm_("correction.lstm", cfg.features.width(cfg.keys), cfg.hidden),
      out_("correction.out", 2 * cfg.hidden, cfg.keys) {
  std::mt19937_64 rng(seed);
  lstm_.init_uniform(rng);
  out_.init_uniform(rng);
}

template <typename T>
Tensor2<T> CorrectionModel<T>::forward(const Tensor2<T>& input) {
  if (input.cols() != input_width()) {
    throw nn::ShapeError("correction module: configured input width " +
                         std::to_string(input_width()) + ", given " +
                         std::to_string(input.cols()));
  }
  return act_.forward(out_.forward(lstm_.forward(input)));
}

template <typename T>
void CorrectionModel<T>::backward(const Tensor2<T>& grad_out) {
  lstm_.backward(out_.backward(act_.backward(grad_out), true), false);
}

template <typename T>
nn::ParamList<T> CorrectionModel<T>::params() {
  nn::ParamList<T> p;
  lstm_.collect(p);
  out_.collect(p);
  return p;
}

// ---------------------------------------------------------------- acoustic

template <typename T>
AcousticModel<T>::AcousticModel(const AcousticConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      lstm_("acoustic.lstm", cfg.conv_output_width(), cfg.rnn_hidden),
      out_("acoustic.out", 2 * cfg.rnn_hidden, cfg.keys) {
  std::size_t in = 1;
  for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
    blocks_.push_back(Block{nn::Conv2d<T>("acoustic.conv" + std::to_string(i), in,
                                          cfg.conv_channels[i], cfg.kernel),
                            {}, {}});
    in = cfg.conv_channels[i];
  }
  std::mt19937_64 rng(seed);
  for (auto& b : blocks_) b.conv.init_uniform(rng);
  lstm_.init_uniform(rng);
  out_.init_uniform(rng);
}

template <typename T>
Tensor2<T> AcousticModel<T>::forward(const Tensor2<T>& input) {
  if (input.cols() != cfg_.mel_bins) {
    throw nn::ShapeError("acoustic branch: expected " + std::to_string(cfg_.mel_bins) +
                         " mel bins, got " + std::to_string(input.cols()));
  }
  const Tensor2<T> norm = standardize(input);
  frames_ = input.rows();
  Tensor3<T> x(1, frames_, cfg_.mel_bins);
  std::copy(norm.flat().begin(), norm.flat().end(), x.flat().begin());
  for (auto& b : blocks_) x = b.pool.forward(b.relu.forward(b.conv.forward(x)));
  last_channels_ = x.channels();
  last_width_ = x.width();
  Tensor2<T> seq(frames_, last_channels_ * last_width_);
  for (std::size_t t = 0; t < frames_; ++t) {
    for (std::size_t c = 0; c < last_channels_; ++c) {
      std::copy_n(x.line(c, t), last_width_, seq.row(t).data() + c * last_width_);
    }
  }
  return act_.forward(out_.forward(lstm_.forward(seq)));
}

template <typename T>
void AcousticModel<T>::backward(const Tensor2<T>& grad_out) {
  const Tensor2<T> dseq = lstm_.backward(out_.backward(act_.backward(grad_out), true), true);
  Tensor3<T> dx(last_channels_, frames_, last_width_);
  for (std::size_t t = 0; t < frames_; ++t) {
    for (std::size_t c = 0; c < last_channels_; ++c) {
      std::copy_n(dseq.row(t).data() + c * last_width_, last_width_, dx.line(c, t));
    }
  }
  for (std::size_t i = blocks_.size(); i-- > 0;) {
    auto& b = blocks_[i];
    dx = b.conv.backward(b.relu.backward(b.pool.backward(dx)), i > 0);
  }
}

template <typename T>
nn::ParamList<T> AcousticModel<T>::params() {
  nn::ParamList<T> p;
  for (auto& b : blocks_) b.conv.collect(p);
  lstm_.collect(p);
  out_.collect(p);
  return p;
}

// ---------------------------------------------------------------- helpers

Tensor2<float> build_correction_input(const VelocityGrid& prelim,
                                      const pianoroll::ScoreFeatures& sf,
                                      const FeatureConfig& cfg) {
  const std::size_t T = prelim.values.rows();
  const std::size_t P = prelim.values.cols();
  if (sf.onset.rows() != T || sf.onset.cols() != P) {
    throw nn::ShapeError("build_correction_input: preliminary grid is " + std::to_string(T) + "x" +
                         std::to_string(P) + ", score features are " +
                         std::to_string(sf.onset.rows()) + "x" + std::to_string(sf.onset.cols()));
  }
  Tensor2<float> out(T, cfg.width(P));
  for (std::size_t t = 0; t < T; ++t) {
    float* row = out.row(t).data();
    std::copy_n(prelim.values.row(t).data(), P, row);
    std::size_t col = P;
    auto append = [&](const pianoroll::BinaryRoll& roll) {
      for (std::size_t p = 0; p < P; ++p) row[col + p] = float(roll(t, p));
      col += P;
    };
    if (cfg.onset) append(sf.onset);
    if (cfg.frame) append(sf.frame);
    if (cfg.frame_ex) append(sf.frame_ex);
  }
  return out;
}

VelocityGrid acoustic_forward(AcousticModel<float>& model, const dsp::MelSpectrogram& mel) {
  return VelocityGrid{model.forward(mel.values), GridRole::kPreliminary};
}

VelocityGrid correction_forward(CorrectionModel<float>& model, const Tensor2<float>& input) {
  return VelocityGrid{model.forward(input), GridRole::kRefined};
}

std::vector<NoteVelocity> map_onset_velocities(const VelocityGrid& grid,
                                               const pianoroll::ScoreFeatures& sf,
                                               const MapOptions& options) {
  std::vector<NoteVelocity> out;
  out.reserve(sf.onset_notes.size());
  const std::size_t T = grid.values.rows();
  for (const auto& cell : sf.onset_notes) {
    if (cell.row >= T || cell.key >= grid.values.cols()) {
      throw nn::ShapeError("map_onset_velocities: onset cell outside the grid");
    }
    float v = grid.values(cell.row, cell.key);
    if (options.window > 0) {
      const std::size_t lo = cell.row >= options.window ? cell.row - options.window : 0;
      const std::size_t hi = std::min(T - 1, cell.row + options.window);
      for (std::size_t r = lo; r <= hi; ++r) v = std::max(v, grid.values(r, cell.key));
    }
    out.push_back(NoteVelocity{cell.note_id, options.scale.denormalize(v)});
  }
  return out;
}

// ---------------------------------------------------------------- checkpoints

template <typename T>
checkpoint::Checkpoint to_checkpoint(VelocityModel<T>& model, const nn::AdamState<T>* state,
                                     const std::string& metadata_json) {
  checkpoint::Checkpoint ckpt;
  ckpt.architecture = model.architecture();
  auto meta = nlohmann::json::parse(metadata_json);
  if (!meta.is_object()) throw std::invalid_argument("checkpoint metadata must be a JSON object");
  auto add = [&](const std::string& name, const Tensor2<T>& t) {
    checkpoint::NamedArray a;
    a.name = name;
    a.shape = {std::uint32_t(t.rows()), std::uint32_t(t.cols())};
    a.values.resize(t.size());
    std::transform(t.flat().begin(), t.flat().end(), a.values.begin(),
                   [](T v) { return float(v); });
    ckpt.arrays.push_back(std::move(a));
  };
  const auto params = model.params();
  for (const auto* p : params) add(p->name, p->value);
  if (state != nullptr) {
    meta["adam_step"] = state->step;
    for (std::size_t i = 0; i < state->m.size() && i < params.size(); ++i) {
      add("adam.m/" + params[i]->name, state->m[i]);
      add("adam.v/" + params[i]->name, state->v[i]);
    }
  }
  ckpt.metadata = meta.dump();
  return ckpt;
}

template <typename T>
void load_checkpoint(VelocityModel<T>& model, const checkpoint::Checkpoint& ckpt,
                     nn::AdamState<T>* state) {
  using checkpoint::CheckpointError;
  if (ckpt.architecture != model.architecture()) {
    throw CheckpointError(CheckpointError::Kind::kArchitectureMismatch,
                          "checkpoint architecture '" + ckpt.architecture +
                              "' does not match model '" + model.architecture() + "'");
  }
  const auto params = model.params();
  auto lookup = [&](const std::string& name, const Tensor2<T>& like) {
    const auto* a = ckpt.find(name);
    if (a == nullptr) {
      throw CheckpointError(CheckpointError::Kind::kMissingArray, "checkpoint lacks '" + name + "'");
    }
    if (a->shape.size() != 2 || a->shape[0] != like.rows() || a->shape[1] != like.cols()) {
      throw CheckpointError(CheckpointError::Kind::kArchitectureMismatch,
                            "array '" + name + "' has the wrong shape");
    }
    return a;
  };
  // Validate everything before touching the model.
  std::vector<const checkpoint::NamedArray*> values, ms, vs;
  for (const auto* p : params) values.push_back(lookup(p->name, p->value));
  std::uint64_t step = 0;
  if (state != nullptr) {
    const auto meta = nlohmann::json::parse(ckpt.metadata);
    if (meta.contains("adam_step")) {
      step = meta["adam_step"].get<std::uint64_t>();
      for (const auto* p : params) {
        ms.push_back(lookup("adam.m/" + p->name, p->value));
        vs.push_back(lookup("adam.v/" + p->name, p->value));
      }
    }
  }
  auto copy_into = [](const checkpoint::NamedArray* a, Tensor2<T>& dst) {
    std::transform(a->values.begin(), a->values.end(), dst.flat().begin(),
                   [](float v) { return T(v); });
  };
  for (std::size_t i = 0; i < params.size(); ++i) copy_into(values[i], params[i]->value);
  if (state != nullptr) {
    state->step = step;
    state->m.clear();
    state->v.clear();
    for (std::size_t i = 0; i < ms.size(); ++i) {
      state->m.emplace_back(params[i]->value.rows(), params[i]->value.cols());
      state->v.emplace_back(params[i]->value.rows(), params[i]->value.cols());
      copy_into(ms[i], state->m.back());
      copy_into(vs[i], state->v.back());
    }
  }
}

template class CorrectionModel<float>;
template class CorrectionModel<double>;
template class AcousticModel<float>;
template class AcousticModel<double>;
template checkpoint::Checkpoint to_checkpoint<float>(VelocityModel<float>&,
                                                     const nn::AdamState<float>*,
                                                     const std::string&);
template checkpoint::Checkpoint to_checkpoint<double>(VelocityModel<double>&,
                                                      const nn::AdamState<double>*,
                                                      const std::string&);
template void load_checkpoint<float>(VelocityModel<float>&, const checkpoint::Checkpoint&,
                                     nn::AdamState<float>*);
template void load_checkpoint<double>(VelocityModel<double>&, const checkpoint::Checkpoint&,
                                      nn::AdamState<double>*);

}  // namespace velocorr::models

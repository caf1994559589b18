#include "velocorr/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <random>

#include "json.hpp"

namespace velocorr::trainer {
namespace {

bool fits(const models::VelocityModel<float>& model, const Sample& s, std::string* why) {
  const std::size_t T = s.input.rows();
  if (T == 0) {
    *why = "empty input";
  } else if (s.input.cols() != model.input_width()) {
    *why = "input width " + std::to_string(s.input.cols()) + ", model expects " +
           std::to_string(model.input_width());
  } else if (s.target.rows() != T || s.mask.rows() != T || s.target.cols() != s.mask.cols()) {
    *why = "target/mask shape disagrees with input frames";
  } else {
    for (const auto& n : s.notes) {
      if (n.row >= T || n.key >= s.target.cols()) {
        *why = "note outside the grid";
        return false;
      }
    }
    return true;
  }
  return false;
}

std::vector<const Sample*> usable(const models::VelocityModel<float>& model,
                                  const std::vector<Sample>& samples,
                                  std::vector<std::string>& warnings) {
  std::vector<const Sample*> out;
  for (const auto& s : samples) {
    std::string why;
    if (fits(model, s, &why)) {
      out.push_back(&s);
    } else {
      warnings.push_back("skipping sample '" + s.id + "': " + why);
    }
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!os) throw TrainError("cannot write checkpoint " + path.string());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

double pooled_mae(models::VelocityModel<float>& model, const std::vector<const Sample*>& split,
                  const pianoroll::VelocityScale& scale) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const Sample* s : split) {
    if (s->notes.empty()) continue;
    const Tensor2<float> pred = model.forward(s->input);
    for (const auto& note : s->notes) {
      sum += std::abs(scale.denormalize(pred(note.row, note.key)) - note.velocity);
      ++n;
    }
  }
  if (n == 0) throw TrainError("validation split has no notes");
  return sum / double(n);
}

}  // namespace

Sample make_sample(std::string id, Tensor2<float> input, const pianoroll::ScoreFeatures& sf,
                   const midi::MidiPerformance& perf) {
  Sample s;
  s.id = std::move(id);
  s.input = std::move(input);
  s.target = sf.target_vel;
  s.mask = pianoroll::onset_mask(sf);
  for (const auto& c : sf.onset_notes) {
    s.notes.push_back(NoteTruth{c.row, c.key, perf.notes.at(c.note_id).velocity});
  }
  return s;
}

std::vector<Sample> correction_samples(const std::string& id, const midi::MidiPerformance& perf,
                                       const Tensor2<float>& prelim,
                                       const pianoroll::SegmentSpec& spec, std::size_t hop_frames,
                                       const models::FeatureConfig& features) {
  std::vector<Sample> out;
  const auto segments = pianoroll::segment_performance(perf, spec, hop_frames);
  for (std::size_t k = 0; k < segments.size(); ++k) {
    const auto& seg = segments[k];
    models::VelocityGrid grid{
        slice_rows(prelim, std::size_t(seg.spec.first_frame()), seg.spec.frames),
        models::GridRole::kPreliminary};
    out.push_back(make_sample(id + "#" + std::to_string(k),
                              models::build_correction_input(grid, seg.features, features),
                              seg.features, perf));
  }
  return out;
}

std::vector<Sample> acoustic_samples(const std::string& id, const midi::MidiPerformance& perf,
                                     const Tensor2<float>& mel, const pianoroll::SegmentSpec& spec,
                                     std::size_t hop_frames) {
  std::vector<Sample> out;
  const auto segments = pianoroll::segment_performance(perf, spec, hop_frames);
  for (std::size_t k = 0; k < segments.size(); ++k) {
    const auto& seg = segments[k];
    out.push_back(make_sample(id + "#" + std::to_string(k),
                              slice_rows(mel, std::size_t(seg.spec.first_frame()), seg.spec.frames),
                              seg.features, perf));
  }
  return out;
}

double validate(models::VelocityModel<float>& model, const std::vector<Sample>& split,
                const pianoroll::VelocityScale& scale) {
  std::vector<std::string> ignored;
  const auto ok = usable(model, split, ignored);
  return pooled_mae(model, ok, scale);
}

TrainState train(models::VelocityModel<float>& model, const std::vector<Sample>& train_set,
                 const std::vector<Sample>& val_set, const TrainConfig& cfg, std::ostream* log) {
  if (cfg.batch_size == 0) throw TrainError("batch size must be positive");
  TrainState state;
  const auto train_ok = usable(model, train_set, state.warnings);
  if (train_ok.empty()) throw TrainError("no usable training samples");
  auto val_ok = usable(model, val_set, state.warnings);
  if (val_ok.empty()) val_ok = train_ok;

  const nlohmann::json extra = nlohmann::json::parse(cfg.metadata_json);
  if (!extra.is_object()) throw TrainError("checkpoint metadata must be a JSON object");
  if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, train_ok.size() - 1);
  nn::AdamState<float> adam;
  const auto params = model.params();
  const pianoroll::VelocityScale scale{};

  auto snapshot = [&](std::optional<double> mae) {
    nlohmann::json meta = extra;
    meta["iteration"] = state.iteration;
    meta["seed"] = cfg.seed;
    meta["batch_size"] = cfg.batch_size;
    if (mae) meta["val_mae"] = *mae;
    return checkpoint::encode(models::to_checkpoint<float>(model, &adam, meta.dump()));
  };

  if (log) *log << "# iteration lr loss val_mae\n";
  for (std::uint64_t it = 1; it <= cfg.iterations; ++it) {
    const double lr = nn::scheduled_lr(cfg.adam, adam.step);
    nn::zero_grads(params);
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const Sample& s = *train_ok[pick(rng)];
      const Tensor2<float> pred = model.forward(s.input);
      auto loss = nn::masked_bce(pred, s.target, s.mask, cfg.reduction);
      batch_loss += double(loss.loss);
      const float inv = 1.0f / float(cfg.batch_size);
      for (auto& g : loss.grad.flat()) g *= inv;
      model.backward(loss.grad);
    }
    batch_loss /= double(cfg.batch_size);
    if (!std::isfinite(batch_loss)) {
      throw TrainError("non-finite loss at iteration " + std::to_string(it));
    }
    nn::adam_step(params, adam, cfg.adam);
    state.iteration = it;
    state.losses.push_back(batch_loss);

    std::optional<double> mae;
    const bool due = it == cfg.iterations ||
                     (cfg.validation_interval > 0 && it % cfg.validation_interval == 0);
    if (due) {
      mae = pooled_mae(model, val_ok, scale);
      state.validations.push_back({it, *mae});
      auto bytes = snapshot(mae);
      if (!state.best_mae || *mae < *state.best_mae) {
        state.best_mae = mae;
        state.best_iteration = it;
        state.best_checkpoint = bytes;
        if (!cfg.checkpoint_dir.empty()) write_file(cfg.checkpoint_dir / "best.ckpt", bytes);
      }
      if (!cfg.checkpoint_dir.empty()) write_file(cfg.checkpoint_dir / "last.ckpt", bytes);
      state.last_checkpoint = std::move(bytes);
    }
    if (log) {
      *log << it << ' ' << fmt(lr) << ' ' << fmt(batch_loss) << ' ' << (mae ? fmt(*mae) : "-")
           << '\n';
    }
  }
  if (cfg.iterations == 0) {
    state.last_checkpoint = snapshot(std::nullopt);
    if (!cfg.checkpoint_dir.empty()) {
      write_file(cfg.checkpoint_dir / "last.ckpt", state.last_checkpoint);
    }
  }
  return state;
}

}  // namespace velocorr::trainer

#include "doctest.h"
#include "velocorr/checkpoint.hpp"
#include "velocorr/models.hpp"

using namespace velocorr;
using checkpoint::CheckpointError;

namespace {

models::CorrectionConfig small() {
  models::CorrectionConfig c;
  c.hidden = 8;
  c.keys = 88;
  return c;
}

std::vector<Tensor2<float>> values_of(models::VelocityModel<float>& m) {
  std::vector<Tensor2<float>> out;
  for (auto* p : m.params()) out.push_back(p->value);
  return out;
}

}  // namespace

TEST_CASE("round trip restores parameters bit for bit") {
  models::CorrectionModel<float> a(small(), 1), b(small(), 2);
  CHECK(values_of(a) != values_of(b));
  const auto bytes = checkpoint::encode(models::to_checkpoint<float>(a, nullptr, R"({"note":"x"})"));
  const auto ckpt = checkpoint::decode(bytes, a.architecture());
  models::load_checkpoint<float>(b, ckpt);
  CHECK(values_of(a) == values_of(b));
  CHECK(ckpt.metadata == R"({"note":"x"})");
}

TEST_CASE("optimizer state round trip") {
  models::CorrectionModel<float> a(small(), 1);
  auto params = a.params();
  nn::AdamState<float> st;
  for (auto* p : params) p->grad.fill(0.25f);
  nn::adam_step(params, st, {});
  nn::adam_step(params, st, {});
  const auto ckpt = checkpoint::decode(checkpoint::encode(models::to_checkpoint<float>(a, &st)));
  models::CorrectionModel<float> b(small(), 9);
  nn::AdamState<float> restored;
  models::load_checkpoint<float>(b, ckpt, &restored);
  CHECK(restored.step == 2);
  REQUIRE(restored.m.size() == st.m.size());
  for (std::size_t i = 0; i < st.m.size(); ++i) {
    CHECK(restored.m[i] == st.m[i]);
    CHECK(restored.v[i] == st.v[i]);
  }
}

TEST_CASE("saving is deterministic") {
  models::CorrectionModel<float> a(small(), 5);
  const auto x = checkpoint::encode(models::to_checkpoint<float>(a, nullptr));
  const auto y = checkpoint::encode(models::to_checkpoint<float>(a, nullptr));
  CHECK(x == y);
}

TEST_CASE("corruption and mismatches are refused without partial loads") {
  models::CorrectionModel<float> a(small(), 1);
  const auto bytes = checkpoint::encode(models::to_checkpoint<float>(a, nullptr));

  auto kind = [](auto&& fn) {
    try {
      fn();
    } catch (const CheckpointError& e) {
      return int(e.kind());
    }
    return -1;
  };
  for (std::size_t cut : {std::size_t(0), std::size_t(10), bytes.size() / 2, bytes.size() - 1}) {
    std::vector<std::uint8_t> t(bytes.begin(), bytes.begin() + std::ptrdiff_t(cut));
    CHECK(kind([&] { checkpoint::decode(t); }) == int(CheckpointError::Kind::kCorrupt));
  }
  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x40;
  CHECK(kind([&] { checkpoint::decode(flipped); }) == int(CheckpointError::Kind::kCorrupt));

  auto versioned = bytes;
  versioned[8] = 2;
  CHECK(kind([&] { checkpoint::decode(versioned); }) == int(CheckpointError::Kind::kVersion));

  auto other = small();
  other.features.frame_ex = true;
  models::CorrectionModel<float> b(other, 3);
  CHECK(kind([&] { checkpoint::decode(bytes, b.architecture()); }) ==
        int(CheckpointError::Kind::kArchitectureMismatch));
  const auto ckpt = checkpoint::decode(bytes);
  const auto before = values_of(b);
  CHECK(kind([&] { models::load_checkpoint<float>(b, ckpt); }) ==
        int(CheckpointError::Kind::kArchitectureMismatch));
  CHECK(values_of(b) == before);

  // Same architecture, one array missing: nothing may change.
  auto partial = ckpt;
  partial.arrays.pop_back();
  models::CorrectionModel<float> c(small(), 4);
  const auto c_before = values_of(c);
  CHECK(kind([&] { models::load_checkpoint<float>(c, partial); }) ==
        int(CheckpointError::Kind::kMissingArray));
  CHECK(values_of(c) == c_before);
}

TEST_CASE("architecture strings parse back") {
  auto cfg = small();
  cfg.features = {true, false, true};
  const auto back = models::correction_config_from_architecture(cfg.architecture());
  CHECK(back.features == cfg.features);
  CHECK(back.hidden == cfg.hidden);
  models::AcousticConfig ac;
  const auto ab = models::acoustic_config_from_architecture(ac.architecture());
  CHECK(ab.architecture() == ac.architecture());
  CHECK_THROWS_AS(models::correction_config_from_architecture(ac.architecture()), CheckpointError);
}

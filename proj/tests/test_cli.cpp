#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "velocorr/checkpoint.hpp"
#include "velocorr/cli.hpp"
#include "velocorr/formats.hpp"
#include "velocorr/midi_io.hpp"

using namespace velocorr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
#ifdef VELOCORR_TEST_TMP
  const fs::path root = VELOCORR_TEST_TMP;
#else
  const fs::path root = fs::temp_directory_path() / "velocorr_cli_test";
#endif
  const auto dir = root / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct Run {
  int code;
  std::string out, err;
};

Run velocorr_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Small, fast settings for every command.
fs::path tiny_config(const fs::path& dir, const std::string& extra = "") {
  const auto path = dir / "tiny.json";
  formats::write_text(path, R"({"profile": "desk",
    "segment": {"frames": 100, "hop_frames": 100},
    "correction": {"hidden": 8},
    "train": {"iterations": 6, "batch_size": 2, "validation_interval": 3, "base_lr": 0.001},
    "synth": {"piece_seconds": 1.0, "train_pieces": 3, "val_pieces": 1, "test_pieces": 2})" +
                                    extra + "}");
  return path;
}

std::uint64_t digest_tree(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& f : files) {
    const auto rel = fs::relative(f, dir).generic_string();
    h = checkpoint::fnv1a64({reinterpret_cast<const std::uint8_t*>(rel.data()), rel.size()}, h);
    const auto bytes = formats::read_file(f);
    h = checkpoint::fnv1a64(bytes, h);
  }
  return h;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(velocorr_cli({}).code == cli::kExitUsage);
  CHECK(velocorr_cli({"frobnicate"}).code == cli::kExitUsage);
  CHECK(velocorr_cli({"train", "--manifest", "m.json"}).code == cli::kExitUsage);  // no --out
  CHECK(velocorr_cli({"--help"}).code == cli::kExitOk);
  const auto dir = scratch("usage");
  CHECK(velocorr_cli({"gen-synth", "--out", (dir / "c").string(), "--profile", "nope"}).code ==
        cli::kExitUsage);
  CHECK(velocorr_cli({"eval", "--manifest", (dir / "missing.json").string()}).code ==
        cli::kExitUsage);
}

TEST_CASE("gen-synth is deterministic") {
  const auto dir = scratch("gen");
  const auto cfg = tiny_config(dir);
  for (const char* name : {"a", "b"}) {
    const auto r = velocorr_cli({"gen-synth", "--config", cfg.string(), "--out", (dir / name).string()});
    REQUIRE(r.code == 0);
  }
  CHECK(velocorr_cli({"gen-synth", "--config", cfg.string(), "--seed", "5", "--out",
                      (dir / "c").string()})
            .code == 0);
  CHECK(digest_tree(dir / "a") == digest_tree(dir / "b"));
  CHECK(digest_tree(dir / "a") != digest_tree(dir / "c"));
  const auto m = formats::load_manifest(dir / "a" / "manifest.json");
  CHECK(m.items.size() == 6);
  CHECK(m.split("test").size() == 2);
}

TEST_CASE("end to end: extract, train, infer, eval") {
  const auto dir = scratch("e2e");
  const auto cfg = tiny_config(dir);
  const auto corpus = dir / "corpus";
  REQUIRE(velocorr_cli({"gen-synth", "--config", cfg.string(), "--out", corpus.string()}).code == 0);
  const auto manifest = (corpus / "manifest.json").string();

  auto ex = velocorr_cli({"extract", "--config", cfg.string(), "--manifest", manifest});
  REQUIRE(ex.code == 0);
  CHECK(ex.out.find("extracted 6, up to date 0") != std::string::npos);
  ex = velocorr_cli({"extract", "--config", cfg.string(), "--manifest", manifest});
  CHECK(ex.out.find("extracted 0, up to date 6") != std::string::npos);

  const auto ckpt_dir = dir / "new" / "ckpt";
  const auto tr = velocorr_cli({"train", "--config", cfg.string(), "--manifest", manifest,
                                "--model", "correction", "--out", ckpt_dir.string()});
  REQUIRE_MESSAGE(tr.code == 0, tr.err);
  CHECK(tr.out.find("best_val_mae=") != std::string::npos);
  CHECK(fs::exists(ckpt_dir / "best.ckpt"));
  CHECK(fs::exists(ckpt_dir / "train.log"));
  const auto best = (ckpt_dir / "best.ckpt").string();

  const auto inf_dir = dir / "infer";
  const auto inf = velocorr_cli({"infer", "--config", cfg.string(), "--manifest", manifest,
                                 "--checkpoint", best, "--split", "test", "--out",
                                 inf_dir.string()});
  REQUIRE_MESSAGE(inf.code == 0, inf.err);
  const auto m = formats::load_manifest(manifest);
  for (const auto* item : m.split("test")) {
    const auto score = midi::parse_smf(formats::read_file(m.resolve(item->midi)));
    const auto out = midi::parse_smf(formats::read_file(inf_dir / (item->id + ".mid")));
    REQUIRE(out.notes.size() == score.notes.size());
    for (std::size_t i = 0; i < out.notes.size(); ++i) {
      CHECK(out.notes[i].onset_s == score.notes[i].onset_s);
      CHECK(out.notes[i].offset_s == score.notes[i].offset_s);
      CHECK(out.notes[i].pitch == score.notes[i].pitch);
    }
    const auto grid = formats::decode_grid(formats::read_file(inf_dir / (item->id + ".refined.vgrd")));
    CHECK(grid.values.cols() == 88);
    CHECK(grid.values.rows() >= 100);
  }

  const auto report = dir / "report.txt";
  const auto ev = velocorr_cli({"eval", "--config", cfg.string(), "--manifest", manifest,
                                "--checkpoint", best, "--out", report.string()});
  REQUIRE_MESSAGE(ev.code == 0, ev.err);
  CHECK(ev.out.rfind("# velocorr evaluation report v1\nsource=refined\nsplit=test\nmae=", 0) == 0);
  CHECK(formats::read_file(report).size() == ev.out.size());
  const auto pre = velocorr_cli({"eval", "--config", cfg.string(), "--manifest", manifest,
                                 "--source", "preliminary"});
  CHECK(pre.code == 0);
  CHECK(velocorr_cli({"eval", "--config", cfg.string(), "--manifest", manifest}).code ==
        cli::kExitUsage);  // refined without a checkpoint

  SUBCASE("checkpoint for another feature set exits with 4") {
    const auto r = velocorr_cli({"infer", "--config", cfg.string(), "--manifest", manifest,
                                 "--features", "onset,frame_ex", "--checkpoint", best, "--out",
                                 inf_dir.string()});
    CHECK(r.code == cli::kExitCheckpoint);
  }
  SUBCASE("corrupt checkpoint exits with 4") {
    auto bytes = formats::read_file(best);
    bytes[bytes.size() / 2] ^= 1;
    formats::write_file(dir / "bad.ckpt", bytes);
    const auto r = velocorr_cli({"eval", "--config", cfg.string(), "--manifest", manifest,
                                 "--checkpoint", (dir / "bad.ckpt").string()});
    CHECK(r.code == cli::kExitCheckpoint);
  }
  SUBCASE("invalid model name exits with 2") {
    CHECK(velocorr_cli({"train", "--config", cfg.string(), "--manifest", manifest, "--model",
                        "transformer", "--out", ckpt_dir.string()})
              .code == cli::kExitUsage);
  }
}

TEST_CASE("training without training data exits with 3") {
  const auto dir = scratch("notrain");
  const auto cfg = tiny_config(dir, R"(, "features": "onset")");
  const auto corpus = dir / "corpus";
  REQUIRE(velocorr_cli({"gen-synth", "--config", cfg.string(), "--out", corpus.string()}).code == 0);
  auto m = formats::load_manifest(corpus / "manifest.json");
  for (auto& item : m.items) item.split = "test";
  formats::write_text(corpus / "manifest.json", formats::manifest_json(m));
  const auto r = velocorr_cli({"train", "--config", cfg.string(), "--manifest",
                               (corpus / "manifest.json").string(), "--out",
                               (dir / "ckpt").string()});
  CHECK(r.code == cli::kExitTraining);
}

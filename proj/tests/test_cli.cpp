#include <doctest.h>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "pedintent/annotations.hpp"
#include "pedintent/checkpoint.hpp"
#include "support/fixtures.hpp"

using namespace pedintent;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string motion_config(const fs::path& data, std::size_t epochs) {
  return R"({"model": {"preset": "ours6_bboxes"}, "annotations": ")" + (data / "annotations.jsonl").string() +
         R"(", "train": {"max_epochs": )" + std::to_string(epochs) + R"(, "batch_size": 16, "lr": 0.001}})";
}

}  // namespace

TEST_CASE("generate is deterministic") {
  testing::TempDir dir;
  REQUIRE(run({"generate", "--seed", "3", "--tracks", "6", "--out", (dir / "a").string()}).code == 0);
  REQUIRE(run({"generate", "--seed", "3", "--tracks", "6", "--out", (dir / "b").string()}).code == 0);
  for (const char* f : {"annotations.jsonl", "frames.pvf"})
    CHECK(testing::read_text(dir / "a" / f) == testing::read_text(dir / "b" / f));
}

TEST_CASE("usage and config errors exit with 1") {
  testing::TempDir dir;
  CHECK(run({"frobnicate"}).code == 1);
  CHECK(run({"train"}).code == 1);
  write(dir / "bad.json", R"({"learning_rate": 1})");
  const auto r = run({"train", "--config", (dir / "bad.json").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("learning_rate") != std::string::npos);
  CHECK(run({"gradcheck", "--config", (dir / "bad.json").string()}).code == 1);
}

TEST_CASE("missing inputs exit nonzero with a message") {
  testing::TempDir dir;
  const auto r = run({"eval", "--checkpoint", (dir / "none.ckpt").string(), "--data", dir.path().string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("none.ckpt") != std::string::npos);
  write(dir / "cfg.json", R"({"annotations": "missing.jsonl"})");
  CHECK(run({"train", "--config", (dir / "cfg.json").string(), "--out", (dir / "o").string()}).code == 2);
}

TEST_CASE("train, eval, predict, finetune and ensemble") {
  testing::TempDir dir;
  const auto data = dir / "data";
  REQUIRE(run({"generate", "--seed", "1", "--tracks", "40", "--out", data.string()}).code == 0);
  write(dir / "cfg.json", motion_config(data, 3));

  const auto t = run({"train", "--config", (dir / "cfg.json").string(), "--out", (dir / "m1").string()});
  INFO(t.err);
  REQUIRE(t.code == 0);
  CHECK(t.out.find("epoch 1") != std::string::npos);
  for (const char* f : {"model.ckpt", "history.csv", "config.json"}) CHECK(fs::exists(dir / "m1" / f));

  const auto e = run({"eval", "--checkpoint", (dir / "m1" / "model.ckpt").string(), "--data", data.string(), "--out",
                      (dir / "eval").string()});
  INFO(e.err);
  CHECK(e.code == 0);
  const auto metrics = testing::read_text(dir / "eval" / "metrics.csv");
  REQUIRE(metrics.rfind("Acc,AUC,F1,Precision,Recall\n", 0) == 0);
  CHECK(std::stod(metrics.substr(metrics.find('\n') + 1)) >= 0.95);

  const auto tracks = load_annotations(data / "annotations.jsonl");
  const auto& tr = tracks.front();
  const auto p = run({"predict", "--checkpoint", (dir / "m1" / "model.ckpt").string(), "--data", data.string(),
                      "--pid", tr.pedestrian_id, "--frame", std::to_string(tr.event_frame - 40)});
  INFO(p.err);
  CHECK(p.code == 0);
  CHECK(p.out.find("probability ") == 0);
  CHECK(run({"predict", "--checkpoint", (dir / "m1" / "model.ckpt").string(), "--data", data.string(), "--pid",
             "nobody", "--frame", "0"})
            .code == 2);

  const auto f = run({"finetune", "--checkpoint", (dir / "m1" / "model.ckpt").string(), "--config",
                      (dir / "cfg.json").string(), "--out", (dir / "ft").string(), "--epochs", "1"});
  INFO(f.err);
  CHECK(f.code == 0);
  CHECK(fs::exists(dir / "ft" / "model.ckpt"));

  REQUIRE(run({"train", "--config", (dir / "cfg.json").string(), "--out", (dir / "m2").string(), "--seed", "5"}).code ==
          0);
  const auto before = file_fingerprint(dir / "m1" / "model.ckpt");
  const auto en = run({"ensemble", "--members", (dir / "m1" / "model.ckpt").string(),
                       (dir / "m2" / "model.ckpt").string(), (dir / "ft" / "model.ckpt").string(), "--config",
                       (dir / "cfg.json").string(), "--out", (dir / "ens").string()});
  INFO(en.err);
  REQUIRE(en.code == 0);
  CHECK(en.out.find("members unchanged") != std::string::npos);
  CHECK(file_fingerprint(dir / "m1" / "model.ckpt") == before);
  const auto ee = run({"eval", "--checkpoint", (dir / "ens" / "ensemble.ckpt").string(), "--data", data.string(),
                       "--out", (dir / "eval2").string()});
  INFO(ee.err);
  CHECK(ee.code == 0);
}

TEST_CASE("train twice gives identical files") {
  testing::TempDir dir;
  const auto data = dir / "data";
  REQUIRE(run({"generate", "--seed", "2", "--tracks", "20", "--out", data.string()}).code == 0);
  write(dir / "cfg.json", motion_config(data, 2));
  for (const char* o : {"a", "b"})
    REQUIRE(run({"train", "--config", (dir / "cfg.json").string(), "--out", (dir / o).string()}).code == 0);
  CHECK(testing::read_text(dir / "a" / "model.ckpt") == testing::read_text(dir / "b" / "model.ckpt"));
  CHECK(testing::read_text(dir / "a" / "history.csv") == testing::read_text(dir / "b" / "history.csv"));
}

TEST_CASE("gradcheck command") {
  testing::TempDir dir;
  write(dir / "spec.json", R"({"preset": "ours6_bboxes"})");
  const auto ok = run({"gradcheck", "--config", (dir / "spec.json").string(), "--precision", "both"});
  INFO(ok.err);
  CHECK(ok.code == 0);
  CHECK(ok.out.find("PASS") != std::string::npos);
  CHECK(ok.out.find("(f32)") != std::string::npos);
  const auto strict = run({"gradcheck", "--config", (dir / "spec.json").string(), "--precision", "f32",
                           "--tolerance", "1e-12"});
  CHECK(strict.code == 3);
  CHECK(strict.out.find("FAIL") != std::string::npos);
  CHECK(run({"gradcheck", "--config", (dir / "spec.json").string(), "--eps", "0.1"}).code == 1);
  CHECK(run({"gradcheck", "--config", (dir / "spec.json").string(), "--precision", "both", "--tolerance", "1"})
            .code == 1);
}

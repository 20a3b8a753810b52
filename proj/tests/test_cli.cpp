#include <sstream>

#include "aes/config.hpp"
#include "aes/error.hpp"
#include "aes/util.hpp"
#include "cli.hpp"
#include "doctest.h"
#include "json.hpp"
#include "support.hpp"

using namespace aes;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "aes");
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

const char* kSmallConfig = R"(config_version: 1
seed: 3
tokenizer:
  max_words: 500
  max_length: 32
encoder:
  d_model: 16
  n_layers: 1
  n_heads: 2
  d_ff: 32
train:
  learning_rate: 0.003
  batch_size: 16
  max_epochs: 2
  early_stop_patience: 2
llm:
  offline_stub: true
)";

}  // namespace

TEST_CASE("usage errors exit 1, help and version exit 0") {
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"score", "--prompt", "1"}).code == kExitUsage);
  CHECK(run({"evaluate", "--data", "/nonexistent.tsv", "--model", "/nonexistent.ckpt"}).code == kExitUsage);
  const auto help = run({"--help"});
  CHECK(help.code == kExitOk);
  CHECK(help.out.find("train") != std::string::npos);
  CHECK(run({"train", "--help"}).code == kExitOk);
  const auto version = run({"--version"});
  CHECK(version.code == kExitOk);
  CHECK(version.out.find(std::string(build_version())) != std::string::npos);
}

TEST_CASE("synth, train, evaluate, score and feedback end to end") {
  testing::TempDir dir;
  const auto cfg = dir.file("small.yaml");
  write_file(cfg, kSmallConfig);
  const auto data = dir.file("syn.tsv");
  const auto model = dir.file("m.ckpt");

  auto r = run({"synth", "--config", cfg, "--out", data, "--essays", "90"});
  REQUIRE(r.code == kExitOk);
  CHECK(split(read_file(data), '\n').size() >= 91);

  r = run({"build-vocab", "--config", cfg, "--data", data, "--out", dir.file("v.txt")});
  REQUIRE(r.code == kExitOk);

  r = run({"train", "--config", cfg, "--data", data, "--vocab", dir.file("v.txt"), "--out", model, "--history",
           dir.file("h.tsv"), "--split-out", dir.file("split.txt")});
  INFO(r.err);
  REQUIRE(r.code == kExitOk);
  CHECK(r.out == sha256_file(model) + "  " + model + "\n");
  CHECK(read_file(dir.file("h.tsv")).starts_with("epoch\ttrain_loss\tdev_qwk\n"));

  // retraining with the same seed reproduces the checkpoint byte for byte
  r = run({"train", "--config", cfg, "--data", data, "--vocab", dir.file("v.txt"), "--out", dir.file("m2.ckpt")});
  REQUIRE(r.code == kExitOk);
  CHECK(sha256_file(dir.file("m2.ckpt")) == sha256_file(model));

  r = run({"evaluate", "--config", cfg, "--data", data, "--model", model});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("Model\tCollection 2\tCollection 3\tCollection 8\tAverage") != std::string::npos);
  CHECK(r.out.find(sha256_file(model)) != std::string::npos);

  r = run({"evaluate", "--config", cfg, "--data", data, "--model", model, "--subset", "all", "--json"});
  REQUIRE(r.code == kExitOk);
  CHECK(nlohmann::json::parse(r.out)["prompts"].size() == 3);

  const auto essay = dir.file("essay.txt");
  write_file(essay, "The cyclist rode on. The road was excellent and the heat was excellent.");
  r = run({"score", "--config", cfg, "--model", model, "--prompt", "2", "--in", essay});
  REQUIRE(r.code == kExitOk);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["prompt_id"] == 2);
  CHECK(j["traits"].size() == 5);

  r = run({"feedback", "--config", cfg, "--model", model, "--prompt", "8", "--in", essay, "--offline"});
  REQUIRE(r.code == kExitOk);
  const auto fb = nlohmann::json::parse(r.out);
  CHECK(fb["feedback"]["traits"].size() == 6);
  CHECK(fb["feedback"]["provenance"]["source"] == "stub");

  // runtime failures exit 2 with the error code on stderr
  r = run({"score", "--config", cfg, "--model", model, "--prompt", "9", "--in", essay});
  CHECK(r.code == kExitRuntime);
  CHECK(r.err.find("[unknown_prompt]") != std::string::npos);

  auto bytes = read_file(model);
  bytes[bytes.size() / 2] ^= 0x10;
  write_file(dir.file("bad.ckpt"), bytes);
  r = run({"score", "--config", cfg, "--model", dir.file("bad.ckpt"), "--prompt", "2", "--in", essay});
  CHECK(r.code == kExitRuntime);
  CHECK(r.err.find("[corrupt_checkpoint]") != std::string::npos);
}

TEST_CASE("config loading") {
  testing::TempDir dir;
  auto load = [&](const std::string& text) {
    write_file(dir.file("c.yaml"), text);
    return AppConfig::from_file(dir.file("c.yaml"));
  };
  const auto cfg = load(kSmallConfig);
  CHECK(cfg.seed == 3);
  CHECK(cfg.train.seed == 3);
  CHECK(cfg.model.encoder.seed == 3);
  CHECK(cfg.model.max_content_length == 32);
  CHECK(cfg.model.encoder.max_positions == 34);
  CHECK(cfg.model.encoder.d_model == 16);
  CHECK(cfg.service.llm.offline_stub);

  auto copy = cfg;
  copy.set_seed(42);
  CHECK(copy.train.seed == 42);
  CHECK(copy.model.encoder.seed == 42);

  auto code_of = [&](const std::string& text) {
    try {
      load(text);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Io;
  };
  CHECK(code_of("config_version: 1\nbogus: 1\n") == ErrorCode::InvalidConfig);
  CHECK(code_of("config_version: 1\ntrain:\n  learnin_rate: 1\n") == ErrorCode::InvalidConfig);
  CHECK(code_of("config_version: 2\n") == ErrorCode::VersionMismatch);
  CHECK(code_of("config_version: 1\nllm:\n  max_retries: -2\n") == ErrorCode::InvalidConfig);
  CHECK(code_of("config_version: 1\nllm:\n  api_key: sk-123\n") == ErrorCode::InvalidConfig);

  const auto r = run({"synth", "--config", dir.file("c.yaml"), "--out", dir.file("x.tsv")});
  CHECK(r.code == kExitRuntime);
}

TEST_CASE("seed override changes the synthetic corpus") {
  testing::TempDir dir;
  REQUIRE(run({"synth", "--out", dir.file("a.tsv"), "--essays", "12"}).code == kExitOk);
  REQUIRE(run({"synth", "--out", dir.file("b.tsv"), "--essays", "12"}).code == kExitOk);
  REQUIRE(run({"synth", "--out", dir.file("c.tsv"), "--essays", "12", "--seed", "99"}).code == kExitOk);
  CHECK(read_file(dir.file("a.tsv")) == read_file(dir.file("b.tsv")));
  CHECK(read_file(dir.file("a.tsv")) != read_file(dir.file("c.tsv")));
}

#include <limits>

#include "aes/error.hpp"
#include "aes/evaluation.hpp"
#include "aes/synthetic.hpp"
#include "aes/training.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace aes;

namespace {

struct Fixture {
  PromptTable table = builtin_prompt_table();
  std::vector<EssayRecord> records;
  DatasetSplit split;

  explicit Fixture(int essays = 120) {
    SyntheticSpec spec;
    spec.essays = essays;
    records = make_synthetic_corpus(table, spec);
    split = split_dataset(records, {}, 5);
  }

  ModelState model(std::uint64_t seed = 1) const {
    std::vector<std::string> texts;
    for (const auto& r : select_records(records, split.train)) texts.push_back(r.text);
    auto vocab = build_vocabulary(texts);
    auto cfg = ModelConfig::tiny(vocab.size(), 64);
    cfg.encoder.seed = seed;
    return init_model(cfg, std::move(vocab), table);
  }
};

TrainConfig quick(int epochs = 2) {
  TrainConfig c;
  c.max_epochs = epochs;
  c.early_stop_patience = epochs;
  c.seed = 9;
  return c;
}

std::vector<Mat> tensors_of(const auto& weights) {
  std::vector<Mat> out;
  weights.for_each([&](const std::string&, const Mat& m) { out.push_back(m); });
  return out;
}

}  // namespace

TEST_CASE("loss arithmetic") {
  CHECK(score_loss(0.3, 0.3, {0.1, 0.9}, {0.1, 0.9}, 1.0) == 0.0);
  CHECK(score_loss(0.75, 0.25, {}, {}, 3.0) == 0.25);
  CHECK(score_loss(0.5, 0.5, {0.2, 0.7}, {0.1, 0.4}, 1.0) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(score_loss(0.5, 0.5, {0.2, 0.7}, {0.1, 0.4}, 2.0) == doctest::Approx(0.10).epsilon(1e-12));
  CHECK(score_loss(0.9, 0.1, {0.0}, {1.0}, 1.0) > 0.0);
  CHECK_THROWS_AS(score_loss(0.1, 0.1, {0.1}, {}, 1.0), Error);
}

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.learning_rate = 0.0;
  CHECK_NOTHROW(c.validate());
  c.early_stop_patience = 31;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.learning_rate = -1.0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("zero learning rate leaves every parameter bit-identical") {
  const Fixture f;
  auto model = f.model();
  const auto before = tensors_of(model.weights);
  auto cfg = quick();
  cfg.learning_rate = 0.0;
  train(model, f.split, f.records, f.table, cfg);
  const auto after = tensors_of(model.weights);
  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);
  CHECK(model.trained);
}

TEST_CASE("same seed and config give identical histories and checkpoints") {
  const Fixture f;
  auto a = f.model();
  auto b = f.model();
  const auto ha = train(a, f.split, f.records, f.table, quick(3));
  const auto hb = train(b, f.split, f.records, f.table, quick(3));
  CHECK(ha == hb);
  CHECK(serialize_model(a) == serialize_model(b));
  CHECK(ha.epochs.size() == 3);

  auto c = f.model();
  auto other = quick(3);
  other.seed = 10;
  train(c, f.split, f.records, f.table, other);
  CHECK(serialize_model(c) != serialize_model(a));
}

TEST_CASE("freezing the encoder trains only the heads") {
  const Fixture f;
  auto model = f.model();
  const auto enc_before = tensors_of(model.weights.encoder);
  const auto heads_before = tensors_of(model.weights.heads);
  auto cfg = quick();
  cfg.freeze_encoder = true;
  train(model, f.split, f.records, f.table, cfg);
  const auto enc_after = tensors_of(model.weights.encoder);
  for (std::size_t i = 0; i < enc_before.size(); ++i) CHECK(enc_before[i] == enc_after[i]);
  const auto heads_after = tensors_of(model.weights.heads);
  bool changed = false;
  for (std::size_t i = 0; i < heads_before.size(); ++i) changed |= heads_before[i] != heads_after[i];
  CHECK(changed);
}

TEST_CASE("early stopping after patience epochs without improvement") {
  const Fixture f;
  auto model = f.model();
  auto cfg = quick(10);
  cfg.learning_rate = 0.0;
  cfg.early_stop_patience = 2;
  const auto h = train(model, f.split, f.records, f.table, cfg);
  CHECK(h.early_stopped);
  CHECK(h.epochs.size() == 3);
  CHECK(h.best_epoch == 1);
  CHECK(h.to_tsv().starts_with("epoch\ttrain_loss\tdev_qwk\n1\t"));
}

TEST_CASE("non-finite loss aborts with DivergedLoss") {
  const Fixture f;
  auto model = f.model();
  for (auto& [key, set] : model.weights.heads.sets) {
    set.overall.weight(0, 0) = std::numeric_limits<double>::quiet_NaN();
  }
  try {
    train(model, f.split, f.records, f.table, quick());
    FAIL("expected DivergedLoss");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DivergedLoss);
  }
}

TEST_CASE("training needs both splits") {
  const Fixture f;
  auto model = f.model();
  CHECK_THROWS_AS(train(model, f.records, {}, f.table, quick()), Error);
  CHECK_THROWS_AS(train(model, std::vector<EssayRecord>{}, f.records, f.table, quick()), Error);
}

TEST_CASE("planted-keyword corpus is learned to dev QWK 0.7 within 30 epochs") {
  const Fixture f(1000);
  auto model = f.model(11);
  TrainConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.seed = 11;
  const auto h = train(model, f.split, f.records, f.table, cfg);
  const auto report = evaluate(model, select_records(f.records, f.split.dev), f.table);
  MESSAGE("best epoch " << h.best_epoch << " dev macro QWK " << report.macro_qwk);
  CHECK(report.macro_qwk >= 0.7);
}

TEST_CASE("synthetic corpus: gold scores are the planted-keyword function") {
  const auto table = builtin_prompt_table();
  SyntheticSpec spec;
  spec.essays = 90;
  const auto a = make_synthetic_corpus(table, spec);
  const auto b = make_synthetic_corpus(table, spec);
  REQUIRE(a.size() == 90);
  std::map<int, int> per_prompt;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].text == b[i].text);
    const auto& p = table.at(a[i].prompt_id);
    ++per_prompt[p.prompt_id];
    CHECK(static_cast<int>(a[i].trait_scores.size()) == p.trait_count());
    int k = 0;
    for (const auto& w : pre_tokenize(a[i].text)) k += w == spec.keyword;
    const double q = synthetic_quality(k, spec);
    CHECK(a[i].overall_score == denormalize_score(q, p.overall_range));
    for (std::size_t t = 0; t < p.trait_names.size(); ++t) {
      CHECK(a[i].trait_scores.at(p.trait_names[t]) ==
            denormalize_score(synthetic_trait_quality(q, t), p.trait_ranges[t]));
    }
  }
  CHECK(per_prompt[2] == 30);
  CHECK(per_prompt[3] == 30);
  CHECK(per_prompt[8] == 30);
  CHECK(synthetic_quality(0, spec) == 0.0);
  CHECK(synthetic_quality(spec.max_keywords, spec) == 1.0);
}

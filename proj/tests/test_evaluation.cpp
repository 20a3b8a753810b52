#include "aes/error.hpp"
#include "aes/evaluation.hpp"
#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace aes;

TEST_CASE("hand-derived kappa values") {
  CHECK(qwk({{0, 2}, {1, 1}, {0, 2}}) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(qwk({{0, 1, 2, 2}, {0, 2, 2, 2}, {0, 2}}) - 5.0 / 6.0) < 1e-9);
  CHECK(qwk({{0, 1, 2}, {0, 1, 2}, {0, 2}}) == 1.0);
  CHECK(qwk({{0, 2}, {2, 0}, {0, 2}}) < 0.0);
}

TEST_CASE("degenerate marginals return one") {
  CHECK(qwk({{3, 3, 3}, {3, 3, 3}, {1, 6}}) == 1.0);
  CHECK(qwk({{4}, {4}, {1, 6}}) == 1.0);
  CHECK(random_baseline_qwk(1, {0, 3}, 5, 5) == 1.0);
}

TEST_CASE("kappa rejects malformed input") {
  CHECK_THROWS_AS(qwk({{}, {}, {0, 3}}), Error);
  CHECK_THROWS_AS(qwk({{1, 2}, {1}, {0, 3}}), Error);
  CHECK_THROWS_AS(qwk({{1}, {1}, {1, 1}}), Error);
  try {
    qwk({{1, 4}, {1, 2}, {0, 3}});
    FAIL("expected ValueOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ValueOutOfRange);
  }
}

TEST_CASE("kappa of a vector with itself is one, symmetric and shift-invariant") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const ScoreRange r{0, 2 + static_cast<int>(rng.below(10))};
    std::vector<int> a, b;
    const auto n = 2 + rng.below(50);
    for (std::size_t i = 0; i < n; ++i) {
      a.push_back(rng.between(r.min, r.max));
      b.push_back(rng.between(r.min, r.max));
    }
    if (std::all_of(a.begin(), a.end(), [&](int v) { return v == a[0]; })) a[0] = a[0] == r.min ? r.max : r.min;
    CHECK(qwk({a, a, r}) == 1.0);
    CHECK(qwk({a, b, r}) == qwk({b, a, r}));
    auto sa = a, sb = b;
    for (auto& v : sa) v += 5;
    for (auto& v : sb) v += 5;
    CHECK(qwk({sa, sb, {r.min + 5, r.max + 5}}) == qwk({a, b, r}));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    std::vector<int> pa, pb;
    for (auto i : perm) {
      pa.push_back(a[i]);
      pb.push_back(b[i]);
    }
    CHECK(qwk({pa, pb, r}) == qwk({a, b, r}));
  }
}

TEST_CASE("kappa agrees with a confusion-matrix recomputation on every small input") {
  const auto sweep = testing::qwk_exhaustive(4, 5);
  CHECK(sweep.cases > 10000);
  CHECK(sweep.max_diff < 1e-12);
}

TEST_CASE("independent uniform raters land near zero") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    CHECK(std::abs(random_baseline_qwk(10000, {1, 6}, seed)) < 0.05);
  }
  CHECK(random_baseline_qwk(500, {0, 4}, 8, 8) == 1.0);
}

TEST_CASE("evaluation aggregates per prompt, per trait, pooled and macro") {
  const auto table = builtin_prompt_table();
  std::vector<ScoredEssay> essays;
  // prompt 3: perfect; prompt 8: the 0.8333 pattern on a stretched grid
  for (int v : {0, 1, 2, 3}) {
    ScoredEssay e;
    e.prompt_id = 3;
    e.gold_overall = e.pred_overall = v;
    for (const auto& t : table.at(3).trait_names) e.gold_traits[t] = e.pred_traits[t] = v;
    essays.push_back(e);
  }
  const int gold8[] = {0, 30, 60, 60};
  const int pred8[] = {0, 60, 60, 60};
  for (int i = 0; i < 4; ++i) {
    ScoredEssay e;
    e.prompt_id = 8;
    e.gold_overall = gold8[i];
    e.pred_overall = pred8[i];
    for (const auto& t : table.at(8).trait_names) e.gold_traits[t] = e.pred_traits[t] = 2 + i;
    essays.push_back(e);
  }
  const auto report = evaluate_predictions(essays, table);
  REQUIRE(report.prompts.size() == 2);
  CHECK(report.prompt(3)->overall_qwk == 1.0);
  CHECK(report.prompt(3)->essays == 4);
  CHECK(report.prompt(8)->trait_qwk.size() == 6);
  CHECK(report.prompt(8)->overall_qwk < 1.0);
  CHECK(report.macro_qwk == doctest::Approx((1.0 + report.prompt(8)->overall_qwk) / 2.0));
  CHECK(report.mean_trait_qwk == 1.0);
  CHECK(report.pooled_qwk <= 1.0);
  CHECK(report.pooled_qwk >= -1.0);
  CHECK(report.prompt(5) == nullptr);
  CHECK_THROWS_AS(evaluate_predictions({}, table), Error);
}

TEST_CASE("single essay scored exactly gives one everywhere") {
  const auto table = builtin_prompt_table();
  const auto model = testing::tiny_model(table);
  EssayRecord r;
  r.essay_id = "x";
  r.prompt_id = 1;
  r.text = "The library should keep every book.";
  const auto rep = score_essay(r.text, table.at(1), model);
  r.overall_score = rep.overall_rubric;
  for (const auto& t : rep.traits) r.trait_scores[t.name] = t.rubric;
  const auto report = evaluate(model, {r}, table);
  CHECK(report.pooled_qwk == 1.0);
  CHECK(report.macro_qwk == 1.0);
  CHECK(report.mean_trait_qwk == 1.0);
  try {
    evaluate(model, {}, table);
    FAIL("expected EmptySet");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptySet);
  }
}

TEST_CASE("reference data carries the published numbers") {
  const auto ref = reference_table();
  CHECK(ref.size() == 8);
  CHECK(ref.at("Ours") == 0.803);
  CHECK(ref.at("MHMLW") == 0.732);
  CHECK(ref.at("Tran-BERT-MS-ML-R") == 0.793);
  const auto coll = reference_collection_table();
  REQUIRE(coll.size() == 4);
  CHECK(coll.back().collection_qwk.at(8) == 0.804);
  CHECK(coll.back().average == 0.736);
  CHECK(coll[0].described_as == "Hierarchical LSTM-CNN-Attention");
  CHECK(coll[0].table_name == "LC-A");
}

TEST_CASE("report table has the per-collection column layout") {
  const auto table = builtin_prompt_table();
  std::vector<ScoredEssay> essays;
  for (int id : {2, 3, 8}) {
    const auto& p = table.at(id);
    for (int k = 0; k < 3; ++k) {
      ScoredEssay e;
      e.prompt_id = id;
      e.gold_overall = p.overall_range.min + k;
      e.pred_overall = p.overall_range.min + (k + 1) % 3;
      for (std::size_t t = 0; t < p.trait_names.size(); ++t) {
        e.gold_traits[p.trait_names[t]] = p.trait_ranges[t].min + k;
        e.pred_traits[p.trait_names[t]] = p.trait_ranges[t].min + k;
      }
      essays.push_back(e);
    }
  }
  auto report = evaluate_predictions(essays, table);
  report.checkpoint_sha256 = "abc";
  const auto text = render_report_table(report);
  const auto lines = split(text, '\n');
  CHECK(lines[0] == "# checkpoint_sha256=abc");
  CHECK(lines[1] == "Model\tCollection 2\tCollection 3\tCollection 8\tAverage");
  CHECK(lines[5] == "ref:Ours Ours\t0.701\t0.703\t0.804\t0.736");
  CHECK(lines[6].starts_with("Ours\t"));
  CHECK(split(lines[6], '\t').size() == 5);

  const auto j = nlohmann::json::parse(render_report_json(report));
  CHECK(j["checkpoint_sha256"] == "abc");
  CHECK(j["prompts"].size() == 3);
  CHECK(j["reference_baselines"]["Ours"] == 0.803);
}

#include "doctest.h"
#include "support.hpp"

using namespace aes;

namespace {

void check_all_tensors(testing::TinyOptions opts, double trait_weight = 1.0) {
  const auto table = builtin_prompt_table();
  auto model = testing::tiny_model(table, opts);
  const auto examples = testing::gradcheck_examples(model, table);
  const auto result = testing::gradient_check(model, examples, trait_weight);
  CHECK(result.checked > 0);
  for (const auto& [name, err] : result.relative_error) {
    INFO(name);
    CHECK(err < 1e-4);
  }
  // softmax ignores a per-row shift, so the key bias never receives gradient
  for (const auto& [name, norm] : result.analytic_norm) {
    if (name.ends_with(".bk")) CHECK(norm < 1e-12);
  }
  MESSAGE("max relative error " << result.max_error() << " at " << result.worst());
}

}  // namespace

TEST_CASE("analytic gradients match central differences on the tiny config") {
  check_all_tensors({});
}

TEST_CASE("gradients hold with two layers, two heads and mean pooling") {
  testing::TinyOptions o;
  o.n_layers = 2;
  o.n_heads = 2;
  o.pooling = Pooling::mean;
  o.seed = 3;
  check_all_tensors(o, 0.5);
}

TEST_CASE("gradients hold with per-prompt heads") {
  testing::TinyOptions o;
  o.keying = HeadKeying::prompt;
  o.seed = 4;
  check_all_tensors(o, 2.0);
}

TEST_CASE("frozen-encoder gradients touch only the heads") {
  const auto table = builtin_prompt_table();
  auto model = testing::tiny_model(table);
  const auto examples = testing::gradcheck_examples(model, table);
  auto grads = ModelWeights::zeros_like(model.weights);
  for (const auto& ex : examples) example_loss(model, ex, 1.0, &grads, nullptr, false);
  grads.encoder.for_each([](const std::string& name, const Mat& m) {
    INFO(name);
    CHECK(m.isZero(0.0));
  });
  double head_norm = 0.0;
  grads.heads.for_each([&](const std::string&, const Mat& m) { head_norm += m.norm(); });
  CHECK(head_norm > 0.0);
}

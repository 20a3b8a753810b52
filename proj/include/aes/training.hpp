#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aes/corpus.hpp"
#include "aes/model.hpp"

namespace aes {

// Adam with the usual defaults (beta1 0.9, beta2 0.999, eps 1e-8).
struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 16;
  int max_epochs = 30;
  int early_stop_patience = 5;  // epochs without dev-QWK improvement
  double trait_loss_weight = 1.0;
  std::uint64_t seed = 0;
  bool freeze_encoder = false;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_qwk = 0.0;

  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

struct TrainingHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;  // 0 = the initial weights were never beaten
  double best_dev_qwk = 0.0;
  bool early_stopped = false;

  // Tab-separated "epoch, train_loss, dev_qwk" rows under a header.
  std::string to_tsv() const;
  friend bool operator==(const TrainingHistory&, const TrainingHistory&) = default;
};

// Squared error on the overall score plus weight * mean squared trait error.
double score_loss(double overall_pred, double overall_gold, const std::vector<double>& trait_pred,
                  const std::vector<double>& trait_gold, double trait_weight);

// A tokenized record with normalized gold scores.
struct Example {
  TokenSequence seq;
  const PromptSpec* prompt = nullptr;
  double overall = 0.0;
  std::vector<double> traits;  // prompt trait order
};

std::vector<Example> make_examples(const std::vector<EssayRecord>& records,
                                   const PromptTable& table, const ModelState& model);

// Loss of one example through embed -> encoder -> pool -> heads. When
// `grads` is non-null the analytic gradient is added into it.
double example_loss(const ModelState& model, const Example& ex, double trait_weight,
                    ModelWeights* grads = nullptr, Rng* dropout = nullptr,
                    bool encoder_grads = true);

// Trains in place and leaves the best-dev-QWK weights in `model`. Throws
// DivergedLoss on a non-finite batch loss after restoring the last good
// weights.
TrainingHistory train(ModelState& model, const std::vector<EssayRecord>& train_set,
                      const std::vector<EssayRecord>& dev_set, const PromptTable& table,
                      const TrainConfig& cfg);

TrainingHistory train(ModelState& model, const DatasetSplit& split,
                      const std::vector<EssayRecord>& records, const PromptTable& table,
                      const TrainConfig& cfg);

}  // namespace aes

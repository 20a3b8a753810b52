#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aes/corpus.hpp"

namespace aes {

struct ModelState;

struct RatingPair {
  std::vector<int> human;
  std::vector<int> machine;
  ScoreRange range;
};

// Cohen's quadratic weighted kappa over the full declared range:
//   kappa = 1 - sum(w * O) / sum(w * E),  w_ij = (i - j)^2 / (N - 1)^2,
// with E the outer product of the two marginal histograms scaled to sum(O).
// When sum(w * E) == 0 (both raters constant on the same category) the
// result is 1.0.
double qwk(const RatingPair& pair);

double random_baseline_qwk(std::size_t n, ScoreRange range, std::uint64_t human_seed,
                           std::uint64_t machine_seed);
double random_baseline_qwk(std::size_t n, ScoreRange range, std::uint64_t seed);

struct PromptEval {
  int prompt_id = 0;
  std::size_t essays = 0;
  double overall_qwk = 0.0;
  std::vector<std::pair<std::string, double>> trait_qwk;  // prompt trait order
};

struct EvalReport {
  std::vector<PromptEval> prompts;  // ascending prompt id
  // Overall scores of every essay rescaled onto one common integer grid.
  double pooled_qwk = 0.0;
  // Mean of per-prompt overall QWK.
  double macro_qwk = 0.0;
  // Mean over every (prompt, trait) QWK.
  double mean_trait_qwk = 0.0;
  std::string checkpoint_sha256;

  const PromptEval* prompt(int prompt_id) const;
};

struct ScoredEssay {
  int prompt_id = 0;
  int gold_overall = 0;
  int pred_overall = 0;
  std::map<std::string, int> gold_traits;
  std::map<std::string, int> pred_traits;
};

EvalReport evaluate_predictions(const std::vector<ScoredEssay>& essays, const PromptTable& table);
EvalReport evaluate(const ModelState& model, const std::vector<EssayRecord>& records,
                    const PromptTable& table);

// Reported QWK of the published comparison models, stored as reference data.
std::map<std::string, double> reference_table();

struct CollectionReference {
  std::string label;        // row label in the per-collection comparison
  std::string table_name;   // name in the overall comparison
  std::string described_as; // name used in the accompanying discussion
  std::map<int, double> collection_qwk;
  double average = 0.0;
};

std::vector<CollectionReference> reference_collection_table();

// Table with one row per model and columns "Collection <id>" for each
// evaluated prompt plus "Average"; followed by a per-trait section.
std::string render_report_table(const EvalReport& report, const std::string& model_name = "Ours");
std::string render_report_json(const EvalReport& report);

}  // namespace aes

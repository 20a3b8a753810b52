#include "aes/evaluation.hpp"

#include <iomanip>
#include <numeric>
#include <sstream>

#include "aes/error.hpp"
#include "aes/model.hpp"
#include "aes/util.hpp"
#include "json.hpp"

namespace aes {

double qwk(const RatingPair& pair) {
  const auto& [human, machine, range] = pair;
  if (range.categories() < 2) {
    throw Error(ErrorCode::InvalidArgument, "qwk needs a range of at least two categories");
  }
  if (human.empty() || human.size() != machine.size()) {
    throw Error(ErrorCode::InvalidArgument, "qwk needs two non-empty rating lists of equal length");
  }
  const auto n_cat = static_cast<std::size_t>(range.categories());
  std::vector<std::int64_t> hist_h(n_cat, 0), hist_m(n_cat, 0);
  // Sum of squared differences equals sum_ij (i-j)^2 O_ij.
  std::int64_t observed = 0;
  for (std::size_t k = 0; k < human.size(); ++k) {
    if (!range.contains(human[k]) || !range.contains(machine[k])) {
      throw Error(ErrorCode::ValueOutOfRange, "rating outside the declared range");
    }
    const std::int64_t d = human[k] - machine[k];
    observed += d * d;
    ++hist_h[static_cast<std::size_t>(human[k] - range.min)];
    ++hist_m[static_cast<std::size_t>(machine[k] - range.min)];
  }
  // n * sum_ij w_ij E_ij in integers; the (N-1)^2 normalization cancels.
  std::int64_t expected = 0;
  for (std::size_t i = 0; i < n_cat; ++i) {
    if (hist_h[i] == 0) continue;
    for (std::size_t j = 0; j < n_cat; ++j) {
      const auto d = static_cast<std::int64_t>(i) - static_cast<std::int64_t>(j);
      expected += d * d * hist_h[i] * hist_m[j];
    }
  }
  if (expected == 0) return 1.0;
  const auto n = static_cast<std::int64_t>(human.size());
  return 1.0 - static_cast<double>(n * observed) / static_cast<double>(expected);
}

double random_baseline_qwk(std::size_t n, ScoreRange range, std::uint64_t human_seed,
                           std::uint64_t machine_seed) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "random baseline needs n >= 1");
  RatingPair pair;
  pair.range = range;
  Rng h(human_seed), m(machine_seed);
  for (std::size_t i = 0; i < n; ++i) {
    pair.human.push_back(h.between(range.min, range.max));
    pair.machine.push_back(m.between(range.min, range.max));
  }
  return qwk(pair);
}

double random_baseline_qwk(std::size_t n, ScoreRange range, std::uint64_t seed) {
  return random_baseline_qwk(n, range, seed, derive_seed(seed, 1));
}

const PromptEval* EvalReport::prompt(int prompt_id) const {
  for (const auto& p : prompts) {
    if (p.prompt_id == prompt_id) return &p;
  }
  return nullptr;
}

EvalReport evaluate_predictions(const std::vector<ScoredEssay>& essays, const PromptTable& table) {
  if (essays.empty()) throw Error(ErrorCode::EmptySet, "evaluate: no essays");
  std::map<int, std::vector<const ScoredEssay*>> by_prompt;
  for (const auto& e : essays) by_prompt[e.prompt_id].push_back(&e);

  EvalReport report;
  int grid = 2;
  for (const auto& [id, list] : by_prompt) grid = std::max(grid, table.at(id).overall_range.categories());
  RatingPair pooled{{}, {}, {0, grid - 1}};
  double trait_sum = 0.0;
  std::size_t trait_n = 0;

  for (const auto& [id, list] : by_prompt) {
    const auto& spec = table.at(id);
    PromptEval pe;
    pe.prompt_id = id;
    pe.essays = list.size();
    RatingPair overall{{}, {}, spec.overall_range};
    for (const auto* e : list) {
      overall.human.push_back(e->gold_overall);
      overall.machine.push_back(e->pred_overall);
      pooled.human.push_back(denormalize_score(normalize_score(e->gold_overall, spec.overall_range), pooled.range));
      pooled.machine.push_back(denormalize_score(normalize_score(e->pred_overall, spec.overall_range), pooled.range));
    }
    pe.overall_qwk = qwk(overall);
    for (std::size_t t = 0; t < spec.trait_names.size(); ++t) {
      const auto& name = spec.trait_names[t];
      RatingPair tp{{}, {}, spec.trait_ranges[t]};
      for (const auto* e : list) {
        tp.human.push_back(e->gold_traits.at(name));
        tp.machine.push_back(e->pred_traits.at(name));
      }
      const double k = qwk(tp);
      pe.trait_qwk.emplace_back(name, k);
      trait_sum += k;
      ++trait_n;
    }
    report.prompts.push_back(std::move(pe));
  }
  report.pooled_qwk = qwk(pooled);
  double macro = 0.0;
  for (const auto& p : report.prompts) macro += p.overall_qwk;
  report.macro_qwk = macro / static_cast<double>(report.prompts.size());
  report.mean_trait_qwk = trait_n ? trait_sum / static_cast<double>(trait_n) : 0.0;
  return report;
}

EvalReport evaluate(const ModelState& model, const std::vector<EssayRecord>& records,
                    const PromptTable& table) {
  if (records.empty()) throw Error(ErrorCode::EmptySet, "evaluate: no essays");
  std::vector<ScoredEssay> scored;
  scored.reserve(records.size());
  for (const auto& r : records) {
    const auto& spec = table.at(r.prompt_id);
    const auto report = score_essay(r.text, spec, model, r.essay_id);
    ScoredEssay s;
    s.prompt_id = r.prompt_id;
    s.gold_overall = r.overall_score;
    s.pred_overall = report.overall_rubric;
    s.gold_traits = r.trait_scores;
    for (const auto& t : report.traits) s.pred_traits.emplace(t.name, t.rubric);
    scored.push_back(std::move(s));
  }
  return evaluate_predictions(scored, table);
}

std::map<std::string, double> reference_table() {
  return {
      {"MHMLW", 0.732},
      {"NFA", 0.741},
      {"LC-A", 0.752},
      {"SKIP-LSTM", 0.753},
      {"CCXLNET", 0.761},
      {"BERT-DOC-TOK-SEG", 0.762},
      {"Tran-BERT-MS-ML-R", 0.793},
      {"Ours", 0.803},
  };
}

std::vector<CollectionReference> reference_collection_table() {
  // Rows are labelled by their position in the overall comparison; the
  // discussion names them differently, so both labels are kept.
  return {
      {"3", "LC-A", "Hierarchical LSTM-CNN-Attention", {{2, 0.683}, {3, 0.692}, {8, 0.732}}, 0.702},
      {"4", "SKIP-LSTM", "SKIPFLOW LSTM", {{2, 0.687}, {3, 0.695}, {8, 0.754}}, 0.712},
      {"6", "BERT-DOC-TOK-SEG", "BERT-DOC-TOK-SEG", {{2, 0.691}, {3, 0.699}, {8, 0.776}}, 0.722},
      {"Ours", "Ours", "Ours", {{2, 0.701}, {3, 0.703}, {8, 0.804}}, 0.736},
  };
}

namespace {

std::string fmt3(double v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(3) << v;
  return out.str();
}

}  // namespace

std::string render_report_table(const EvalReport& report, const std::string& model_name) {
  std::ostringstream out;
  out << "# checkpoint_sha256=" << report.checkpoint_sha256 << '\n';
  out << "Model";
  for (const auto& p : report.prompts) out << "\tCollection " << p.prompt_id;
  out << "\tAverage\n";

  for (const auto& ref : reference_collection_table()) {
    bool covers_all = ref.collection_qwk.size() == report.prompts.size();
    out << "ref:" << ref.label << " " << ref.described_as;
    for (const auto& p : report.prompts) {
      const auto it = ref.collection_qwk.find(p.prompt_id);
      if (it == ref.collection_qwk.end()) {
        covers_all = false;
        out << "\t-";
      } else {
        out << '\t' << fmt3(it->second);
      }
    }
    out << '\t' << (covers_all ? fmt3(ref.average) : "-") << '\n';
  }
  out << model_name;
  for (const auto& p : report.prompts) out << '\t' << fmt3(p.overall_qwk);
  out << '\t' << fmt3(report.macro_qwk) << '\n';

  out << '\n' << "Prompt\tTrait\tQWK\n";
  for (const auto& p : report.prompts) {
    for (const auto& [name, k] : p.trait_qwk) out << p.prompt_id << '\t' << name << '\t' << fmt3(k) << '\n';
  }
  out << '\n'
      << "pooled_overall_qwk\t" << fmt3(report.pooled_qwk) << '\n'
      << "macro_overall_qwk\t" << fmt3(report.macro_qwk) << '\n'
      << "mean_trait_qwk\t" << fmt3(report.mean_trait_qwk) << '\n';
  return out.str();
}

std::string render_report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["checkpoint_sha256"] = report.checkpoint_sha256;
  j["pooled_qwk"] = report.pooled_qwk;
  j["macro_qwk"] = report.macro_qwk;
  j["mean_trait_qwk"] = report.mean_trait_qwk;
  auto& prompts = j["prompts"] = nlohmann::ordered_json::array();
  for (const auto& p : report.prompts) {
    nlohmann::ordered_json traits = nlohmann::ordered_json::object();
    for (const auto& [name, k] : p.trait_qwk) traits[name] = k;
    prompts.push_back({{"prompt_id", p.prompt_id},
                       {"essays", p.essays},
                       {"overall_qwk", p.overall_qwk},
                       {"trait_qwk", traits}});
  }
  nlohmann::ordered_json refs = nlohmann::ordered_json::object();
  for (const auto& [name, k] : reference_table()) refs[name] = k;
  j["reference_baselines"] = refs;
  auto& coll = j["reference_collections"] = nlohmann::ordered_json::array();
  for (const auto& r : reference_collection_table()) {
    nlohmann::ordered_json c = nlohmann::ordered_json::object();
    for (const auto& [id, k] : r.collection_qwk) c["Collection " + std::to_string(id)] = k;
    coll.push_back({{"label", r.label},
                    {"model", r.table_name},
                    {"described_as", r.described_as},
                    {"collections", c},
                    {"average", r.average}});
  }
  return j.dump(2);
}

}  // namespace aes

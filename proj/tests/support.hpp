#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "aes/corpus.hpp"
#include "aes/model.hpp"
#include "aes/synthetic.hpp"
#include "aes/tokenizer.hpp"
#include "aes/training.hpp"
#include "aes/util.hpp"

namespace aes::testing {

inline std::vector<std::string> sample_texts() {
  return {
      "The library should keep every book. Censorship harms readers! Do you agree?",
      "Patience is hard. I waited for the bus in the rain and it never came.",
      "The cyclist faced hills, heat and thirst. The setting made the ride harder.",
      "Winter hibernation ends the story. The flower will bloom again in spring.",
      "Laughter is the shortest distance between two people. We laughed all night.",
      "Readers, writers and librarians disagree about offensive books on shelves.",
  };
}

inline Vocabulary sample_vocab(int max_words = 4000) {
  return build_vocabulary(sample_texts(), max_words);
}

struct TinyOptions {
  int max_content = 8;
  int n_layers = 1;
  int n_heads = 1;
  std::uint64_t seed = 1;
  Pooling pooling = Pooling::cls;
  HeadKeying keying = HeadKeying::genre;
};

inline ModelState tiny_model(const PromptTable& table, TinyOptions o = {}) {
  auto vocab = sample_vocab();
  auto cfg = ModelConfig::tiny(vocab.size(), o.max_content);
  cfg.encoder.n_layers = o.n_layers;
  cfg.encoder.n_heads = o.n_heads;
  cfg.encoder.seed = o.seed;
  cfg.encoder.pooling = o.pooling;
  cfg.head_keying = o.keying;
  return init_model(cfg, std::move(vocab), table);
}

// One record per built-in prompt with mid-range gold scores.
inline std::vector<EssayRecord> sample_records(const PromptTable& table) {
  std::vector<EssayRecord> out;
  const auto texts = sample_texts();
  std::size_t k = 0;
  for (const auto& p : table.prompts()) {
    EssayRecord r;
    r.essay_id = "s" + std::to_string(p.prompt_id);
    r.prompt_id = p.prompt_id;
    r.text = texts[k++ % texts.size()];
    r.overall_score = (p.overall_range.min + p.overall_range.max) / 2;
    for (std::size_t t = 0; t < p.trait_names.size(); ++t) {
      const auto& range = p.trait_ranges[t];
      r.trait_scores[p.trait_names[t]] = range.min + static_cast<int>((t + 1) % range.categories());
    }
    out.push_back(std::move(r));
  }
  return out;
}

struct TempDir {
  std::filesystem::path path;

  TempDir() {
    static int counter = 0;
    std::random_device rd;
    path = std::filesystem::temp_directory_path() /
           ("aes-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

// Central-difference check of example_loss summed over `examples`.
// Per tensor: ||analytic - numeric||_2 / max(||analytic||_2, ||numeric||_2),
// with the denominator floored at kGradNormFloor.
inline constexpr double kGradNormFloor = 1e-6;

struct GradCheck {
  std::map<std::string, double> relative_error;
  std::map<std::string, double> analytic_norm;
  std::size_t checked = 0;

  double max_error() const {
    double m = 0.0;
    for (const auto& [name, e] : relative_error) m = std::max(m, e);
    return m;
  }
  std::string worst() const {
    std::string w;
    double m = -1.0;
    for (const auto& [name, e] : relative_error) {
      if (e > m) {
        m = e;
        w = name;
      }
    }
    return w;
  }
};

inline GradCheck gradient_check(ModelState& model, const std::vector<Example>& examples,
                                double trait_weight, double h = 1e-4) {
  auto total = [&](ModelWeights* grads) {
    double s = 0.0;
    for (const auto& ex : examples) s += example_loss(model, ex, trait_weight, grads);
    return s;
  };
  ModelWeights grads = ModelWeights::zeros_like(model.weights);
  total(&grads);

  std::vector<std::pair<std::string, Mat*>> params;
  model.weights.for_each([&](const std::string& name, Mat& m) { params.emplace_back(name, &m); });
  std::vector<const Mat*> analytic;
  grads.for_each([&](const std::string&, Mat& m) { analytic.push_back(&m); });

  GradCheck out;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Mat& w = *params[k].second;
    Mat numeric = Mat::Zero(w.rows(), w.cols());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      double& x = w.data()[i];
      const double saved = x;
      x = saved + h;
      const double up = total(nullptr);
      x = saved - h;
      const double down = total(nullptr);
      x = saved;
      numeric.data()[i] = (up - down) / (2.0 * h);
      ++out.checked;
    }
    const double na = analytic[k]->norm();
    const double nn = numeric.norm();
    // Some tensors (the attention key bias) have an exactly zero true gradient,
    // and both estimates are rounding noise; the floor compares those absolutely.
    const double denom = std::max({na, nn, kGradNormFloor});
    out.relative_error[params[k].first] = (*analytic[k] - numeric).norm() / denom;
    out.analytic_norm[params[k].first] = na;
  }
  return out;
}

// Texts spanning the three branches of sequence assembly for L = 8.
inline std::vector<std::string> gradcheck_texts() {
  return {
      "Readers disagree.",                                                    // n < L
      "Readers keep books. Censorship harms.",                                // n == L
      "The cyclist faced hills, heat and thirst. Winter ends the long story.",  // n > L
  };
}

inline std::vector<Example> gradcheck_examples(const ModelState& model, const PromptTable& table) {
  std::vector<EssayRecord> records;
  const auto texts = gradcheck_texts();
  const int prompts[] = {1, 3, 8};
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto& spec = table.at(prompts[i]);
    EssayRecord r;
    r.essay_id = "g" + std::to_string(i);
    r.prompt_id = spec.prompt_id;
    r.text = texts[i];
    r.overall_score = spec.overall_range.min + static_cast<int>(i + 1);
    for (std::size_t t = 0; t < spec.trait_names.size(); ++t) {
      r.trait_scores[spec.trait_names[t]] = spec.trait_ranges[t].max - static_cast<int>(t % 2);
    }
    records.push_back(std::move(r));
  }
  return make_examples(records, table, model);
}

}  // namespace aes::testing

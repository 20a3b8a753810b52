#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "aes/corpus.hpp"
#include "aes/encoder.hpp"
#include "aes/tokenizer.hpp"

namespace aes {

enum class HeadKeying { genre, prompt };

struct ModelConfig {
  EncoderConfig encoder;
  int max_content_length = 128;  // L: content tokens; sequences are L + 2 long
  HeadKeying head_keying = HeadKeying::genre;

  // Tiny desk-scale preset used by the gradient checks and the synthetic
  // learning test.
  static ModelConfig tiny(int vocab_size, int max_content_length);
  void validate() const;
};

// One fully connected output unit: logistic(weight . pooled + bias).
struct Head {
  Mat weight;  // 1 x d_model
  Mat bias;    // 1 x 1
};

struct HeadSet {
  Head overall;
  std::map<std::string, Head> traits;
};

// Heads keyed by genre name (default) or "prompt-<id>".
struct HeadBank {
  std::map<std::string, HeadSet> sets;

  static std::string key_for(const PromptSpec& prompt, HeadKeying keying);
  static HeadBank init(const PromptTable& table, HeadKeying keying, int d_model, std::uint64_t seed);

  template <typename F>
  void for_each(F&& f) { visit(*this, f); }
  template <typename F>
  void for_each(F&& f) const { visit(*this, f); }

 private:
  template <typename Self, typename F>
  static void visit(Self& self, F& f) {
    for (auto& [key, set] : self.sets) {
      const auto p = "heads." + key + ".";
      f(p + "overall.weight", set.overall.weight);
      f(p + "overall.bias", set.overall.bias);
      for (auto& [trait, head] : set.traits) {
        f(p + "trait." + trait + ".weight", head.weight);
        f(p + "trait." + trait + ".bias", head.bias);
      }
    }
  }
};

// Trainable tensors of a model; also used as the gradient container.
struct ModelWeights {
  EncoderWeights encoder;
  HeadBank heads;

  template <typename F>
  void for_each(F&& f) {
    encoder.for_each(f);
    heads.for_each(f);
  }
  template <typename F>
  void for_each(F&& f) const {
    encoder.for_each(f);
    heads.for_each(f);
  }

  static ModelWeights zeros_like(const ModelWeights& w);
};

struct ModelState {
  ModelConfig config;
  Vocabulary vocab;
  ModelWeights weights;
  std::string prompt_table_hash;
  bool trained = false;
};

ModelState init_model(const ModelConfig& config, Vocabulary vocab, const PromptTable& table);

struct TraitScore {
  std::string name;
  double normalized = 0.0;
  int rubric = 0;
};

struct ScoreReport {
  std::string essay_id;
  int prompt_id = 0;
  double overall_normalized = 0.0;
  int overall_rubric = 0;
  std::vector<TraitScore> traits;  // in the prompt's trait order

  const TraitScore* trait(std::string_view name) const;
};

// Logistic outputs for one assembled sequence, traits in prompt order.
struct Prediction {
  double overall = 0.0;
  std::vector<double> traits;
};

Prediction predict(const TokenSequence& seq, const PromptSpec& prompt, const ModelState& model);

ScoreReport score_essay(std::string_view text, const PromptSpec& prompt, const ModelState& model,
                        std::string essay_id = {});

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Binary checkpoint: magic, format version, JSON header (config, vocabulary,
// prompt-table hash, tensor shapes), little-endian float64 payload, and a
// trailing SHA-256 of everything before it.
inline constexpr int kCheckpointVersion = 1;

std::string serialize_model(const ModelState& model);
ModelState deserialize_model(std::string_view bytes, const PromptTable& table);
void save_model(const ModelState& model, const std::string& path);
ModelState load_model(const std::string& path, const PromptTable& table);

}  // namespace aes

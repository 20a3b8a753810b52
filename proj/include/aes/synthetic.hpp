#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aes/corpus.hpp"

namespace aes {

// Essays whose gold scores are a clipped affine function of how many times
// a planted keyword occurs. Every essay has the same number of words, so the
// keyword share is the only signal.
struct SyntheticSpec {
  std::vector<int> prompt_ids{2, 3, 8};  // one collection per genre
  int essays = 1000;
  int sentences = 6;
  int words_per_sentence = 8;
  int max_keywords = 8;
  std::string keyword = "excellent";
  std::uint64_t seed = 2024;
};

// Normalized quality for a keyword count, and the trait-specific shift.
double synthetic_quality(int keyword_count, const SyntheticSpec& spec);
double synthetic_trait_quality(double quality, std::size_t trait_index);

std::vector<EssayRecord> make_synthetic_corpus(const PromptTable& table, const SyntheticSpec& spec);

}  // namespace aes

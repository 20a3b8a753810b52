#include "aes/synthetic.hpp"

#include <algorithm>
#include <cctype>

#include "aes/error.hpp"
#include "aes/util.hpp"

namespace aes {

namespace {

const std::vector<std::string>& common_words() {
  static const std::vector<std::string> words{
      "the",   "a",     "and",    "of",    "to",    "in",     "that",  "it",    "was",
      "for",   "on",    "with",   "as",    "they",  "at",     "be",    "this",  "from",
      "have",  "or",    "by",     "one",   "had",   "but",    "what",  "all",   "were",
      "when",  "we",    "there",  "can",   "an",    "your",   "which", "their", "said",
      "if",    "do",    "will",   "each",  "about", "how",    "up",    "out",   "then",
      "them",  "many",  "some",   "so",    "these", "would",  "other", "into",  "has",
      "more",  "her",   "two",    "like",  "him",   "see",    "time",  "could", "no",
      "make",  "than",  "first",  "been",  "its",   "who",    "now",   "people", "my"};
  return words;
}

const std::vector<std::string>& genre_words(Genre g) {
  static const std::vector<std::string> argumentative{
      "computers", "believe", "argue",   "reason",  "evidence", "opinion",  "society",
      "benefit",   "effect",  "library", "censor",  "books",    "should",   "because",
      "therefore", "support", "claim",   "counter", "however",  "important"};
  static const std::vector<std::string> answers{
      "author",   "setting", "cyclist",  "road",    "story",   "mood",    "paragraph",
      "details",  "shows",   "explains", "memoir",  "home",    "builders", "dirigibles",
      "obstacle", "feature", "conclude", "describe", "text",   "example"};
  static const std::vector<std::string> narrative{
      "patience", "laughter", "remember", "friend",  "summer", "waited",  "smiled",
      "funny",    "moment",   "family",   "together", "night", "walked",  "happened",
      "felt",     "story",    "time",     "laughed", "school", "morning"};
  switch (g) {
    case Genre::argumentative: return argumentative;
    case Genre::question_answering: return answers;
    case Genre::narrative: return narrative;
  }
  return argumentative;
}

}  // namespace

double synthetic_quality(int keyword_count, const SyntheticSpec& spec) {
  return static_cast<double>(keyword_count) / static_cast<double>(spec.max_keywords);
}

double synthetic_trait_quality(double quality, std::size_t trait_index) {
  const double shift = 0.1 * (static_cast<double>(trait_index % 3) - 1.0);
  return std::clamp(quality + shift, 0.0, 1.0);
}

std::vector<EssayRecord> make_synthetic_corpus(const PromptTable& table, const SyntheticSpec& spec) {
  if (spec.prompt_ids.empty() || spec.essays < 1 || spec.sentences < 1 ||
      spec.words_per_sentence < 1 || spec.max_keywords < 1 ||
      spec.max_keywords > spec.sentences * spec.words_per_sentence) {
    throw Error(ErrorCode::InvalidArgument, "invalid synthetic corpus spec");
  }
  Rng rng(spec.seed);
  const int slots = spec.sentences * spec.words_per_sentence;
  std::vector<EssayRecord> out;
  out.reserve(static_cast<std::size_t>(spec.essays));
  for (int i = 0; i < spec.essays; ++i) {
    const auto& prompt = table.at(spec.prompt_ids[static_cast<std::size_t>(i) % spec.prompt_ids.size()]);
    const auto& topical = genre_words(prompt.genre);
    const auto& common = common_words();

    const int k = rng.between(0, spec.max_keywords);
    std::vector<int> slot_order(static_cast<std::size_t>(slots));
    for (int s = 0; s < slots; ++s) slot_order[static_cast<std::size_t>(s)] = s;
    rng.shuffle(slot_order);
    std::vector<bool> is_keyword(static_cast<std::size_t>(slots), false);
    for (int s = 0; s < k; ++s) is_keyword[static_cast<std::size_t>(slot_order[static_cast<std::size_t>(s)])] = true;

    std::string text;
    for (int s = 0; s < slots; ++s) {
      std::string word;
      if (is_keyword[static_cast<std::size_t>(s)]) {
        word = spec.keyword;
      } else if (rng.uniform() < 0.4) {
        word = topical[rng.below(topical.size())];
      } else {
        word = common[rng.below(common.size())];
      }
      const bool sentence_start = s % spec.words_per_sentence == 0;
      if (sentence_start && !text.empty()) text.push_back(' ');
      if (!sentence_start) text.push_back(' ');
      if (sentence_start) word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
      text += word;
      if ((s + 1) % spec.words_per_sentence == 0) text.push_back('.');
    }

    EssayRecord rec;
    rec.essay_id = "syn-" + std::to_string(i + 1);
    rec.prompt_id = prompt.prompt_id;
    rec.text = std::move(text);
    const double q = synthetic_quality(k, spec);
    rec.overall_score = denormalize_score(q, prompt.overall_range);
    for (std::size_t t = 0; t < prompt.trait_names.size(); ++t) {
      rec.trait_scores[prompt.trait_names[t]] =
          denormalize_score(synthetic_trait_quality(q, t), prompt.trait_ranges[t]);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace aes

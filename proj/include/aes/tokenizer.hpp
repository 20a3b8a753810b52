#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace aes {

inline constexpr int kClsId = 0;
inline constexpr int kSepId = 1;
inline constexpr int kPadId = 2;
inline constexpr int kUnkId = 3;
inline constexpr std::string_view kContinuationPrefix = "##";

// Word-piece vocabulary: the specials at ids 0..3, then whole words in
// frequency order, then derived continuation pieces ("##suffix").
class Vocabulary {
 public:
  static constexpr int kDefaultMaxWords = 4000;

  Vocabulary();
  Vocabulary(std::vector<std::string> pieces, int max_words, std::string corpus_hash);

  int size() const { return static_cast<int>(pieces_.size()); }
  int max_words() const { return max_words_; }
  const std::string& corpus_hash() const { return corpus_hash_; }
  const std::vector<std::string>& pieces() const { return pieces_; }
  const std::string& piece(int id) const { return pieces_.at(static_cast<std::size_t>(id)); }

  // -1 when absent.
  int id(std::string_view piece) const;
  bool contains(std::string_view piece) const { return id(piece) >= 0; }
  int word_count() const;

  // One piece per line after a single "#" header line; id = line index
  // after the header.
  std::string serialize() const;
  static Vocabulary parse(std::string_view text);
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.pieces_ == b.pieces_ && a.max_words_ == b.max_words_ &&
           a.corpus_hash_ == b.corpus_hash_;
  }

 private:
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, int> ids_;
  int max_words_ = kDefaultMaxWords;
  std::string corpus_hash_;
};

// Lowercased words and single punctuation marks, in text order.
std::vector<std::string> pre_tokenize(std::string_view text);

Vocabulary build_vocabulary(const std::vector<std::string>& texts,
                            int max_words = Vocabulary::kDefaultMaxWords, int min_frequency = 1);

// Greedy longest-match-first word-piece split of every word.
std::vector<std::string> tokenize(std::string_view text, const Vocabulary& vocab);
std::vector<std::string> wordpiece(std::string_view word, const Vocabulary& vocab);
std::vector<int> to_ids(const std::vector<std::string>& pieces, const Vocabulary& vocab);

std::vector<std::string> split_sentences(std::string_view text);

struct TokenSequence {
  std::vector<int> token_ids;
  std::vector<int> segment_ids;
  std::vector<int> position_ids;
  std::vector<bool> pad_mask;  // true = real token
  int source_length = 0;       // content tokens before truncation / padding

  int length() const { return static_cast<int>(token_ids.size()); }
};

// [CLS] + content + [SEP], where content is the sentences joined by [SEP],
// truncated to its first `max_content` tokens or padded with [PAD] up to
// that length. Output length is always max_content + 2.
TokenSequence assemble_sequence(const std::vector<std::vector<int>>& sentences, int max_content);

// split_sentences -> tokenize -> assemble_sequence.
TokenSequence encode_text(std::string_view text, const Vocabulary& vocab, int max_content);

}  // namespace aes

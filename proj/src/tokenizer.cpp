#include "aes/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>
#include <unordered_set>

#include "aes/error.hpp"
#include "aes/util.hpp"

namespace aes {

namespace {

const std::vector<std::string>& special_pieces() {
  static const std::vector<std::string> specials{"[CLS]", "[SEP]", "[PAD]", "[UNK]"};
  return specials;
}

constexpr std::size_t kMaxWordBytes = 100;

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(special_pieces(), kDefaultMaxWords, "") {}

Vocabulary::Vocabulary(std::vector<std::string> pieces, int max_words, std::string corpus_hash)
    : pieces_(std::move(pieces)), max_words_(max_words), corpus_hash_(std::move(corpus_hash)) {
  const auto& specials = special_pieces();
  if (pieces_.size() < specials.size() ||
      !std::equal(specials.begin(), specials.end(), pieces_.begin())) {
    throw Error(ErrorCode::InvalidConfig, "vocabulary must start with [CLS] [SEP] [PAD] [UNK]");
  }
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    if (pieces_[i].empty()) throw Error(ErrorCode::InvalidConfig, "empty vocabulary piece");
    if (!ids_.emplace(pieces_[i], static_cast<int>(i)).second) {
      throw Error(ErrorCode::InvalidConfig, "duplicate vocabulary piece '" + pieces_[i] + "'");
    }
  }
  if (word_count() > max_words_) {
    throw Error(ErrorCode::InvalidConfig, "vocabulary holds more than max_words whole words");
  }
}

int Vocabulary::id(std::string_view piece) const {
  const auto it = ids_.find(std::string(piece));
  return it == ids_.end() ? -1 : it->second;
}

int Vocabulary::word_count() const {
  int n = 0;
  for (std::size_t i = special_pieces().size(); i < pieces_.size(); ++i) {
    if (!pieces_[i].starts_with(kContinuationPrefix)) ++n;
  }
  return n;
}

std::string Vocabulary::serialize() const {
  std::ostringstream out;
  out << "# aes-vocab max_words=" << max_words_ << " corpus_sha256=" << corpus_hash_ << '\n';
  for (const auto& p : pieces_) out << p << '\n';
  return out.str();
}

Vocabulary Vocabulary::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("# aes-vocab")) {
    throw Error(ErrorCode::InvalidConfig, "vocabulary file lacks its header line");
  }
  int max_words = kDefaultMaxWords;
  std::string hash;
  for (const auto& field : split(line, ' ')) {
    if (field.starts_with("max_words=")) max_words = std::stoi(field.substr(10));
    if (field.starts_with("corpus_sha256=")) hash = field.substr(14);
  }
  std::vector<std::string> pieces;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    pieces.push_back(line);
  }
  return Vocabulary(std::move(pieces), max_words, std::move(hash));
}

void Vocabulary::save(const std::string& path) const { write_file(path, serialize()); }

Vocabulary Vocabulary::load(const std::string& path) { return parse(read_file(path)); }

std::vector<std::string> pre_tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_word_byte(c)) {
      word.push_back(static_cast<char>(std::tolower(c)));
    } else if (std::isspace(c) || std::iscntrl(c)) {
      flush();
    } else {
      flush();
      out.emplace_back(1, ch);
    }
  }
  flush();
  return out;
}

Vocabulary build_vocabulary(const std::vector<std::string>& texts, int max_words,
                            int min_frequency) {
  if (texts.empty()) throw Error(ErrorCode::EmptyCorpus, "build_vocabulary: no texts");
  if (max_words < 1 || min_frequency < 1) {
    throw Error(ErrorCode::InvalidArgument, "max_words and min_frequency must be >= 1");
  }
  std::map<std::string, long> freq;
  std::string joined;
  for (const auto& t : texts) {
    for (auto& w : pre_tokenize(t)) ++freq[std::move(w)];
    joined += t;
    joined.push_back('\x1e');
  }
  if (freq.empty()) throw Error(ErrorCode::EmptyCorpus, "build_vocabulary: corpus has no words");

  using Entry = std::pair<std::string, long>;
  auto by_count = [](const Entry& a, const Entry& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  };

  std::vector<Entry> ranked;
  for (const auto& [w, n] : freq) {
    if (n >= min_frequency && w.size() <= kMaxWordBytes) ranked.emplace_back(w, n);
  }
  std::sort(ranked.begin(), ranked.end(), by_count);
  if (ranked.size() > static_cast<std::size_t>(max_words)) ranked.resize(static_cast<std::size_t>(max_words));

  std::vector<std::string> pieces = special_pieces();
  std::unordered_set<std::string> words;
  for (const auto& [w, n] : ranked) {
    pieces.push_back(w);
    words.insert(w);
  }

  // Continuation pieces: the remainder of each out-of-vocabulary word after
  // its longest in-vocabulary prefix, weighted by that word's frequency.
  std::map<std::string, long> suffixes;
  for (const auto& [w, n] : freq) {
    if (words.contains(w) || w.size() > kMaxWordBytes) continue;
    for (std::size_t len = w.size() - 1; len >= 1; --len) {
      if (words.contains(w.substr(0, len))) {
        suffixes[std::string(kContinuationPrefix) + w.substr(len)] += n;
        break;
      }
    }
  }
  std::vector<Entry> ranked_suffixes(suffixes.begin(), suffixes.end());
  std::sort(ranked_suffixes.begin(), ranked_suffixes.end(), by_count);
  const auto suffix_cap = static_cast<std::size_t>(max_words / 2);
  if (ranked_suffixes.size() > suffix_cap) ranked_suffixes.resize(suffix_cap);
  for (const auto& [s, n] : ranked_suffixes) pieces.push_back(s);

  return Vocabulary(std::move(pieces), max_words, sha256_hex(joined));
}

std::vector<std::string> wordpiece(std::string_view word, const Vocabulary& vocab) {
  if (word.empty()) return {};
  if (word.size() > kMaxWordBytes) return {special_pieces()[kUnkId]};
  std::vector<std::string> out;
  std::size_t start = 0;
  std::string candidate;
  while (start < word.size()) {
    bool matched = false;
    for (std::size_t end = word.size(); end > start; --end) {
      candidate.clear();
      if (start > 0) candidate += kContinuationPrefix;
      candidate += word.substr(start, end - start);
      if (vocab.contains(candidate)) {
        out.push_back(candidate);
        start = end;
        matched = true;
        break;
      }
    }
    if (!matched) return {special_pieces()[kUnkId]};
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (const auto& w : pre_tokenize(text)) {
    auto pieces = wordpiece(w, vocab);
    out.insert(out.end(), std::make_move_iterator(pieces.begin()),
               std::make_move_iterator(pieces.end()));
  }
  return out;
}

std::vector<int> to_ids(const std::vector<std::string>& pieces, const Vocabulary& vocab) {
  std::vector<int> ids;
  ids.reserve(pieces.size());
  for (const auto& p : pieces) {
    const int id = vocab.id(p);
    ids.push_back(id < 0 ? kUnkId : id);
  }
  return ids;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  auto emit = [&](std::size_t end) {
    auto s = trim(text.substr(start, end - start));
    if (!s.empty()) out.push_back(std::move(s));
    start = end;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    const bool at_end = i + 1 == text.size();
    if (at_end || std::isspace(static_cast<unsigned char>(text[i + 1]))) emit(i + 1);
  }
  emit(text.size());
  return out;
}

TokenSequence assemble_sequence(const std::vector<std::vector<int>>& sentences, int max_content) {
  if (max_content < 1) {
    throw Error(ErrorCode::InvalidLength, "max content length must be >= 1, got " +
                                              std::to_string(max_content));
  }
  std::vector<int> content;
  std::vector<int> content_segments;
  int sentence_index = 0;
  for (const auto& s : sentences) {
    if (s.empty()) continue;
    if (sentence_index > 0) {
      content.push_back(kSepId);
      content_segments.push_back((sentence_index - 1) % 2);
    }
    content.insert(content.end(), s.begin(), s.end());
    content_segments.insert(content_segments.end(), s.size(), sentence_index % 2);
    ++sentence_index;
  }

  const auto n = static_cast<int>(content.size());
  const int kept = std::min(n, max_content);
  TokenSequence seq;
  seq.source_length = n;
  const auto total = static_cast<std::size_t>(max_content) + 2;
  seq.token_ids.reserve(total);
  seq.segment_ids.reserve(total);

  seq.token_ids.push_back(kClsId);
  seq.segment_ids.push_back(0);
  seq.pad_mask.push_back(true);
  for (int i = 0; i < kept; ++i) {
    seq.token_ids.push_back(content[static_cast<std::size_t>(i)]);
    seq.segment_ids.push_back(content_segments[static_cast<std::size_t>(i)]);
    seq.pad_mask.push_back(true);
  }
  for (int i = kept; i < max_content; ++i) {
    seq.token_ids.push_back(kPadId);
    seq.segment_ids.push_back(0);
    seq.pad_mask.push_back(false);
  }
  seq.token_ids.push_back(kSepId);
  seq.segment_ids.push_back(kept > 0 ? content_segments[static_cast<std::size_t>(kept - 1)] : 0);
  seq.pad_mask.push_back(true);

  seq.position_ids.resize(total);
  for (std::size_t i = 0; i < total; ++i) seq.position_ids[i] = static_cast<int>(i);
  return seq;
}

TokenSequence encode_text(std::string_view text, const Vocabulary& vocab, int max_content) {
  std::vector<std::vector<int>> sentences;
  for (const auto& s : split_sentences(text)) sentences.push_back(to_ids(tokenize(s, vocab), vocab));
  return assemble_sequence(sentences, max_content);
}

}  // namespace aes

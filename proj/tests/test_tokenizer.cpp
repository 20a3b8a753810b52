#include "aes/error.hpp"
#include "aes/tokenizer.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"

using namespace aes;

namespace {

Vocabulary vocab_of(std::vector<std::string> pieces) {
  std::vector<std::string> all{"[CLS]", "[SEP]", "[PAD]", "[UNK]"};
  all.insert(all.end(), pieces.begin(), pieces.end());
  return Vocabulary(all, 4000, "");
}

}  // namespace

TEST_CASE("specials sit at fixed ids") {
  const Vocabulary v;
  CHECK(v.id("[CLS]") == kClsId);
  CHECK(v.id("[SEP]") == kSepId);
  CHECK(v.id("[PAD]") == kPadId);
  CHECK(v.id("[UNK]") == kUnkId);
  CHECK(v.id("missing") == -1);
}

TEST_CASE("pre-tokenizer lowercases and isolates punctuation") {
  CHECK(pre_tokenize("Hello, World!") == std::vector<std::string>{"hello", ",", "world", "!"});
  CHECK(pre_tokenize("  it's\tok\n") == std::vector<std::string>{"it", "'", "s", "ok"});
  CHECK(pre_tokenize("") .empty());
  CHECK(pre_tokenize("caf\xc3\xa9") == std::vector<std::string>{"caf\xc3\xa9"});
}

TEST_CASE("wordpiece is greedy longest-match-first") {
  const auto v = vocab_of({"un", "unhappy", "happi", "##happi", "##ness", "##ly", "h"});
  CHECK(wordpiece("unhappy", v) == std::vector<std::string>{"unhappy"});
  CHECK(wordpiece("unhappiness", v) == std::vector<std::string>{"un", "##happi", "##ness"});
  CHECK(wordpiece("happily", v) == std::vector<std::string>{"happi", "##ly"});
  CHECK(wordpiece("unhappyx", v) == std::vector<std::string>{"[UNK]"});  // no "##x", no backtracking
  CHECK(wordpiece("xyz", v) == std::vector<std::string>{"[UNK]"});
  CHECK(wordpiece(std::string(101, 'h'), v) == std::vector<std::string>{"[UNK]"});
  CHECK(to_ids({"un", "nope"}, v) == std::vector<int>{v.id("un"), kUnkId});
}

TEST_CASE("vocabulary ranks by frequency then spelling and caps whole words") {
  const auto v = build_vocabulary({"b a b c", "a b d"}, 2);
  CHECK(v.piece(4) == "b");  // 3 occurrences
  CHECK(v.piece(5) == "a");  // 2 occurrences
  CHECK(v.word_count() == 2);
  CHECK_FALSE(v.contains("c"));
  CHECK(v.max_words() == 2);
  CHECK(v.corpus_hash().size() == 64);
}

TEST_CASE("vocabulary derives continuation pieces for out-of-vocabulary words") {
  // four whole words leave room for two continuation pieces
  const auto v = build_vocabulary({"play play play play talk talk talk walk walk jump jump playing played talked"}, 4);
  CHECK(v.contains("play"));
  CHECK_FALSE(v.contains("playing"));
  CHECK(v.contains("##ing"));
  CHECK(v.contains("##ed"));
  CHECK(tokenize("Playing", v) == std::vector<std::string>{"play", "##ing"});
  CHECK(tokenize("jumped", v) == std::vector<std::string>{"jump", "##ed"});
}

TEST_CASE("vocabulary defaults to 4000 whole words") {
  std::vector<std::string> texts;
  for (int i = 0; i < 5000; ++i) texts.push_back("w" + std::to_string(i));
  const auto v = build_vocabulary(texts);
  CHECK(v.word_count() == 4000);
}

TEST_CASE("vocabulary serialization round-trips") {
  const auto v = testing::sample_vocab();
  CHECK(Vocabulary::parse(v.serialize()) == v);
  testing::TempDir dir;
  v.save(dir.file("v.txt"));
  CHECK(Vocabulary::load(dir.file("v.txt")) == v);
  CHECK_THROWS_AS(Vocabulary::parse("no header\n"), Error);
}

TEST_CASE("empty corpus is rejected") {
  try {
    build_vocabulary({});
    FAIL("expected EmptyCorpus");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyCorpus);
  }
  CHECK_THROWS_AS(build_vocabulary({"  ", "\n"}), Error);
}

TEST_CASE("sentence splitter breaks on terminal punctuation before whitespace") {
  CHECK(split_sentences("One. Two! Three? Four") ==
        std::vector<std::string>{"One.", "Two!", "Three?", "Four"});
  CHECK(split_sentences("Pi is 3.14 today.") == std::vector<std::string>{"Pi is 3.14 today."});
  CHECK(split_sentences("   ").empty());
}

TEST_CASE("assembly pads short content") {
  // content [10 11] [SEP] [12]: n = 4, L = 6
  const auto seq = assemble_sequence({{10, 11}, {12}}, 6);
  CHECK(seq.token_ids == std::vector<int>{kClsId, 10, 11, kSepId, 12, kPadId, kPadId, kSepId});
  CHECK(seq.segment_ids == std::vector<int>{0, 0, 0, 0, 1, 0, 0, 1});
  CHECK(seq.position_ids == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
  CHECK(seq.pad_mask == std::vector<bool>{true, true, true, true, true, false, false, true});
  CHECK(seq.source_length == 4);
}

TEST_CASE("assembly with content exactly L adds no padding") {
  const auto seq = assemble_sequence({{10, 11}, {12}}, 4);
  CHECK(seq.token_ids == std::vector<int>{kClsId, 10, 11, kSepId, 12, kSepId});
  CHECK(seq.segment_ids == std::vector<int>{0, 0, 0, 0, 1, 1});
  CHECK(std::count(seq.pad_mask.begin(), seq.pad_mask.end(), false) == 0);
}

TEST_CASE("assembly truncates to the first L content tokens") {
  const auto seq = assemble_sequence({{10, 11}, {12, 13, 14}}, 3);
  CHECK(seq.token_ids == std::vector<int>{kClsId, 10, 11, kSepId, kSepId});
  CHECK(seq.source_length == 6);
  CHECK(seq.length() == 5);
}

TEST_CASE("assembly of empty content is all padding") {
  const auto seq = assemble_sequence({}, 3);
  CHECK(seq.token_ids == std::vector<int>{kClsId, kPadId, kPadId, kPadId, kSepId});
  CHECK(seq.source_length == 0);
}

TEST_CASE("assembly rejects non-positive length") {
  try {
    assemble_sequence({{10}}, 0);
    FAIL("expected InvalidLength");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidLength);
  }
}

TEST_CASE("segments alternate by sentence") {
  const auto seq = assemble_sequence({{10}, {11}, {12}}, 5);
  CHECK(seq.segment_ids == std::vector<int>{0, 0, 0, 1, 1, 0, 0});
}

TEST_CASE("property: random texts satisfy the sequence invariants in all three branches") {
  const auto v = testing::sample_vocab();
  const auto props = testing::tokenizer_properties(v, 99, 2000);
  INFO(props.first_violation);
  CHECK(props.violations == 0);
  CHECK(props.truncated > 0);
  CHECK(props.exact > 0);
  CHECK(props.padded > 0);
}

TEST_CASE("gradient-check texts cover padding, exact fit and truncation") {
  const auto v = testing::sample_vocab();
  const auto texts = testing::gradcheck_texts();
  CHECK(encode_text(texts[0], v, 8).source_length < 8);
  CHECK(encode_text(texts[1], v, 8).source_length == 8);
  CHECK(encode_text(texts[2], v, 8).source_length > 8);
}

#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace aes {

enum class Genre { argumentative, question_answering, narrative };

std::string_view genre_name(Genre g);
Genre parse_genre(std::string_view name);

struct ScoreRange {
  int min = 0;
  int max = 1;

  int categories() const { return max - min + 1; }
  bool contains(int v) const { return v >= min && v <= max; }
  friend bool operator==(const ScoreRange&, const ScoreRange&) = default;
};

struct PromptSpec {
  int prompt_id = 0;
  Genre genre = Genre::argumentative;
  int avg_word_count = 0;
  std::vector<std::string> trait_names;
  std::vector<ScoreRange> trait_ranges;  // parallel to trait_names
  ScoreRange overall_range;

  int trait_count() const { return static_cast<int>(trait_names.size()); }
  const ScoreRange& trait_range(std::string_view trait) const;
  void validate() const;
};

// Prompt metadata keyed by prompt id. Loaded from the bundled YAML file or an
// operator-supplied override with the same schema.
class PromptTable {
 public:
  static constexpr int kSchemaVersion = 1;

  PromptTable() = default;
  explicit PromptTable(std::vector<PromptSpec> prompts);

  static PromptTable from_yaml(std::string_view text);
  static PromptTable from_file(const std::string& path);
  std::string to_yaml() const;

  const std::vector<PromptSpec>& prompts() const { return prompts_; }
  const PromptSpec* find(int prompt_id) const;
  const PromptSpec& at(int prompt_id) const;  // throws UnknownPrompt
  std::size_t size() const { return prompts_.size(); }

  // Content hash of the canonical serialization; checkpoints record it.
  std::string hash() const;

 private:
  std::vector<PromptSpec> prompts_;
};

// The eight ASAP/ASAP++ collections with their Table 1 word and trait counts.
PromptTable builtin_prompt_table();
std::string_view builtin_prompt_yaml();

struct EssayRecord {
  std::string essay_id;
  int prompt_id = 0;
  std::string text;
  int overall_score = 0;
  std::map<std::string, int> trait_scores;
};

// Column names for the TSV reader. Trait columns default to the trait names
// themselves; `trait_columns` renames them per trait.
struct ColumnMapping {
  std::string essay_id = "essay_id";
  std::string prompt_id = "essay_set";
  std::string text = "essay";
  std::string overall = "domain1_score";
  std::map<std::string, std::string> trait_columns;

  std::string trait_column(const std::string& trait) const;
};

std::vector<EssayRecord> load_dataset(const std::string& path, const PromptTable& table,
                                      const ColumnMapping& mapping = {});
std::vector<EssayRecord> read_dataset(std::istream& in, const PromptTable& table,
                                      const ColumnMapping& mapping = {});
void write_dataset(std::ostream& out, const std::vector<EssayRecord>& records,
                   const PromptTable& table, const ColumnMapping& mapping = {});

struct SplitRatios {
  double train = 0.8;
  double dev = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> dev;
  std::vector<std::string> test;
  std::uint64_t seed = 0;

  std::string serialize() const;
};

DatasetSplit split_dataset(const std::vector<EssayRecord>& records, SplitRatios ratios,
                           std::uint64_t seed);

// Records whose ids appear in `ids`, in the order of `ids`.
std::vector<EssayRecord> select_records(const std::vector<EssayRecord>& records,
                                        const std::vector<std::string>& ids);

double normalize_score(int value, ScoreRange range);
int denormalize_score(double normalized, ScoreRange range);

}  // namespace aes

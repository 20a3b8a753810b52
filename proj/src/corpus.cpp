#include "aes/corpus.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "aes/error.hpp"
#include "aes/util.hpp"

namespace aes {

std::string_view genre_name(Genre g) {
  switch (g) {
    case Genre::argumentative: return "argumentative";
    case Genre::question_answering: return "question_answering";
    case Genre::narrative: return "narrative";
  }
  return "unknown";
}

Genre parse_genre(std::string_view name) {
  if (name == "argumentative") return Genre::argumentative;
  if (name == "question_answering") return Genre::question_answering;
  if (name == "narrative") return Genre::narrative;
  throw Error(ErrorCode::UnknownGenre, "unknown genre '" + std::string(name) + "'");
}

const ScoreRange& PromptSpec::trait_range(std::string_view trait) const {
  for (std::size_t i = 0; i < trait_names.size(); ++i) {
    if (trait_names[i] == trait) return trait_ranges[i];
  }
  throw Error(ErrorCode::InvalidArgument, "prompt " + std::to_string(prompt_id) +
                                              " has no trait '" + std::string(trait) + "'");
}

void PromptSpec::validate() const {
  const auto where = "prompt " + std::to_string(prompt_id) + ": ";
  if (prompt_id < 1) throw Error(ErrorCode::InvalidConfig, where + "prompt_id must be >= 1");
  if (trait_names.size() != trait_ranges.size()) {
    throw Error(ErrorCode::InvalidConfig, where + "trait names and ranges differ in length");
  }
  if (overall_range.min >= overall_range.max) {
    throw Error(ErrorCode::InvalidConfig, where + "overall range needs min < max");
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < trait_names.size(); ++i) {
    if (trait_names[i].empty()) throw Error(ErrorCode::InvalidConfig, where + "empty trait name");
    if (!seen.insert(trait_names[i]).second) {
      throw Error(ErrorCode::InvalidConfig, where + "duplicate trait " + trait_names[i]);
    }
    if (trait_ranges[i].min >= trait_ranges[i].max) {
      throw Error(ErrorCode::InvalidConfig, where + "range of " + trait_names[i] + " needs min < max");
    }
  }
}

PromptTable::PromptTable(std::vector<PromptSpec> prompts) : prompts_(std::move(prompts)) {
  std::set<int> ids;
  for (const auto& p : prompts_) {
    p.validate();
    if (!ids.insert(p.prompt_id).second) {
      throw Error(ErrorCode::InvalidConfig, "duplicate prompt_id " + std::to_string(p.prompt_id));
    }
  }
  std::sort(prompts_.begin(), prompts_.end(),
            [](const PromptSpec& a, const PromptSpec& b) { return a.prompt_id < b.prompt_id; });
}

namespace {

ScoreRange parse_range(const YAML::Node& node, const std::string& what) {
  if (!node || !node.IsSequence() || node.size() != 2) {
    throw Error(ErrorCode::InvalidConfig, what + ": range must be [min, max]");
  }
  return {node[0].as<int>(), node[1].as<int>()};
}

}  // namespace

PromptTable PromptTable::from_yaml(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("prompt metadata: ") + e.what());
  }
  if (!root["schema_version"] || root["schema_version"].as<int>() != kSchemaVersion) {
    throw Error(ErrorCode::VersionMismatch,
                "prompt metadata schema_version must be " + std::to_string(kSchemaVersion));
  }
  std::vector<PromptSpec> prompts;
  try {
    for (const auto& node : root["prompts"]) {
      PromptSpec p;
      p.prompt_id = node["prompt_id"].as<int>();
      const auto where = "prompt " + std::to_string(p.prompt_id);
      p.genre = parse_genre(node["genre"].as<std::string>());
      p.avg_word_count = node["avg_word_count"] ? node["avg_word_count"].as<int>() : 0;
      p.overall_range = parse_range(node["overall_range"], where);
      for (const auto& t : node["traits"]) {
        p.trait_names.push_back(t["name"].as<std::string>());
        p.trait_ranges.push_back(parse_range(t["range"], where + " trait " + p.trait_names.back()));
      }
      if (node["trait_count"] && node["trait_count"].as<int>() != p.trait_count()) {
        throw Error(ErrorCode::InvalidConfig, where + ": trait_count disagrees with trait list");
      }
      prompts.push_back(std::move(p));
    }
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("prompt metadata: ") + e.what());
  }
  return PromptTable(std::move(prompts));
}

PromptTable PromptTable::from_file(const std::string& path) { return from_yaml(read_file(path)); }

std::string PromptTable::to_yaml() const {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "schema_version" << YAML::Value << kSchemaVersion;
  out << YAML::Key << "prompts" << YAML::Value << YAML::BeginSeq;
  for (const auto& p : prompts_) {
    out << YAML::BeginMap;
    out << YAML::Key << "prompt_id" << YAML::Value << p.prompt_id;
    out << YAML::Key << "genre" << YAML::Value << std::string(genre_name(p.genre));
    out << YAML::Key << "avg_word_count" << YAML::Value << p.avg_word_count;
    out << YAML::Key << "trait_count" << YAML::Value << p.trait_count();
    out << YAML::Key << "overall_range" << YAML::Value << YAML::Flow << YAML::BeginSeq
        << p.overall_range.min << p.overall_range.max << YAML::EndSeq;
    out << YAML::Key << "traits" << YAML::Value << YAML::BeginSeq;
    for (std::size_t i = 0; i < p.trait_names.size(); ++i) {
      out << YAML::Flow << YAML::BeginMap;
      out << YAML::Key << "name" << YAML::Value << p.trait_names[i];
      out << YAML::Key << "range" << YAML::Value << YAML::Flow << YAML::BeginSeq
          << p.trait_ranges[i].min << p.trait_ranges[i].max << YAML::EndSeq;
      out << YAML::EndMap;
    }
    out << YAML::EndSeq;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

const PromptSpec* PromptTable::find(int prompt_id) const {
  for (const auto& p : prompts_) {
    if (p.prompt_id == prompt_id) return &p;
  }
  return nullptr;
}

const PromptSpec& PromptTable::at(int prompt_id) const {
  if (const auto* p = find(prompt_id)) return *p;
  throw Error(ErrorCode::UnknownPrompt, "unknown prompt_id " + std::to_string(prompt_id));
}

std::string PromptTable::hash() const { return sha256_hex(to_yaml()); }

PromptTable builtin_prompt_table() { return PromptTable::from_yaml(builtin_prompt_yaml()); }

// ---------------------------------------------------------------------------
// TSV

std::string ColumnMapping::trait_column(const std::string& trait) const {
  const auto it = trait_columns.find(trait);
  return it == trait_columns.end() ? trait : it->second;
}

namespace {

[[noreturn]] void row_error(ErrorCode code, std::size_t line, const std::string& what) {
  throw Error(code, "line " + std::to_string(line) + ": " + what);
}

int parse_int(const std::string& field, std::size_t line, const std::string& column) {
  const auto s = trim(field);
  int value = 0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (s.empty() || ec != std::errc() || ptr != last) {
    row_error(ErrorCode::MalformedRow, line,
              "column '" + column + "' is not an integer: '" + s + "'");
  }
  return value;
}

}  // namespace

std::vector<EssayRecord> read_dataset(std::istream& in, const PromptTable& table,
                                      const ColumnMapping& mapping) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::MalformedRow, "line 1: missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line, '\t');
  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column.emplace(trim(header[i]), i);

  auto required = [&](const std::string& name) {
    const auto it = column.find(name);
    if (it == column.end()) row_error(ErrorCode::MalformedRow, 1, "header lacks column '" + name + "'");
    return it->second;
  };
  const auto id_col = required(mapping.essay_id);
  const auto prompt_col = required(mapping.prompt_id);
  const auto text_col = required(mapping.text);
  const auto overall_col = required(mapping.overall);

  std::vector<EssayRecord> records;
  std::unordered_set<std::string> ids;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != header.size()) {
      row_error(ErrorCode::MalformedRow, line_no,
                "expected " + std::to_string(header.size()) + " columns, found " +
                    std::to_string(fields.size()));
    }
    EssayRecord rec;
    rec.essay_id = trim(fields[id_col]);
    if (rec.essay_id.empty()) row_error(ErrorCode::MalformedRow, line_no, "empty essay_id");
    if (!ids.insert(rec.essay_id).second) {
      row_error(ErrorCode::MalformedRow, line_no, "duplicate essay_id " + rec.essay_id);
    }
    rec.prompt_id = parse_int(fields[prompt_col], line_no, mapping.prompt_id);
    const auto* spec = table.find(rec.prompt_id);
    if (!spec) {
      row_error(ErrorCode::UnknownPrompt, line_no, "unknown prompt_id " + std::to_string(rec.prompt_id));
    }
    rec.text = fields[text_col];
    rec.overall_score = parse_int(fields[overall_col], line_no, mapping.overall);
    if (!spec->overall_range.contains(rec.overall_score)) {
      row_error(ErrorCode::ScoreOutOfRange, line_no,
                "overall score " + std::to_string(rec.overall_score) + " outside [" +
                    std::to_string(spec->overall_range.min) + "," +
                    std::to_string(spec->overall_range.max) + "]");
    }
    for (std::size_t t = 0; t < spec->trait_names.size(); ++t) {
      const auto& name = spec->trait_names[t];
      const auto col_name = mapping.trait_column(name);
      const auto it = column.find(col_name);
      if (it == column.end()) {
        row_error(ErrorCode::MalformedRow, line_no, "no column for trait '" + col_name + "'");
      }
      const int v = parse_int(fields[it->second], line_no, col_name);
      const auto& r = spec->trait_ranges[t];
      if (!r.contains(v)) {
        row_error(ErrorCode::ScoreOutOfRange, line_no,
                  "trait " + name + " score " + std::to_string(v) + " outside [" +
                      std::to_string(r.min) + "," + std::to_string(r.max) + "]");
      }
      rec.trait_scores.emplace(name, v);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<EssayRecord> load_dataset(const std::string& path, const PromptTable& table,
                                      const ColumnMapping& mapping) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open dataset " + path);
  return read_dataset(in, table, mapping);
}

void write_dataset(std::ostream& out, const std::vector<EssayRecord>& records,
                   const PromptTable& table, const ColumnMapping& mapping) {
  std::vector<std::string> trait_cols;
  for (const auto& p : table.prompts()) {
    for (const auto& t : p.trait_names) {
      const auto c = mapping.trait_column(t);
      if (std::find(trait_cols.begin(), trait_cols.end(), c) == trait_cols.end()) {
        trait_cols.push_back(c);
      }
    }
  }
  out << mapping.essay_id << '\t' << mapping.prompt_id << '\t' << mapping.text << '\t'
      << mapping.overall;
  for (const auto& c : trait_cols) out << '\t' << c;
  out << '\n';
  for (const auto& r : records) {
    std::string text = r.text;
    std::replace_if(text.begin(), text.end(), [](char c) { return c == '\t' || c == '\n' || c == '\r'; }, ' ');
    out << r.essay_id << '\t' << r.prompt_id << '\t' << text << '\t' << r.overall_score;
    const auto& spec = table.at(r.prompt_id);
    for (const auto& c : trait_cols) {
      out << '\t';
      for (const auto& t : spec.trait_names) {
        if (mapping.trait_column(t) == c) {
          out << r.trait_scores.at(t);
          break;
        }
      }
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Splitting

std::string DatasetSplit::serialize() const {
  std::ostringstream out;
  out << "# seed=" << seed << '\n';
  for (const auto& id : train) out << "train\t" << id << '\n';
  for (const auto& id : dev) out << "dev\t" << id << '\n';
  for (const auto& id : test) out << "test\t" << id << '\n';
  return out.str();
}

namespace {

// Largest-remainder apportionment of n items over the three ratios.
std::array<std::size_t, 3> apportion(std::size_t n, const std::array<double, 3>& ratios) {
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = static_cast<double>(n) * ratios[k];
    counts[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainder[k] = exact - static_cast<double>(counts[k]);
    assigned += counts[k];
  }
  while (assigned < n) {
    int best = 0;
    for (int k = 1; k < 3; ++k) {
      if (remainder[k] > remainder[best] + 1e-12) best = k;
    }
    ++counts[best];
    remainder[best] = -1.0;
    ++assigned;
  }
  while (assigned > n) {
    for (int k = 2; k >= 0 && assigned > n; --k) {
      if (counts[k] > 0) {
        --counts[k];
        --assigned;
      }
    }
  }
  return counts;
}

}  // namespace

DatasetSplit split_dataset(const std::vector<EssayRecord>& records, SplitRatios ratios,
                           std::uint64_t seed) {
  if (records.empty()) throw Error(ErrorCode::EmptyInput, "split_dataset: no records");
  const std::array<double, 3> r{ratios.train, ratios.dev, ratios.test};
  for (double x : r) {
    if (!(x > 0.0)) throw Error(ErrorCode::InvalidArgument, "split ratios must be positive");
  }
  if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidArgument, "split ratios must sum to 1");
  }

  // Shuffle each prompt's essays, then interleave prompts by relative rank
  // (i + 1/2) / n_prompt. Cutting the merged order at the global counts
  // gives every prompt a proportional share of every split.
  std::map<int, std::vector<std::size_t>> by_prompt;
  for (std::size_t i = 0; i < records.size(); ++i) by_prompt[records[i].prompt_id].push_back(i);

  struct Ranked {
    std::int64_t rank;  // 2i + 1
    std::int64_t group_size;
    int prompt_id;
    std::size_t record;
  };
  std::vector<Ranked> order;
  order.reserve(records.size());
  for (auto& [prompt, idx] : by_prompt) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(prompt)));
    rng.shuffle(idx);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      order.push_back({2 * static_cast<std::int64_t>(i) + 1,
                       static_cast<std::int64_t>(idx.size()), prompt, idx[i]});
    }
  }
  std::sort(order.begin(), order.end(), [](const Ranked& a, const Ranked& b) {
    const auto lhs = a.rank * b.group_size;
    const auto rhs = b.rank * a.group_size;
    if (lhs != rhs) return lhs < rhs;
    return std::tie(a.prompt_id, a.rank) < std::tie(b.prompt_id, b.rank);
  });

  const auto counts = apportion(records.size(), r);
  DatasetSplit split;
  split.seed = seed;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& id = records[order[i].record].essay_id;
    if (i < counts[0]) {
      split.train.push_back(id);
    } else if (i < counts[0] + counts[1]) {
      split.dev.push_back(id);
    } else {
      split.test.push_back(id);
    }
  }
  return split;
}

std::vector<EssayRecord> select_records(const std::vector<EssayRecord>& records,
                                        const std::vector<std::string>& ids) {
  std::unordered_map<std::string, const EssayRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.essay_id, &r);
  std::vector<EssayRecord> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw Error(ErrorCode::InvalidArgument, "unknown essay_id " + id);
    out.push_back(*it->second);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Score scaling

double normalize_score(int value, ScoreRange range) {
  if (range.min >= range.max) throw Error(ErrorCode::InvalidArgument, "score range needs min < max");
  if (!range.contains(value)) {
    throw Error(ErrorCode::ValueOutOfRange,
                "score " + std::to_string(value) + " outside [" + std::to_string(range.min) +
                    "," + std::to_string(range.max) + "]");
  }
  return static_cast<double>(value - range.min) / static_cast<double>(range.max - range.min);
}

int denormalize_score(double normalized, ScoreRange range) {
  if (range.min >= range.max) throw Error(ErrorCode::InvalidArgument, "score range needs min < max");
  if (std::isnan(normalized)) throw Error(ErrorCode::ValueOutOfRange, "normalized score is NaN");
  const double scaled = range.min + normalized * static_cast<double>(range.max - range.min);
  const double rounded = std::floor(scaled + 0.5);
  return static_cast<int>(std::clamp(rounded, static_cast<double>(range.min),
                                     static_cast<double>(range.max)));
}

}  // namespace aes

#include "aes/model.hpp"

#include <bit>
#include <cstring>

#include "aes/error.hpp"
#include "aes/util.hpp"
#include "json.hpp"

namespace aes {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is written in host byte order");

ModelConfig ModelConfig::tiny(int vocab_size, int max_content_length) {
  ModelConfig c;
  c.max_content_length = max_content_length;
  c.encoder.vocab_size = vocab_size;
  c.encoder.d_model = 8;
  c.encoder.n_layers = 1;
  c.encoder.n_heads = 1;
  c.encoder.d_ff = 32;
  c.encoder.max_positions = max_content_length + 2;
  return c;
}

void ModelConfig::validate() const {
  encoder.validate();
  if (max_content_length < 1) {
    throw Error(ErrorCode::InvalidLength, "max_content_length must be >= 1");
  }
  if (encoder.max_positions < max_content_length + 2) {
    throw Error(ErrorCode::InvalidConfig, "max_positions must be >= max_content_length + 2");
  }
}

std::string HeadBank::key_for(const PromptSpec& prompt, HeadKeying keying) {
  if (keying == HeadKeying::prompt) return "prompt-" + std::to_string(prompt.prompt_id);
  return std::string(genre_name(prompt.genre));
}

HeadBank HeadBank::init(const PromptTable& table, HeadKeying keying, int d_model,
                        std::uint64_t seed) {
  HeadBank bank;
  auto make = [d_model] { return Head{Mat::Zero(1, d_model), Mat::Zero(1, 1)}; };
  for (const auto& p : table.prompts()) {
    auto& set = bank.sets[key_for(p, keying)];
    if (set.overall.weight.size() == 0) set.overall = make();
    for (const auto& t : p.trait_names) {
      if (!set.traits.contains(t)) set.traits.emplace(t, make());
    }
  }
  Rng rng(derive_seed(seed, 0x68656164));
  bank.for_each([&](const std::string& name, Mat& m) {
    if (name.ends_with(".weight")) xavier_uniform(m, rng);
  });
  return bank;
}

ModelWeights ModelWeights::zeros_like(const ModelWeights& w) {
  ModelWeights z = w;
  z.for_each([](const std::string&, Mat& m) { m.setZero(); });
  return z;
}

ModelState init_model(const ModelConfig& config, Vocabulary vocab, const PromptTable& table) {
  ModelState m;
  m.config = config;
  m.config.encoder.vocab_size = vocab.size();
  m.config.validate();
  m.vocab = std::move(vocab);
  m.weights.encoder = EncoderWeights::init(m.config.encoder);
  m.weights.heads = HeadBank::init(table, m.config.head_keying, m.config.encoder.d_model,
                                   m.config.encoder.seed);
  m.prompt_table_hash = table.hash();
  return m;
}

const TraitScore* ScoreReport::trait(std::string_view name) const {
  for (const auto& t : traits) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

namespace {

const HeadSet& head_set(const ModelState& model, const PromptSpec& prompt) {
  const auto key = HeadBank::key_for(prompt, model.config.head_keying);
  const auto it = model.weights.heads.sets.find(key);
  if (it == model.weights.heads.sets.end()) {
    throw Error(ErrorCode::UnknownGenre, "model has no head set '" + key + "'");
  }
  return it->second;
}

double apply_head(const Head& h, const Vec& pooled) {
  return logistic(h.weight.row(0).dot(pooled) + h.bias(0, 0));
}

}  // namespace

Prediction predict(const TokenSequence& seq, const PromptSpec& prompt, const ModelState& model) {
  const auto& set = head_set(model, prompt);
  const Mat x = embed(seq, model.weights.encoder.embeddings);
  const auto run = encoder_forward(x, model.weights.encoder, model.config.encoder, seq.pad_mask);
  const Vec pooled = pool(run.states, seq.pad_mask, model.config.encoder.pooling);
  Prediction out;
  out.overall = apply_head(set.overall, pooled);
  for (const auto& t : prompt.trait_names) {
    const auto it = set.traits.find(t);
    if (it == set.traits.end()) {
      throw Error(ErrorCode::UnknownGenre, "head set lacks trait '" + t + "'");
    }
    out.traits.push_back(apply_head(it->second, pooled));
  }
  return out;
}

ScoreReport score_essay(std::string_view text, const PromptSpec& prompt, const ModelState& model,
                        std::string essay_id) {
  if (pre_tokenize(text).empty()) throw Error(ErrorCode::EmptyEssay, "essay has no words");
  const auto seq = encode_text(text, model.vocab, model.config.max_content_length);
  const auto pred = predict(seq, prompt, model);
  ScoreReport r;
  r.essay_id = std::move(essay_id);
  r.prompt_id = prompt.prompt_id;
  r.overall_normalized = pred.overall;
  r.overall_rubric = denormalize_score(pred.overall, prompt.overall_range);
  for (std::size_t i = 0; i < prompt.trait_names.size(); ++i) {
    r.traits.push_back({prompt.trait_names[i], pred.traits[i],
                        denormalize_score(pred.traits[i], prompt.trait_ranges[i])});
  }
  return r;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'A', 'E', 'S', 'C', 'K', 'P', 'T', '\0'};
constexpr std::size_t kDigestChars = 64;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(std::string_view in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw Error(ErrorCode::CorruptCheckpoint, "checkpoint truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

nlohmann::json config_json(const ModelConfig& c) {
  return {{"vocab_size", c.encoder.vocab_size},
          {"d_model", c.encoder.d_model},
          {"n_layers", c.encoder.n_layers},
          {"n_heads", c.encoder.n_heads},
          {"d_ff", c.encoder.d_ff},
          {"max_positions", c.encoder.max_positions},
          {"dropout_rate", c.encoder.dropout_rate},
          {"seed", c.encoder.seed},
          {"pooling", c.encoder.pooling == Pooling::cls ? "cls" : "mean"},
          {"max_content_length", c.max_content_length},
          {"head_keying", c.head_keying == HeadKeying::genre ? "genre" : "prompt"}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.encoder.vocab_size = j.at("vocab_size").get<int>();
  c.encoder.d_model = j.at("d_model").get<int>();
  c.encoder.n_layers = j.at("n_layers").get<int>();
  c.encoder.n_heads = j.at("n_heads").get<int>();
  c.encoder.d_ff = j.at("d_ff").get<int>();
  c.encoder.max_positions = j.at("max_positions").get<int>();
  c.encoder.dropout_rate = j.at("dropout_rate").get<double>();
  c.encoder.seed = j.at("seed").get<std::uint64_t>();
  c.encoder.pooling = j.at("pooling").get<std::string>() == "mean" ? Pooling::mean : Pooling::cls;
  c.max_content_length = j.at("max_content_length").get<int>();
  c.head_keying =
      j.at("head_keying").get<std::string>() == "prompt" ? HeadKeying::prompt : HeadKeying::genre;
  return c;
}

}  // namespace

std::string serialize_model(const ModelState& model) {
  nlohmann::json header;
  header["format"] = "aes-checkpoint";
  header["config"] = config_json(model.config);
  header["vocab"] = {{"max_words", model.vocab.max_words()},
                     {"corpus_sha256", model.vocab.corpus_hash()},
                     {"pieces", model.vocab.pieces()}};
  header["prompt_table_sha256"] = model.prompt_table_hash;
  header["trained"] = model.trained;
  auto& tensors = header["tensors"] = nlohmann::json::array();
  model.weights.for_each([&](const std::string& name, const Mat& m) {
    tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  });
  const std::string header_text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, header_text.size());
  out += header_text;
  model.weights.for_each([&](const std::string&, const Mat& m) {
    out.append(reinterpret_cast<const char*>(m.data()),
               static_cast<std::size_t>(m.size()) * sizeof(double));
  });
  out += sha256_hex(out);
  return out;
}

ModelState deserialize_model(std::string_view bytes, const PromptTable& table) {
  if (bytes.size() < sizeof(kMagic) + 12 + kDigestChars) {
    throw Error(ErrorCode::CorruptCheckpoint, "checkpoint too short");
  }
  const auto body = bytes.substr(0, bytes.size() - kDigestChars);
  if (sha256_hex(body) != bytes.substr(body.size())) {
    throw Error(ErrorCode::CorruptCheckpoint, "checkpoint checksum mismatch");
  }
  if (std::memcmp(body.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::CorruptCheckpoint, "not a checkpoint file");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = get<std::uint32_t>(body, pos);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::VersionMismatch, "checkpoint format version " + std::to_string(version) +
                                                ", expected " + std::to_string(kCheckpointVersion));
  }
  const auto header_len = get<std::uint64_t>(body, pos);
  if (pos + header_len > body.size()) throw Error(ErrorCode::CorruptCheckpoint, "header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(body.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptCheckpoint, std::string("bad checkpoint header: ") + e.what());
  }
  pos += header_len;

  if (header.value("prompt_table_sha256", std::string()) != table.hash()) {
    throw Error(ErrorCode::VersionMismatch, "checkpoint was trained against a different prompt table");
  }

  ModelState model;
  try {
    const auto& v = header.at("vocab");
    Vocabulary vocab(v.at("pieces").get<std::vector<std::string>>(), v.at("max_words").get<int>(),
                     v.at("corpus_sha256").get<std::string>());
    model = init_model(config_from_json(header.at("config")), std::move(vocab), table);
    model.trained = header.at("trained").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptCheckpoint, std::string("bad checkpoint header: ") + e.what());
  }

  const auto& tensors = header.at("tensors");
  std::size_t index = 0;
  model.weights.for_each([&](const std::string& name, Mat& m) {
    if (index >= tensors.size() || tensors[index].at("name") != name ||
        tensors[index].at("rows").get<Eigen::Index>() != m.rows() ||
        tensors[index].at("cols").get<Eigen::Index>() != m.cols()) {
      throw Error(ErrorCode::CorruptCheckpoint, "tensor layout mismatch at '" + name + "'");
    }
    const auto nbytes = static_cast<std::size_t>(m.size()) * sizeof(double);
    if (pos + nbytes > body.size()) throw Error(ErrorCode::CorruptCheckpoint, "payload truncated");
    std::memcpy(m.data(), body.data() + pos, nbytes);
    pos += nbytes;
    ++index;
  });
  if (index != tensors.size() || pos != body.size()) {
    throw Error(ErrorCode::CorruptCheckpoint, "unexpected trailing tensors");
  }
  return model;
}

void save_model(const ModelState& model, const std::string& path) {
  write_file(path, serialize_model(model));
}

ModelState load_model(const std::string& path, const PromptTable& table) {
  return deserialize_model(read_file(path), table);
}

}  // namespace aes

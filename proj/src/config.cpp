#include "aes/config.hpp"

#include <yaml-cpp/yaml.h>

#include <set>

#include "aes/error.hpp"
#include "aes/util.hpp"

namespace aes {

AppConfig::AppConfig() {
  model.max_content_length = 128;
  model.encoder.max_positions = model.max_content_length + 2;
  set_seed(seed);
}

void AppConfig::set_seed(std::uint64_t s) {
  seed = s;
  model.encoder.seed = s;
  train.seed = s;
}

namespace {

void check_keys(const YAML::Node& node, const std::string& section, const std::set<std::string>& allowed) {
  if (!node) return;
  if (!node.IsMap()) throw Error(ErrorCode::InvalidConfig, "config: '" + section + "' must be a map");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.contains(key)) {
      throw Error(ErrorCode::InvalidConfig, "config: unknown key '" + section + "." + key + "'");
    }
  }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out) {
  if (node && node[key]) out = node[key].as<T>();
}

}  // namespace

AppConfig AppConfig::from_yaml(std::string_view text) {
  AppConfig c;
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config: ") + e.what());
  }
  if (root.IsNull()) return c;
  try {
    check_keys(root, "", {"config_version", "seed", "data", "tokenizer", "encoder", "heads", "train",
                          "llm", "service"});
    if (root["config_version"] && root["config_version"].as<int>() != kConfigVersion) {
      throw Error(ErrorCode::VersionMismatch,
                  "config_version must be " + std::to_string(kConfigVersion));
    }
    if (root["seed"]) c.set_seed(root["seed"].as<std::uint64_t>());

    const auto data = root["data"];
    check_keys(data, "data", {"prompts", "columns", "split", "template"});
    read(data, "prompts", c.prompts_path);
    read(data, "template", c.template_path);
    if (data && data["columns"]) {
      const auto cols = data["columns"];
      check_keys(cols, "data.columns", {"essay_id", "prompt_id", "text", "overall", "traits"});
      read(cols, "essay_id", c.columns.essay_id);
      read(cols, "prompt_id", c.columns.prompt_id);
      read(cols, "text", c.columns.text);
      read(cols, "overall", c.columns.overall);
      if (cols["traits"]) {
        for (const auto& kv : cols["traits"]) {
          c.columns.trait_columns[kv.first.as<std::string>()] = kv.second.as<std::string>();
        }
      }
    }
    if (data && data["split"]) {
      const auto s = data["split"];
      if (!s.IsSequence() || s.size() != 3) {
        throw Error(ErrorCode::InvalidConfig, "config: data.split must be [train, dev, test]");
      }
      c.split = {s[0].as<double>(), s[1].as<double>(), s[2].as<double>()};
    }

    const auto tok = root["tokenizer"];
    check_keys(tok, "tokenizer", {"max_words", "min_frequency", "max_length"});
    read(tok, "max_words", c.max_words);
    read(tok, "min_frequency", c.min_frequency);
    read(tok, "max_length", c.model.max_content_length);

    const auto enc = root["encoder"];
    check_keys(enc, "encoder", {"d_model", "n_layers", "n_heads", "d_ff", "dropout_rate", "pooling"});
    read(enc, "d_model", c.model.encoder.d_model);
    read(enc, "n_layers", c.model.encoder.n_layers);
    read(enc, "n_heads", c.model.encoder.n_heads);
    read(enc, "d_ff", c.model.encoder.d_ff);
    read(enc, "dropout_rate", c.model.encoder.dropout_rate);
    if (enc && enc["pooling"]) {
      const auto p = enc["pooling"].as<std::string>();
      if (p != "cls" && p != "mean") throw Error(ErrorCode::InvalidConfig, "config: pooling is cls or mean");
      c.model.encoder.pooling = p == "mean" ? Pooling::mean : Pooling::cls;
    }
    c.model.encoder.max_positions = c.model.max_content_length + 2;

    const auto heads = root["heads"];
    check_keys(heads, "heads", {"key"});
    if (heads && heads["key"]) {
      const auto k = heads["key"].as<std::string>();
      if (k != "genre" && k != "prompt") throw Error(ErrorCode::InvalidConfig, "config: heads.key is genre or prompt");
      c.model.head_keying = k == "prompt" ? HeadKeying::prompt : HeadKeying::genre;
    }

    const auto tr = root["train"];
    check_keys(tr, "train", {"learning_rate", "batch_size", "max_epochs", "early_stop_patience",
                             "trait_loss_weight", "freeze_encoder", "beta1", "beta2", "epsilon"});
    read(tr, "learning_rate", c.train.learning_rate);
    read(tr, "batch_size", c.train.batch_size);
    read(tr, "max_epochs", c.train.max_epochs);
    read(tr, "early_stop_patience", c.train.early_stop_patience);
    read(tr, "trait_loss_weight", c.train.trait_loss_weight);
    read(tr, "freeze_encoder", c.train.freeze_encoder);
    read(tr, "beta1", c.train.beta1);
    read(tr, "beta2", c.train.beta2);
    read(tr, "epsilon", c.train.epsilon);

    const auto llm = root["llm"];
    check_keys(llm, "llm", {"endpoint", "model", "api_key_env", "timeout_seconds", "max_retries",
                            "backoff_initial_seconds", "backoff_max_seconds", "temperature",
                            "offline_stub", "max_in_flight"});
    auto& l = c.service.llm;
    read(llm, "endpoint", l.endpoint);
    read(llm, "model", l.model);
    read(llm, "api_key_env", l.api_key_env);
    read(llm, "timeout_seconds", l.timeout_seconds);
    read(llm, "max_retries", l.max_retries);
    read(llm, "backoff_initial_seconds", l.backoff_initial_seconds);
    read(llm, "backoff_max_seconds", l.backoff_max_seconds);
    read(llm, "temperature", l.temperature);
    read(llm, "offline_stub", l.offline_stub);
    read(llm, "max_in_flight", l.max_in_flight);

    const auto svc = root["service"];
    check_keys(svc, "service", {"host", "port", "max_essay_bytes"});
    read(svc, "host", c.service.host);
    read(svc, "port", c.service.port);
    read(svc, "max_essay_bytes", c.service.max_essay_bytes);
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config: ") + e.what());
  }
  c.train.validate();
  c.service.llm.validate();
  return c;
}

AppConfig AppConfig::from_file(const std::string& path) {
  auto c = from_yaml(read_file(path));
  if (!c.template_path.empty()) c.service.prompt_template = c.prompt_template();
  return c;
}

PromptTable AppConfig::prompt_table() const {
  return prompts_path.empty() ? builtin_prompt_table() : PromptTable::from_file(prompts_path);
}

PromptTemplate AppConfig::prompt_template() const {
  if (template_path.empty()) return PromptTemplate::default_template();
  PromptTemplate t{"file:" + template_path, read_file(template_path)};
  t.validate_complete();
  return t;
}

}  // namespace aes

#pragma once

#include <cstdint>
#include <string>

#include "aes/corpus.hpp"
#include "aes/model.hpp"
#include "aes/service.hpp"
#include "aes/training.hpp"

namespace aes {

// Settings shared by every CLI subcommand. Read from a YAML file whose
// layout is described in README.md; every key is optional.
struct AppConfig {
  static constexpr int kConfigVersion = 1;

  std::uint64_t seed = 7;
  std::string prompts_path;  // empty = bundled table
  ColumnMapping columns;
  SplitRatios split;
  int max_words = 4000;
  int min_frequency = 1;
  ModelConfig model;
  TrainConfig train;
  ServiceConfig service;
  std::string template_path;  // empty = bundled template

  AppConfig();

  static AppConfig from_yaml(std::string_view text);
  static AppConfig from_file(const std::string& path);

  // Applies a --seed override to every seeded component.
  void set_seed(std::uint64_t s);
  PromptTable prompt_table() const;
  PromptTemplate prompt_template() const;
};

}  // namespace aes

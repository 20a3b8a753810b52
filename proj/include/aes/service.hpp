#pragma once

#include <cstddef>
#include <memory>
#include <mutex>
#include <string>

#include "aes/corpus.hpp"
#include "aes/feedback.hpp"
#include "aes/model.hpp"

namespace httplib {
class Server;
}

namespace aes {

std::string_view build_version();

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t max_essay_bytes = 64 * 1024;
  std::size_t max_body_bytes = 1024 * 1024;
  LlmConfig llm;
  PromptTemplate prompt_template = PromptTemplate::default_template();
};

// HTTP front end:
//   GET  /health       build version and checkpoint hash
//   GET  /v1/prompts   prompt table
//   POST /v1/score     {prompt_id, text} -> ScoreReport
//   POST /v1/feedback  {prompt_id, text} -> {report, feedback}
// Errors are {code, message, detail} with 400 / 404 / 413 / 502 / 503.
class ScoringService {
 public:
  ScoringService(ServiceConfig cfg, PromptTable table, HttpPost llm_post = default_http_post(),
                 Sleeper llm_sleep = {});
  ~ScoringService();
  ScoringService(const ScoringService&) = delete;
  ScoringService& operator=(const ScoringService&) = delete;

  void set_model(ModelState model, std::string checkpoint_sha256);
  void load_model(const std::string& checkpoint_path);
  bool model_loaded() const;

  // Returns the bound port; 0 asks the OS for a free one.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen_after_bind();
  void stop();
  bool running() const;

 private:
  struct Snapshot {
    std::shared_ptr<const ModelState> model;
    std::string checkpoint_sha256;
  };
  Snapshot snapshot() const;
  void install_routes();

  ServiceConfig cfg_;
  PromptTable table_;
  FeedbackClient feedback_;
  std::unique_ptr<httplib::Server> server_;
  mutable std::mutex mutex_;
  Snapshot current_;
};

// Loads the checkpoint and serves until the process is stopped.
void serve(const ServiceConfig& cfg, const PromptTable& table, const std::string& checkpoint_path);

}  // namespace aes

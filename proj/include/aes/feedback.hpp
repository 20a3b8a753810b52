#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <semaphore>
#include <string>
#include <vector>

#include "aes/corpus.hpp"
#include "aes/model.hpp"

namespace aes {

struct LlmConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4o-mini";
  std::string api_key_env = "AES_LLM_API_KEY";  // the key itself is never stored
  double timeout_seconds = 30.0;
  int max_retries = 3;
  double backoff_initial_seconds = 0.5;
  double backoff_max_seconds = 8.0;
  double temperature = 0.3;
  bool offline_stub = false;
  int max_in_flight = 4;

  void validate() const;
};

struct FeedbackProvenance {
  std::string source;  // "stub" or "remote"
  std::string model;
  long latency_ms = 0;
};

struct FeedbackBundle {
  std::map<std::string, std::string> traits;
  std::string overall_summary;
  FeedbackProvenance provenance;
};

// Placeholders: {essay} {genre} {trait_table} {rubric}, plus the optional
// {overall}. A complete template carries the first four.
struct PromptTemplate {
  std::string version;
  std::string text;

  static PromptTemplate default_template();
  static const std::vector<std::string>& required_placeholders();
  static const std::vector<std::string>& known_placeholders();
  // Throws TemplateMismatch when a required placeholder is missing.
  void validate_complete() const;
};

// Substitutes every placeholder the template uses. Throws TemplateMismatch
// for placeholders outside the known set, or when the report's traits do not
// match the prompt's.
std::string build_prompt(const ScoreReport& report, std::string_view essay, const PromptSpec& spec,
                         const PromptTemplate& tmpl);

// Instructions sent as the system message; asks for one fenced block keyed
// by trait.
std::string system_instructions(const PromptSpec& spec);

enum class ScoreBand { low, mid, high };
ScoreBand score_band(double normalized);
std::string_view band_name(ScoreBand band);
std::string stub_trait_feedback(const std::string& trait, ScoreBand band);
std::string stub_summary(ScoreBand band);

FeedbackBundle stub_feedback(const ScoreReport& report, const PromptSpec& spec);

// Parses the fenced ```feedback JSON block of a reply. Returns false when the
// block is missing, unparsable, or lacks any of `traits`.
bool parse_feedback_reply(std::string_view reply, const std::vector<std::string>& traits,
                          FeedbackBundle& out, std::string* problem = nullptr);

struct HttpReply {
  int status = 0;  // 0 = no response
  std::string body;
  bool timed_out = false;
  std::string transport_error;
};

// Outbound POST; swapped out in tests.
using HttpPost = std::function<HttpReply(const std::string& url, const std::string& body,
                                         const std::map<std::string, std::string>& headers,
                                         double timeout_seconds)>;
HttpPost default_http_post();

using Sleeper = std::function<void(std::chrono::milliseconds)>;

// Delay before retry `attempt` (1-based): initial * 2^(attempt-1), capped.
std::chrono::milliseconds backoff_delay(const LlmConfig& cfg, int attempt);

class FeedbackClient {
 public:
  explicit FeedbackClient(LlmConfig cfg, HttpPost post = default_http_post(),
                          Sleeper sleep = {});

  const LlmConfig& config() const { return cfg_; }

  // Stub mode answers locally. Remote mode sends a chat-completion request,
  // retries transient failures (no response, 408, 429, 5xx) up to
  // max_retries times, and asks once for a repaired reply if trait sections
  // are missing.
  FeedbackBundle request_feedback(const std::string& prompt, const ScoreReport& report,
                                  const PromptSpec& spec);

  // Attempts made by the most recent remote exchange (tests and logs).
  int last_attempts() const { return last_attempts_.load(); }

 private:
  std::string complete(const std::string& request_body, int& attempts);

  LlmConfig cfg_;
  HttpPost post_;
  Sleeper sleep_;
  std::unique_ptr<std::counting_semaphore<>> in_flight_;
  std::atomic<int> last_attempts_{0};
};

}  // namespace aes

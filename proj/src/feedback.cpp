#include "aes/feedback.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

#include "aes/error.hpp"
#include "httplib.h"
#include "json.hpp"

namespace aes {

using json = nlohmann::json;

void LlmConfig::validate() const {
  if (!(timeout_seconds > 0.0)) throw Error(ErrorCode::InvalidConfig, "llm: timeout must be > 0");
  if (max_retries < 0) throw Error(ErrorCode::InvalidConfig, "llm: max_retries must be >= 0");
  if (max_in_flight < 1) throw Error(ErrorCode::InvalidConfig, "llm: max_in_flight must be >= 1");
  if (backoff_initial_seconds < 0.0 || backoff_max_seconds < backoff_initial_seconds) {
    throw Error(ErrorCode::InvalidConfig, "llm: backoff needs 0 <= initial <= max");
  }
  if (!offline_stub && endpoint.empty()) throw Error(ErrorCode::InvalidConfig, "llm: endpoint is empty");
}

// ---------------------------------------------------------------------------
// Prompt construction

PromptTemplate PromptTemplate::default_template() {
  return {"v1",
          "You are reviewing a {genre} essay written by a middle-school student.\n"
          "\n"
          "Essay:\n"
          "\"\"\"\n"
          "{essay}\n"
          "\"\"\"\n"
          "\n"
          "Scores assigned by the automated scorer:\n"
          "{overall}\n"
          "{trait_table}\n"
          "\n"
          "Rubric ranges:\n"
          "{rubric}\n"
          "\n"
          "For each trait, point to what in the essay explains its score and give one concrete, "
          "actionable suggestion for raising it. Keep each trait to at most three sentences.\n"};
}

const std::vector<std::string>& PromptTemplate::required_placeholders() {
  static const std::vector<std::string> names{"essay", "genre", "trait_table", "rubric"};
  return names;
}

const std::vector<std::string>& PromptTemplate::known_placeholders() {
  static const std::vector<std::string> names{"essay", "genre", "trait_table", "rubric", "overall"};
  return names;
}

void PromptTemplate::validate_complete() const {
  for (const auto& p : required_placeholders()) {
    if (text.find("{" + p + "}") == std::string::npos) {
      throw Error(ErrorCode::TemplateMismatch,
                  "template " + version + " lacks placeholder {" + p + "}");
    }
  }
}

std::string build_prompt(const ScoreReport& report, std::string_view essay, const PromptSpec& spec,
                         const PromptTemplate& tmpl) {
  if (report.prompt_id != spec.prompt_id ||
      report.traits.size() != spec.trait_names.size()) {
    throw Error(ErrorCode::TemplateMismatch, "score report does not match prompt " +
                                                 std::to_string(spec.prompt_id));
  }
  std::ostringstream table, rubric;
  for (std::size_t i = 0; i < spec.trait_names.size(); ++i) {
    if (report.traits[i].name != spec.trait_names[i]) {
      throw Error(ErrorCode::TemplateMismatch, "report trait '" + report.traits[i].name +
                                                   "' does not match prompt trait '" +
                                                   spec.trait_names[i] + "'");
    }
    if (i > 0) table << '\n';
    table << spec.trait_names[i] << ": " << report.traits[i].rubric << '/' << spec.trait_ranges[i].max;
  }
  rubric << "overall: " << spec.overall_range.min << '-' << spec.overall_range.max;
  for (std::size_t i = 0; i < spec.trait_names.size(); ++i) {
    rubric << '\n' << spec.trait_names[i] << ": " << spec.trait_ranges[i].min << '-'
           << spec.trait_ranges[i].max;
  }
  const std::map<std::string, std::string> values{
      {"essay", std::string(essay)},
      {"genre", std::string(genre_name(spec.genre))},
      {"trait_table", table.str()},
      {"rubric", rubric.str()},
      {"overall", "overall: " + std::to_string(report.overall_rubric) + "/" +
                      std::to_string(spec.overall_range.max)}};

  std::string out;
  const auto& t = tmpl.text;
  std::size_t i = 0;
  while (i < t.size()) {
    if (t[i] == '{') {
      std::size_t j = i + 1;
      while (j < t.size() && (std::islower(static_cast<unsigned char>(t[j])) || t[j] == '_')) ++j;
      if (j < t.size() && t[j] == '}' && j > i + 1) {
        const auto name = t.substr(i + 1, j - i - 1);
        const auto it = values.find(name);
        if (it == values.end()) {
          throw Error(ErrorCode::TemplateMismatch, "unknown placeholder {" + name + "}");
        }
        out += it->second;
        i = j + 1;
        continue;
      }
    }
    out.push_back(t[i++]);
  }
  return out;
}

std::string system_instructions(const PromptSpec& spec) {
  std::ostringstream out;
  out << "You are an experienced writing tutor. Reply with exactly one fenced code block "
         "opened by ```feedback and closed by ```. Inside it put a JSON object of the form "
         "{\"summary\": string, \"traits\": {trait: string}}. The traits object must have "
         "exactly these keys: ";
  for (std::size_t i = 0; i < spec.trait_names.size(); ++i) {
    out << (i ? ", " : "") << spec.trait_names[i];
  }
  out << ". Write nothing outside the block.";
  return out.str();
}

// ---------------------------------------------------------------------------
// Stub feedback

ScoreBand score_band(double normalized) {
  if (normalized < 1.0 / 3.0) return ScoreBand::low;
  if (normalized < 2.0 / 3.0) return ScoreBand::mid;
  return ScoreBand::high;
}

std::string_view band_name(ScoreBand band) {
  switch (band) {
    case ScoreBand::low: return "low";
    case ScoreBand::mid: return "mid";
    case ScoreBand::high: return "high";
  }
  return "mid";
}

namespace {

std::string display_name(std::string trait) {
  std::replace(trait.begin(), trait.end(), '_', ' ');
  return trait;
}

}  // namespace

std::string stub_trait_feedback(const std::string& trait, ScoreBand band) {
  const auto name = display_name(trait);
  switch (band) {
    case ScoreBand::low:
      return "Your " + name + " needs the most work. Reread the rubric description for " + name +
             " and revise one paragraph with only that criterion in mind.";
    case ScoreBand::mid:
      return "Your " + name + " is developing. Find the weakest sentence for " + name +
             " and rewrite it so it matches your strongest one.";
    case ScoreBand::high:
      return "Your " + name + " is a strength. Keep it consistent across the whole essay.";
  }
  return {};
}

std::string stub_summary(ScoreBand band) {
  switch (band) {
    case ScoreBand::low:
      return "The essay is below the expected level overall. Start with the lowest-scoring trait.";
    case ScoreBand::mid:
      return "The essay meets some expectations. Targeted revision of the weaker traits will lift it.";
    case ScoreBand::high:
      return "The essay is strong overall. Polish the remaining weaker traits.";
  }
  return {};
}

FeedbackBundle stub_feedback(const ScoreReport& report, const PromptSpec& spec) {
  FeedbackBundle b;
  for (const auto& name : spec.trait_names) {
    const auto* t = report.trait(name);
    if (!t) throw Error(ErrorCode::TemplateMismatch, "report lacks trait '" + name + "'");
    b.traits[name] = stub_trait_feedback(name, score_band(t->normalized));
  }
  b.overall_summary = stub_summary(score_band(report.overall_normalized));
  b.provenance = {"stub", "stub", 0};
  return b;
}

// ---------------------------------------------------------------------------
// Remote feedback

bool parse_feedback_reply(std::string_view reply, const std::vector<std::string>& traits,
                          FeedbackBundle& out, std::string* problem) {
  auto fail = [&](const std::string& why) {
    if (problem) *problem = why;
    return false;
  };
  constexpr std::string_view open = "```feedback";
  const auto start = reply.find(open);
  if (start == std::string_view::npos) return fail("no ```feedback block");
  const auto body_start = reply.find('\n', start);
  if (body_start == std::string_view::npos) return fail("unterminated feedback block");
  const auto end = reply.find("```", body_start);
  if (end == std::string_view::npos) return fail("unterminated feedback block");

  json j = json::parse(reply.substr(body_start + 1, end - body_start - 1), nullptr, false);
  if (j.is_discarded() || !j.is_object()) return fail("feedback block is not a JSON object");
  if (!j.contains("traits") || !j["traits"].is_object()) return fail("feedback block lacks traits");

  FeedbackBundle parsed;
  std::vector<std::string> missing;
  for (const auto& t : traits) {
    const auto it = j["traits"].find(t);
    if (it == j["traits"].end() || !it->is_string() || it->get<std::string>().empty()) {
      missing.push_back(t);
      continue;
    }
    parsed.traits[t] = it->get<std::string>();
  }
  if (!missing.empty()) {
    std::string m = "missing trait sections:";
    for (const auto& t : missing) m += " " + t;
    return fail(m);
  }
  if (j.contains("summary") && j["summary"].is_string()) parsed.overall_summary = j["summary"];
  out.traits = std::move(parsed.traits);
  out.overall_summary = std::move(parsed.overall_summary);
  return true;
}

std::chrono::milliseconds backoff_delay(const LlmConfig& cfg, int attempt) {
  const double seconds = std::min(cfg.backoff_max_seconds,
                                  cfg.backoff_initial_seconds * std::pow(2.0, std::max(0, attempt - 1)));
  return std::chrono::milliseconds(static_cast<long long>(std::llround(seconds * 1000.0)));
}

HttpPost default_http_post() {
  return [](const std::string& url, const std::string& body,
            const std::map<std::string, std::string>& headers, double timeout) -> HttpReply {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) return {0, {}, false, "endpoint lacks a scheme: " + url};
    const auto path_start = url.find('/', scheme_end + 3);
    const auto origin = url.substr(0, path_start);
    const auto path = path_start == std::string::npos ? std::string("/") : url.substr(path_start);

    httplib::Client client(origin);
    const auto secs = static_cast<time_t>(timeout);
    const auto usecs = static_cast<time_t>((timeout - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);

    const auto started = std::chrono::steady_clock::now();
    auto res = client.Post(path, h, body, "application/json");
    if (!res) {
      const double elapsed =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      const auto err = res.error();
      const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                             (err == httplib::Error::Read && elapsed >= 0.9 * timeout);
      return {0, {}, timed_out, httplib::to_string(err)};
    }
    return {res->status, res->body, false, {}};
  };
}

FeedbackClient::FeedbackClient(LlmConfig cfg, HttpPost post, Sleeper sleep)
    : cfg_(std::move(cfg)), post_(std::move(post)), sleep_(std::move(sleep)) {
  cfg_.validate();
  if (!sleep_) sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  in_flight_ = std::make_unique<std::counting_semaphore<>>(cfg_.max_in_flight);
}

namespace {

bool transient(const HttpReply& r) {
  return r.status == 0 || r.status == 408 || r.status == 429 || r.status >= 500;
}

std::string excerpt(const std::string& body) {
  constexpr std::size_t kMax = 200;
  return body.size() <= kMax ? body : body.substr(0, kMax) + "...";
}

}  // namespace

std::string FeedbackClient::complete(const std::string& request_body, int& attempts) {
  std::map<std::string, std::string> headers;
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key) {
    headers["Authorization"] = std::string("Bearer ") + key;
  }

  struct Slot {
    std::counting_semaphore<>& s;
    explicit Slot(std::counting_semaphore<>& sem) : s(sem) { s.acquire(); }
    ~Slot() { s.release(); }
  } slot(*in_flight_);

  HttpReply reply;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) sleep_(backoff_delay(cfg_, attempt));
    ++attempts;
    reply = post_(cfg_.endpoint, request_body, headers, cfg_.timeout_seconds);
    if (!transient(reply) || attempt == cfg_.max_retries) break;
  }
  if (reply.status == 0) {
    if (reply.timed_out) {
      throw Error(ErrorCode::Timeout, "chat completion timed out after " +
                                          std::to_string(attempts) + " attempt(s)");
    }
    throw Error(ErrorCode::RemoteError, "chat completion unreachable: " + reply.transport_error);
  }
  if (reply.status < 200 || reply.status >= 300) {
    throw Error(ErrorCode::RemoteError,
                "chat completion returned HTTP " + std::to_string(reply.status) + ": " + excerpt(reply.body));
  }
  const json j = json::parse(reply.body, nullptr, false);
  try {
    if (!j.is_discarded()) return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
  }
  throw Error(ErrorCode::RemoteError,
              "chat completion reply has no choices[0].message.content: " + excerpt(reply.body));
}

FeedbackBundle FeedbackClient::request_feedback(const std::string& prompt,
                                                const ScoreReport& report, const PromptSpec& spec) {
  if (cfg_.offline_stub) return stub_feedback(report, spec);

  const auto started = std::chrono::steady_clock::now();
  json messages = json::array({{{"role", "system"}, {"content", system_instructions(spec)}},
                               {{"role", "user"}, {"content", prompt}}});
  auto body = [&] {
    return json{{"model", cfg_.model}, {"messages", messages}, {"temperature", cfg_.temperature}}.dump();
  };

  int attempts = 0;
  struct Record {
    std::atomic<int>& dst;
    int& n;
    ~Record() { dst = n; }
  } record{last_attempts_, attempts};
  FeedbackBundle bundle;
  std::string problem;
  std::string content = complete(body(), attempts);
  if (!parse_feedback_reply(content, spec.trait_names, bundle, &problem)) {
    messages.push_back({{"role", "assistant"}, {"content", content}});
    messages.push_back({{"role", "user"},
                        {"content", "Your reply could not be used (" + problem +
                                        "). Reply again with only the ```feedback block, covering "
                                        "every trait listed in the instructions."}});
    content = complete(body(), attempts);
    if (!parse_feedback_reply(content, spec.trait_names, bundle, &problem)) {
      throw Error(ErrorCode::MalformedReply, "reply still malformed after repair: " + problem);
    }
  }
  bundle.provenance.source = "remote";
  bundle.provenance.model = cfg_.model;
  bundle.provenance.latency_ms = static_cast<long>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                                       std::chrono::steady_clock::now() - started)
                                                       .count());
  return bundle;
}

}  // namespace aes

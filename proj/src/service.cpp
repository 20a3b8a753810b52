#include "aes/service.hpp"

#include <iostream>

#include "aes/error.hpp"
#include "aes/json_io.hpp"
#include "aes/tokenizer.hpp"
#include "aes/util.hpp"
#include "httplib.h"

#ifndef AES_VERSION
#define AES_VERSION "dev"
#endif

namespace aes {

std::string_view build_version() { return AES_VERSION; }

namespace {

void send_json(httplib::Response& res, int status, const ojson& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message,
                ojson detail = ojson::object()) {
  send_json(res, status, error_body(code, message, std::move(detail)));
}

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownPrompt: return 404;
    case ErrorCode::EmptyEssay:
    case ErrorCode::InvalidArgument: return 400;
    case ErrorCode::RemoteError:
    case ErrorCode::Timeout:
    case ErrorCode::MalformedReply: return 502;
    default: return 500;
  }
}

struct EssayRequest {
  int prompt_id = 0;
  std::string text;
};

}  // namespace

ScoringService::ScoringService(ServiceConfig cfg, PromptTable table, HttpPost llm_post,
                               Sleeper llm_sleep)
    : cfg_(std::move(cfg)),
      table_(std::move(table)),
      feedback_(cfg_.llm, std::move(llm_post), std::move(llm_sleep)),
      server_(std::make_unique<httplib::Server>()) {
  cfg_.prompt_template.validate_complete();
  install_routes();
}

ScoringService::~ScoringService() { stop(); }

void ScoringService::set_model(ModelState model, std::string checkpoint_sha256) {
  if (model.prompt_table_hash != table_.hash()) {
    throw Error(ErrorCode::VersionMismatch, "model was trained against a different prompt table");
  }
  auto ptr = std::make_shared<const ModelState>(std::move(model));
  std::lock_guard lock(mutex_);
  current_ = {std::move(ptr), std::move(checkpoint_sha256)};
}

void ScoringService::load_model(const std::string& checkpoint_path) {
  const auto bytes = read_file(checkpoint_path);
  set_model(deserialize_model(bytes, table_), sha256_hex(bytes));
}

bool ScoringService::model_loaded() const { return snapshot().model != nullptr; }

ScoringService::Snapshot ScoringService::snapshot() const {
  std::lock_guard lock(mutex_);
  return current_;
}

int ScoringService::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  if (!server_->bind_to_port(host, port)) {
    throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void ScoringService::listen_after_bind() { server_->listen_after_bind(); }

void ScoringService::stop() {
  if (server_) server_->stop();
}

bool ScoringService::running() const { return server_->is_running(); }

void ScoringService::install_routes() {
  auto& srv = *server_;
  srv.set_payload_max_length(std::max(cfg_.max_body_bytes, 4 * cfg_.max_essay_bytes));
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  srv.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    const auto snap = snapshot();
    ojson body{{"status", snap.model ? "ok" : "loading"},
               {"build", build_version()},
               {"model_loaded", snap.model != nullptr},
               {"checkpoint_sha256", snap.model ? ojson(snap.checkpoint_sha256) : ojson(nullptr)},
               {"prompt_table_sha256", table_.hash()}};
    send_json(res, 200, body);
  });

  srv.Get("/v1/prompts", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"schema_version", PromptTable::kSchemaVersion}, {"prompts", to_json(table_)}});
  });

  // Shared validation for the two POST endpoints. Returns false after
  // writing an error response.
  auto parse_request = [this](const httplib::Request& req, httplib::Response& res,
                              EssayRequest& out) {
    const auto body = ojson::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) {
      send_error(res, 400, "invalid_json", "request body must be a JSON object");
      return false;
    }
    if (!body.contains("prompt_id") || !body["prompt_id"].is_number_integer()) {
      send_error(res, 400, "invalid_request", "prompt_id must be an integer");
      return false;
    }
    if (!body.contains("text") || !body["text"].is_string()) {
      send_error(res, 400, "invalid_request", "text must be a string");
      return false;
    }
    out.prompt_id = body["prompt_id"].get<int>();
    out.text = body["text"].get<std::string>();
    if (out.text.size() > cfg_.max_essay_bytes) {
      send_error(res, 413, "payload_too_large", "essay exceeds the size limit",
                 {{"limit_bytes", cfg_.max_essay_bytes}, {"actual_bytes", out.text.size()}});
      return false;
    }
    if (!table_.find(out.prompt_id)) {
      send_error(res, 404, "unknown_prompt", "no prompt with this id", {{"prompt_id", out.prompt_id}});
      return false;
    }
    return true;
  };

  auto with_model = [this, parse_request](const httplib::Request& req, httplib::Response& res,
                                          auto&& handler) {
    EssayRequest er;
    if (!parse_request(req, res, er)) return;
    const auto snap = snapshot();
    if (!snap.model) {
      send_error(res, 503, "model_not_loaded", "the scoring model is not loaded yet");
      return;
    }
    if (pre_tokenize(er.text).empty()) {
      send_error(res, 400, "empty_essay", "essay text has no words");
      return;
    }
    try {
      handler(er, *snap.model, table_.at(er.prompt_id));
    } catch (const Error& e) {
      send_error(res, http_status_for(e.code()), to_string(e.code()), e.what());
    }
  };

  srv.Post("/v1/score", [with_model](const httplib::Request& req, httplib::Response& res) {
    with_model(req, res, [&](const EssayRequest& er, const ModelState& model, const PromptSpec& spec) {
      const auto report = score_essay(er.text, spec, model);
      send_json(res, 200, to_json(report, spec));
    });
  });

  srv.Post("/v1/feedback", [this, with_model](const httplib::Request& req, httplib::Response& res) {
    with_model(req, res, [&](const EssayRequest& er, const ModelState& model, const PromptSpec& spec) {
      const auto report = score_essay(er.text, spec, model);
      const auto prompt = build_prompt(report, er.text, spec, cfg_.prompt_template);
      const auto feedback = feedback_.request_feedback(prompt, report, spec);
      send_json(res, 200, {{"report", to_json(report, spec)}, {"feedback", to_json(feedback, spec)}});
    });
  });

  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "unexpected error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    send_error(res, 500, "internal", what);
  });
}

void serve(const ServiceConfig& cfg, const PromptTable& table, const std::string& checkpoint_path) {
  ScoringService service(cfg, table);
  service.load_model(checkpoint_path);
  const int port = service.bind(cfg.host, cfg.port);
  std::cerr << "aes: serving on http://" << cfg.host << ":" << port << std::endl;
  service.listen_after_bind();
}

}  // namespace aes

#pragma once

#include "aes/corpus.hpp"
#include "aes/evaluation.hpp"
#include "aes/feedback.hpp"
#include "aes/model.hpp"
#include "json.hpp"

namespace aes {

using ojson = nlohmann::ordered_json;

ojson to_json(const PromptSpec& spec);
ojson to_json(const PromptTable& table);
// Traits are keyed by name in the prompt's trait order.
ojson to_json(const ScoreReport& report, const PromptSpec& spec);
ojson to_json(const FeedbackBundle& feedback, const PromptSpec& spec);

ojson error_body(std::string_view code, std::string_view message, ojson detail = ojson::object());

}  // namespace aes

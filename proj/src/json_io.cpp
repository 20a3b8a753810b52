#include "aes/json_io.hpp"

namespace aes {

namespace {

ojson range_json(ScoreRange r) { return ojson::array({r.min, r.max}); }

}  // namespace

ojson to_json(const PromptSpec& spec) {
  ojson ranges = ojson::object();
  for (std::size_t i = 0; i < spec.trait_names.size(); ++i) {
    ranges[spec.trait_names[i]] = range_json(spec.trait_ranges[i]);
  }
  return {{"prompt_id", spec.prompt_id},
          {"genre", genre_name(spec.genre)},
          {"avg_word_count", spec.avg_word_count},
          {"trait_count", spec.trait_count()},
          {"trait_names", spec.trait_names},
          {"overall_range", range_json(spec.overall_range)},
          {"trait_ranges", ranges}};
}

ojson to_json(const PromptTable& table) {
  ojson out = ojson::array();
  for (const auto& p : table.prompts()) out.push_back(to_json(p));
  return out;
}

ojson to_json(const ScoreReport& report, const PromptSpec& spec) {
  ojson traits = ojson::object();
  for (const auto& t : report.traits) {
    traits[t.name] = {{"normalized", t.normalized},
                      {"rubric", t.rubric},
                      {"range", range_json(spec.trait_range(t.name))}};
  }
  return {{"essay_id", report.essay_id},
          {"prompt_id", report.prompt_id},
          {"genre", genre_name(spec.genre)},
          {"overall",
           {{"normalized", report.overall_normalized},
            {"rubric", report.overall_rubric},
            {"range", range_json(spec.overall_range)}}},
          {"traits", traits}};
}

ojson to_json(const FeedbackBundle& feedback, const PromptSpec& spec) {
  ojson traits = ojson::object();
  for (const auto& name : spec.trait_names) {
    const auto it = feedback.traits.find(name);
    if (it != feedback.traits.end()) traits[name] = it->second;
  }
  return {{"traits", traits},
          {"overall_summary", feedback.overall_summary},
          {"provenance",
           {{"source", feedback.provenance.source},
            {"model", feedback.provenance.model},
            {"latency_ms", feedback.provenance.latency_ms}}}};
}

ojson error_body(std::string_view code, std::string_view message, ojson detail) {
  return {{"code", code}, {"message", message}, {"detail", std::move(detail)}};
}

}  // namespace aes

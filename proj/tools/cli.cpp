#include "cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "aes/config.hpp"
#include "aes/error.hpp"
#include "aes/evaluation.hpp"
#include "aes/feedback.hpp"
#include "aes/json_io.hpp"
#include "aes/service.hpp"
#include "aes/synthetic.hpp"
#include "aes/tokenizer.hpp"
#include "aes/training.hpp"
#include "aes/util.hpp"

namespace aes {

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;

  AppConfig load() const {
    AppConfig cfg = config_path.empty() ? AppConfig{} : AppConfig::from_file(config_path);
    if (seed) cfg.set_seed(*seed);
    return cfg;
  }
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "YAML config file")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "seed override for splits, init and batching");
}

std::vector<std::string> texts_of(const std::vector<EssayRecord>& records) {
  std::vector<std::string> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.text);
  return out;
}

std::vector<EssayRecord> subset(const std::vector<EssayRecord>& records, const AppConfig& cfg,
                                const std::string& which) {
  if (which == "all") return records;
  const auto split = split_dataset(records, cfg.split, cfg.seed);
  if (which == "train") return select_records(records, split.train);
  if (which == "dev") return select_records(records, split.dev);
  return select_records(records, split.test);
}

std::string read_essay(const std::string& path) {
  if (path == "-") {
    std::ostringstream ss;
    ss << std::cin.rdbuf();
    return ss.str();
  }
  return read_file(path);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Genre-aware essay scoring: vocabulary, training, evaluation, scoring, feedback"};
  app.set_version_flag("--version", std::string(build_version()));
  app.require_subcommand(1);

  Common common;

  // synth
  auto* synth = app.add_subcommand("synth", "write a planted-keyword synthetic corpus as TSV");
  add_common(synth, common);
  std::string synth_out;
  SyntheticSpec synth_spec;
  synth->add_option("--out", synth_out, "output TSV")->required();
  synth->add_option("--prompts", synth_spec.prompt_ids, "prompt ids")->delimiter(',');
  synth->add_option("--essays", synth_spec.essays, "number of essays")->check(CLI::PositiveNumber);

  // build-vocab
  auto* vocab_cmd = app.add_subcommand("build-vocab", "build the word-piece vocabulary from a corpus");
  add_common(vocab_cmd, common);
  std::string data_path, vocab_out;
  vocab_cmd->add_option("--data", data_path, "corpus TSV")->required()->check(CLI::ExistingFile);
  vocab_cmd->add_option("--out", vocab_out, "vocabulary file")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model on the train split");
  add_common(train_cmd, common);
  std::string vocab_in, model_out, history_out, split_out;
  train_cmd->add_option("--data", data_path, "corpus TSV")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--vocab", vocab_in, "vocabulary file (built from train split if absent)");
  train_cmd->add_option("--out", model_out, "checkpoint path")->required();
  train_cmd->add_option("--history", history_out, "per-epoch TSV (epoch, train_loss, dev_qwk)");
  train_cmd->add_option("--split-out", split_out, "write the split ids");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "QWK report for a checkpoint");
  add_common(eval_cmd, common);
  std::string model_in, which = "test";
  bool as_json = false;
  eval_cmd->add_option("--data", data_path, "corpus TSV")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--model", model_in, "checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--subset", which, "split to evaluate")
      ->check(CLI::IsMember({"train", "dev", "test", "all"}));
  eval_cmd->add_flag("--json", as_json, "print JSON instead of the table");

  // score
  auto* score_cmd = app.add_subcommand("score", "score one essay");
  add_common(score_cmd, common);
  int prompt_id = 0;
  std::string essay_in;
  score_cmd->add_option("--model", model_in, "checkpoint")->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--prompt", prompt_id, "prompt id")->required();
  score_cmd->add_option("--in", essay_in, "essay text file, - for stdin")->required();

  // feedback
  auto* fb_cmd = app.add_subcommand("feedback", "score one essay and generate trait feedback");
  add_common(fb_cmd, common);
  bool offline = false;
  fb_cmd->add_option("--model", model_in, "checkpoint")->required()->check(CLI::ExistingFile);
  fb_cmd->add_option("--prompt", prompt_id, "prompt id")->required();
  fb_cmd->add_option("--in", essay_in, "essay text file, - for stdin")->required();
  fb_cmd->add_flag("--offline", offline, "use the deterministic stub instead of the remote model");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "run the HTTP service");
  add_common(serve_cmd, common);
  std::optional<std::string> host;
  std::optional<int> port;
  serve_cmd->add_option("--model", model_in, "checkpoint")->required()->check(CLI::ExistingFile);
  serve_cmd->add_option("--host", host, "bind address");
  serve_cmd->add_option("--port", port, "port");
  serve_cmd->add_flag("--offline", offline, "use the deterministic feedback stub");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  if (!argv_rev.empty()) argv_rev.pop_back();  // program name
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      // --help / --version
      app.exit(e, out, err);
      return kExitOk;
    }
    err << "aes: " << e.what() << "\n";
    if (auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front()) {
      err << "try: aes " << sub->get_name() << " --help\n";
    } else {
      err << "try: aes --help\n";
    }
    return kExitUsage;
  }

  try {
    const AppConfig cfg = common.load();
    const auto table = cfg.prompt_table();

    if (synth->parsed()) {
      synth_spec.seed = cfg.seed;
      const auto records = make_synthetic_corpus(table, synth_spec);
      std::ofstream f(synth_out, std::ios::binary);
      if (!f) throw Error(ErrorCode::Io, "cannot write " + synth_out);
      write_dataset(f, records, table, cfg.columns);
      err << "wrote " << records.size() << " essays to " << synth_out << "\n";
    } else if (vocab_cmd->parsed()) {
      const auto records = load_dataset(data_path, table, cfg.columns);
      const auto vocab = build_vocabulary(texts_of(subset(records, cfg, "train")), cfg.max_words,
                                          cfg.min_frequency);
      vocab.save(vocab_out);
      err << "vocabulary: " << vocab.size() << " pieces -> " << vocab_out << "\n";
    } else if (train_cmd->parsed()) {
      const auto records = load_dataset(data_path, table, cfg.columns);
      const auto split = split_dataset(records, cfg.split, cfg.seed);
      const auto train_set = select_records(records, split.train);
      const auto dev_set = select_records(records, split.dev);
      auto vocab = vocab_in.empty()
                       ? build_vocabulary(texts_of(train_set), cfg.max_words, cfg.min_frequency)
                       : Vocabulary::load(vocab_in);
      auto model_cfg = cfg.model;
      model_cfg.encoder.vocab_size = vocab.size();
      auto model = init_model(model_cfg, std::move(vocab), table);
      const auto history = train(model, train_set, dev_set, table, cfg.train);
      save_model(model, model_out);
      if (!history_out.empty()) write_file(history_out, history.to_tsv());
      if (!split_out.empty()) write_file(split_out, split.serialize());
      err << "best epoch " << history.best_epoch << ", dev QWK " << history.best_dev_qwk
          << (history.early_stopped ? " (early stop)" : "") << "\n";
      out << sha256_file(model_out) << "  " << model_out << "\n";
    } else if (eval_cmd->parsed()) {
      const auto records = load_dataset(data_path, table, cfg.columns);
      const auto model = load_model(model_in, table);
      auto report = evaluate(model, subset(records, cfg, which), table);
      report.checkpoint_sha256 = sha256_file(model_in);
      out << (as_json ? render_report_json(report) : render_report_table(report));
    } else if (score_cmd->parsed()) {
      const auto model = load_model(model_in, table);
      const auto& spec = table.at(prompt_id);
      const auto report = score_essay(read_essay(essay_in), spec, model, essay_in);
      out << to_json(report, spec).dump(2) << "\n";
    } else if (fb_cmd->parsed()) {
      const auto model = load_model(model_in, table);
      const auto& spec = table.at(prompt_id);
      const auto text = read_essay(essay_in);
      const auto report = score_essay(text, spec, model, essay_in);
      auto llm = cfg.service.llm;
      if (offline) llm.offline_stub = true;
      FeedbackClient client(llm);
      const auto prompt = build_prompt(report, text, spec, cfg.service.prompt_template);
      const auto fb = client.request_feedback(prompt, report, spec);
      out << ojson{{"report", to_json(report, spec)}, {"feedback", to_json(fb, spec)}}.dump(2) << "\n";
    } else if (serve_cmd->parsed()) {
      auto svc = cfg.service;
      if (host) svc.host = *host;
      if (port) svc.port = *port;
      if (offline) svc.llm.offline_stub = true;
      serve(svc, table, model_in);
    }
  } catch (const Error& e) {
    err << "aes: error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "aes: error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace aes

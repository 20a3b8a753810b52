#include "aes/training.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "aes/error.hpp"
#include "aes/evaluation.hpp"
#include "aes/util.hpp"

namespace aes {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, "train: " + m); };
  // A zero learning rate is accepted: it is the no-update control run.
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (max_epochs < 1) fail("max_epochs must be >= 1");
  if (early_stop_patience < 1 || early_stop_patience > max_epochs) {
    fail("early_stop_patience must lie in [1, max_epochs]");
  }
  if (!(trait_loss_weight > 0.0)) fail("trait_loss_weight must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0 && epsilon > 0.0)) {
    fail("Adam betas must lie in (0, 1) and epsilon must be > 0");
  }
}

std::string TrainingHistory::to_tsv() const {
  std::ostringstream out;
  out.precision(17);
  out << "epoch\ttrain_loss\tdev_qwk\n";
  for (const auto& e : epochs) out << e.epoch << '\t' << e.train_loss << '\t' << e.dev_qwk << '\n';
  return out.str();
}

double score_loss(double overall_pred, double overall_gold, const std::vector<double>& trait_pred,
                  const std::vector<double>& trait_gold, double trait_weight) {
  if (trait_pred.size() != trait_gold.size()) {
    throw Error(ErrorCode::ShapeMismatch, "trait prediction and gold differ in length");
  }
  const double e = overall_pred - overall_gold;
  double loss = e * e;
  if (!trait_pred.empty()) {
    double sum = 0.0;
    for (std::size_t i = 0; i < trait_pred.size(); ++i) {
      const double d = trait_pred[i] - trait_gold[i];
      sum += d * d;
    }
    loss += trait_weight * sum / static_cast<double>(trait_pred.size());
  }
  return loss;
}

std::vector<Example> make_examples(const std::vector<EssayRecord>& records,
                                   const PromptTable& table, const ModelState& model) {
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const auto& spec = table.at(r.prompt_id);
    Example ex;
    ex.seq = encode_text(r.text, model.vocab, model.config.max_content_length);
    ex.prompt = &spec;
    ex.overall = normalize_score(r.overall_score, spec.overall_range);
    for (std::size_t t = 0; t < spec.trait_names.size(); ++t) {
      ex.traits.push_back(normalize_score(r.trait_scores.at(spec.trait_names[t]), spec.trait_ranges[t]));
    }
    out.push_back(std::move(ex));
  }
  return out;
}

namespace {

HeadSet& mutable_set(ModelWeights& w, const std::string& key) { return w.heads.sets.at(key); }

}  // namespace

double example_loss(const ModelState& model, const Example& ex, double trait_weight,
                    ModelWeights* grads, Rng* dropout, bool encoder_grads) {
  const auto& cfg = model.config.encoder;
  const auto key = HeadBank::key_for(*ex.prompt, model.config.head_keying);
  const auto set_it = model.weights.heads.sets.find(key);
  if (set_it == model.weights.heads.sets.end()) {
    throw Error(ErrorCode::UnknownGenre, "model has no head set '" + key + "'");
  }
  const auto& set = set_it->second;

  const Mat x = embed(ex.seq, model.weights.encoder.embeddings);
  const auto run = encoder_forward(x, model.weights.encoder, cfg, ex.seq.pad_mask, dropout);
  const Vec pooled = pool(run.states, ex.seq.pad_mask, cfg.pooling);

  const auto& trait_names = ex.prompt->trait_names;
  std::vector<const Head*> heads{&set.overall};
  std::vector<double> gold{ex.overall};
  for (std::size_t t = 0; t < trait_names.size(); ++t) {
    heads.push_back(&set.traits.at(trait_names[t]));
    gold.push_back(ex.traits[t]);
  }
  std::vector<double> pred;
  for (const auto* h : heads) pred.push_back(logistic(h->weight.row(0).dot(pooled) + h->bias(0, 0)));

  const double loss = score_loss(pred[0], gold[0], {pred.begin() + 1, pred.end()},
                                 {gold.begin() + 1, gold.end()}, trait_weight);
  if (!grads) return loss;

  auto& gset = mutable_set(*grads, key);
  Vec dpooled = Vec::Zero(pooled.size());
  const double trait_scale =
      trait_names.empty() ? 0.0 : trait_weight / static_cast<double>(trait_names.size());
  for (std::size_t i = 0; i < heads.size(); ++i) {
    const double dpred = 2.0 * (pred[i] - gold[i]) * (i == 0 ? 1.0 : trait_scale);
    const double dz = dpred * pred[i] * (1.0 - pred[i]);
    Head& g = i == 0 ? gset.overall : gset.traits.at(trait_names[i - 1]);
    g.weight.row(0) += dz * pooled.transpose();
    g.bias(0, 0) += dz;
    dpooled += dz * heads[i]->weight.row(0).transpose();
  }
  if (encoder_grads) {
    const Mat dh = pool_backward(dpooled, ex.seq.length(), ex.seq.pad_mask, cfg.pooling);
    const Mat dx = encoder_backward(dh, run.cache, model.weights.encoder, cfg, grads->encoder);
    embed_backward(ex.seq, dx, grads->encoder.embeddings);
  }
  return loss;
}

namespace {

std::vector<Mat*> tensors(ModelWeights& w, bool include_encoder) {
  std::vector<Mat*> out;
  if (include_encoder) w.encoder.for_each([&](const std::string&, Mat& m) { out.push_back(&m); });
  w.heads.for_each([&](const std::string&, Mat& m) { out.push_back(&m); });
  return out;
}

double dev_score(const ModelState& model, const std::vector<EssayRecord>& dev,
                 const PromptTable& table) {
  const auto report = evaluate(model, dev, table);
  return 0.5 * (report.macro_qwk + report.mean_trait_qwk);
}

}  // namespace

TrainingHistory train(ModelState& model, const std::vector<EssayRecord>& train_set,
                      const std::vector<EssayRecord>& dev_set, const PromptTable& table,
                      const TrainConfig& cfg) {
  cfg.validate();
  model.config.validate();
  if (train_set.empty() || dev_set.empty()) {
    throw Error(ErrorCode::EmptyInput, "train needs non-empty train and dev sets");
  }
  const auto examples = make_examples(train_set, table, model);

  const bool update_encoder = !cfg.freeze_encoder;
  ModelWeights grads = ModelWeights::zeros_like(model.weights);
  ModelWeights adam_m = ModelWeights::zeros_like(model.weights);
  ModelWeights adam_v = ModelWeights::zeros_like(model.weights);
  auto params = tensors(model.weights, update_encoder);
  auto g = tensors(grads, update_encoder);
  auto m = tensors(adam_m, update_encoder);
  auto v = tensors(adam_v, update_encoder);

  Rng dropout(derive_seed(cfg.seed, 0xd40));
  ModelWeights best = model.weights;
  TrainingHistory history;
  history.best_dev_qwk = -std::numeric_limits<double>::infinity();
  int since_best = 0;
  long step = 0;

  std::vector<std::size_t> order(examples.size());
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffler(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    shuffler.shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const auto end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      grads.for_each([](const std::string&, Mat& t) { t.setZero(); });
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        batch_loss += example_loss(model, examples[order[i]], cfg.trait_loss_weight, &grads,
                                   &dropout, update_encoder);
      }
      if (!std::isfinite(batch_loss)) {
        model.weights = best;
        throw Error(ErrorCode::DivergedLoss, "non-finite loss in epoch " + std::to_string(epoch));
      }
      epoch_loss += batch_loss;
      const double inv = 1.0 / static_cast<double>(end - start);

      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto gk = g[k]->array() * inv;
        m[k]->array() = cfg.beta1 * m[k]->array() + (1.0 - cfg.beta1) * gk;
        v[k]->array() = cfg.beta2 * v[k]->array() + (1.0 - cfg.beta2) * gk.square();
        params[k]->array() -= cfg.learning_rate * (m[k]->array() / c1) /
                              ((v[k]->array() / c2).sqrt() + cfg.epsilon);
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / static_cast<double>(examples.size());
    stats.dev_qwk = dev_score(model, dev_set, table);
    history.epochs.push_back(stats);
    if (stats.dev_qwk > history.best_dev_qwk) {
      history.best_dev_qwk = stats.dev_qwk;
      history.best_epoch = epoch;
      best = model.weights;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      history.early_stopped = true;
      break;
    }
  }
  model.weights = std::move(best);
  model.trained = true;
  return history;
}

TrainingHistory train(ModelState& model, const DatasetSplit& split,
                      const std::vector<EssayRecord>& records, const PromptTable& table,
                      const TrainConfig& cfg) {
  return train(model, select_records(records, split.train), select_records(records, split.dev),
               table, cfg);
}

}  // namespace aes

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aes/tokenizer.hpp"

namespace aes {

class Rng;

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

enum class Pooling { cls, mean };

struct EncoderConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 256;
  int max_positions = 130;
  double dropout_rate = 0.0;  // training only
  std::uint64_t seed = 0;
  Pooling pooling = Pooling::cls;

  int head_dim() const { return d_model / n_heads; }
  void validate() const;
};

struct EmbeddingTables {
  Mat word;      // vocab_size x d_model
  Mat segment;   // 2 x d_model
  Mat position;  // max_positions x d_model
};

// Row-vector biases are stored as 1 x n matrices so every tensor has the
// same type.
struct LayerParams {
  Mat wq, bq, wk, bk, wv, bv, wo, bo;
  Mat w1, b1, w2, b2;
  Mat ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

struct EncoderWeights {
  EmbeddingTables embeddings;
  std::vector<LayerParams> layers;

  // Visits (name, tensor) in a fixed order shared by init, optimizer,
  // checkpoint and gradient checks.
  template <typename F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  static EncoderWeights init(const EncoderConfig& cfg);
  static EncoderWeights zeros_like(const EncoderWeights& w);

 private:
  template <typename Self, typename F>
  static void visit(Self& self, F& f) {
    f(std::string("embeddings.word"), self.embeddings.word);
    f(std::string("embeddings.segment"), self.embeddings.segment);
    f(std::string("embeddings.position"), self.embeddings.position);
    for (std::size_t i = 0; i < self.layers.size(); ++i) {
      auto& l = self.layers[i];
      const auto p = "layers." + std::to_string(i) + ".";
      f(p + "wq", l.wq); f(p + "bq", l.bq);
      f(p + "wk", l.wk); f(p + "bk", l.bk);
      f(p + "wv", l.wv); f(p + "bv", l.bv);
      f(p + "wo", l.wo); f(p + "bo", l.bo);
      f(p + "w1", l.w1); f(p + "b1", l.b1);
      f(p + "w2", l.w2); f(p + "b2", l.b2);
      f(p + "ln1_gain", l.ln1_gain); f(p + "ln1_bias", l.ln1_bias);
      f(p + "ln2_gain", l.ln2_gain); f(p + "ln2_bias", l.ln2_bias);
    }
  }
};

// Xavier-uniform fill from a seeded stream.
void xavier_uniform(Mat& m, Rng& rng);

// Row t = word[token t] + segment[segment t] + position[position t].
Mat embed(const TokenSequence& seq, const EmbeddingTables& tables);
// Scatter-adds row gradients back into the three tables.
void embed_backward(const TokenSequence& seq, const Mat& grad, EmbeddingTables& grads);

struct LayerCache {
  Mat input;
  Mat q, k, v;
  std::vector<Mat> attention;  // per head, rows = queries
  Mat context;
  Mat attn_dropout;  // empty when dropout is off
  Mat ln1_xhat;
  Vec ln1_inv_std;
  Mat y1;
  Mat ff_pre;
  Mat ff_act;
  Mat ff_dropout;
  Mat ln2_xhat;
  Vec ln2_inv_std;
};

struct ForwardCache {
  bool valid = false;
  std::vector<bool> pad_mask;
  std::vector<LayerCache> layers;
};

struct HiddenStates {
  std::vector<Mat> layers;  // output of each layer, (L+2) x d_model

  const Mat& final() const { return layers.back(); }
  Vec cls_vector() const { return final().row(0).transpose(); }
};

struct EncoderRun {
  HiddenStates states;
  ForwardCache cache;
};

// Post-norm transformer encoder. PAD keys receive an additive -1e9 score
// before the softmax, so their attention weight underflows to exactly 0.
// `dropout` is only consulted when cfg.dropout_rate > 0.
EncoderRun encoder_forward(const Mat& embeddings, const EncoderWeights& weights,
                           const EncoderConfig& cfg, const std::vector<bool>& pad_mask,
                           Rng* dropout = nullptr);

// Accumulates parameter gradients into `grads` (shaped like the weights) and
// returns d loss / d embeddings.
Mat encoder_backward(const Mat& upstream, const ForwardCache& cache, const EncoderWeights& weights,
                     const EncoderConfig& cfg, EncoderWeights& grads);

Vec pool(const HiddenStates& states, const std::vector<bool>& pad_mask, Pooling pooling);
Vec pool_cls(const HiddenStates& states);
Mat pool_backward(const Vec& grad, int rows, const std::vector<bool>& pad_mask, Pooling pooling);

// Layer norm with unit gain and zero bias, exposed for property tests.
Mat layer_norm_normalize(const Mat& x);

inline constexpr double kLayerNormEps = 1e-12;
inline constexpr double kMaskedScore = -1e9;

}  // namespace aes

#include "aes/encoder.hpp"

#include <cmath>
#include <numbers>

#include "aes/error.hpp"
#include "aes/util.hpp"

namespace aes {

void EncoderConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, "encoder: " + m); };
  if (vocab_size < 5) fail("vocab_size must cover the specials plus at least one piece");
  if (d_model < 1 || n_layers < 1 || n_heads < 1 || d_ff < 1 || max_positions < 3) {
    fail("all dimensions must be >= 1 and max_positions >= 3");
  }
  if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) fail("dropout_rate must lie in [0, 1)");
}

void xavier_uniform(Mat& m, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-bound, bound);
  }
}

EncoderWeights EncoderWeights::init(const EncoderConfig& cfg) {
  cfg.validate();
  const int d = cfg.d_model;
  EncoderWeights w;
  w.embeddings.word = Mat(cfg.vocab_size, d);
  w.embeddings.segment = Mat(2, d);
  w.embeddings.position = Mat(cfg.max_positions, d);
  w.layers.resize(static_cast<std::size_t>(cfg.n_layers));
  for (auto& l : w.layers) {
    l.wq = Mat(d, d); l.bq = Mat::Zero(1, d);
    l.wk = Mat(d, d); l.bk = Mat::Zero(1, d);
    l.wv = Mat(d, d); l.bv = Mat::Zero(1, d);
    l.wo = Mat(d, d); l.bo = Mat::Zero(1, d);
    l.w1 = Mat(d, cfg.d_ff); l.b1 = Mat::Zero(1, cfg.d_ff);
    l.w2 = Mat(cfg.d_ff, d); l.b2 = Mat::Zero(1, d);
    l.ln1_gain = Mat::Ones(1, d); l.ln1_bias = Mat::Zero(1, d);
    l.ln2_gain = Mat::Ones(1, d); l.ln2_bias = Mat::Zero(1, d);
  }
  Rng rng(derive_seed(cfg.seed, 0x656e63));
  w.for_each([&](const std::string& name, Mat& m) {
    const bool is_bias = name.ends_with("bq") || name.ends_with("bk") || name.ends_with("bv") ||
                         name.ends_with("bo") || name.ends_with("b1") || name.ends_with("b2");
    if (is_bias || name.find(".ln") != std::string::npos) return;
    xavier_uniform(m, rng);
  });
  return w;
}

EncoderWeights EncoderWeights::zeros_like(const EncoderWeights& w) {
  EncoderWeights z = w;
  z.for_each([](const std::string&, Mat& m) { m.setZero(); });
  return z;
}

Mat embed(const TokenSequence& seq, const EmbeddingTables& tables) {
  const auto n = static_cast<std::size_t>(seq.length());
  if (seq.segment_ids.size() != n || seq.position_ids.size() != n) {
    throw Error(ErrorCode::ShapeMismatch, "token, segment and position ids differ in length");
  }
  Mat out(static_cast<Eigen::Index>(n), tables.word.cols());
  for (std::size_t t = 0; t < n; ++t) {
    const int tok = seq.token_ids[t];
    const int seg = seq.segment_ids[t];
    const int pos = seq.position_ids[t];
    if (tok < 0 || tok >= tables.word.rows() || seg < 0 || seg >= tables.segment.rows() ||
        pos < 0 || pos >= tables.position.rows()) {
      throw Error(ErrorCode::IndexOutOfBounds, "embedding lookup out of range at row " +
                                                   std::to_string(t));
    }
    const auto r = static_cast<Eigen::Index>(t);
    out.row(r) = tables.word.row(tok) + tables.segment.row(seg) + tables.position.row(pos);
  }
  return out;
}

void embed_backward(const TokenSequence& seq, const Mat& grad, EmbeddingTables& grads) {
  for (Eigen::Index t = 0; t < grad.rows(); ++t) {
    const auto i = static_cast<std::size_t>(t);
    grads.word.row(seq.token_ids[i]) += grad.row(t);
    grads.segment.row(seq.segment_ids[i]) += grad.row(t);
    grads.position.row(seq.position_ids[i]) += grad.row(t);
  }
}

namespace {

struct Normalized {
  Mat xhat;
  Vec inv_std;
};

Normalized normalize_rows(const Mat& x) {
  Normalized n;
  n.xhat.resize(x.rows(), x.cols());
  n.inv_std.resize(x.rows());
  const double d = static_cast<double>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).sum() / d;
    const auto centered = (x.row(r).array() - mean).matrix();
    const double var = centered.squaredNorm() / d;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    n.xhat.row(r) = centered * inv;
    n.inv_std(r) = inv;
  }
  return n;
}

Mat affine_rows(const Mat& xhat, const Mat& gain, const Mat& bias) {
  Mat y = xhat.array().rowwise() * gain.row(0).array();
  y.rowwise() += bias.row(0);
  return y;
}

// d loss / d x for y = gain * xhat + bias; accumulates gain/bias gradients.
Mat layer_norm_backward(const Mat& dy, const Mat& xhat, const Vec& inv_std, const Mat& gain,
                        Mat& dgain, Mat& dbias) {
  dgain += (dy.array() * xhat.array()).colwise().sum().matrix();
  dbias += dy.colwise().sum();
  const Mat dxhat = dy.array().rowwise() * gain.row(0).array();
  const double d = static_cast<double>(dy.cols());
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_dxhat = dxhat.row(r).sum() / d;
    const double mean_dxhat_xhat = dxhat.row(r).dot(xhat.row(r)) / d;
    dx.row(r) = inv_std(r) * (dxhat.row(r).array() - mean_dxhat -
                              xhat.row(r).array() * mean_dxhat_xhat).matrix();
  }
  return dx;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Mat add_bias(Mat m, const Mat& bias) {
  m.rowwise() += bias.row(0);
  return m;
}

Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  Mat mask(rows, cols);
  const double keep = 1.0 - rate;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) mask(i, j) = rng.uniform() < keep ? 1.0 / keep : 0.0;
  }
  return mask;
}

void check_finite(const Mat& m, const char* where, std::size_t layer) {
  if (!m.allFinite()) {
    throw Error(ErrorCode::NonFiniteActivation,
                std::string("non-finite activation in ") + where + " of layer " + std::to_string(layer));
  }
}

}  // namespace

Mat layer_norm_normalize(const Mat& x) { return normalize_rows(x).xhat; }

EncoderRun encoder_forward(const Mat& embeddings, const EncoderWeights& weights,
                           const EncoderConfig& cfg, const std::vector<bool>& pad_mask,
                           Rng* dropout) {
  const auto rows = embeddings.rows();
  if (embeddings.cols() != cfg.d_model || static_cast<std::size_t>(rows) != pad_mask.size() ||
      rows > cfg.max_positions || rows < 1) {
    throw Error(ErrorCode::ShapeMismatch, "encoder input is " + std::to_string(rows) + "x" +
                                              std::to_string(embeddings.cols()) +
                                              " with pad mask of " +
                                              std::to_string(pad_mask.size()));
  }
  if (weights.layers.size() != static_cast<std::size_t>(cfg.n_layers)) {
    throw Error(ErrorCode::ShapeMismatch, "layer count disagrees with config");
  }
  const bool use_dropout = cfg.dropout_rate > 0.0 && dropout != nullptr;
  const int heads = cfg.n_heads;
  const int dk = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  Eigen::RowVectorXd key_bias(rows);
  for (Eigen::Index j = 0; j < rows; ++j) key_bias(j) = pad_mask[static_cast<std::size_t>(j)] ? 0.0 : kMaskedScore;

  EncoderRun run;
  run.cache.pad_mask = pad_mask;
  run.cache.layers.resize(weights.layers.size());
  Mat x = embeddings;
  for (std::size_t li = 0; li < weights.layers.size(); ++li) {
    const auto& p = weights.layers[li];
    auto& c = run.cache.layers[li];
    c.input = x;
    c.q = add_bias(x * p.wq, p.bq);
    c.k = add_bias(x * p.wk, p.bk);
    c.v = add_bias(x * p.wv, p.bv);
    c.context.resize(rows, cfg.d_model);
    c.attention.resize(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      const auto qh = c.q.middleCols(h * dk, dk);
      const auto kh = c.k.middleCols(h * dk, dk);
      const auto vh = c.v.middleCols(h * dk, dk);
      Mat scores = (qh * kh.transpose()) * scale;
      scores.rowwise() += key_bias;
      for (Eigen::Index r = 0; r < rows; ++r) {
        const double m = scores.row(r).maxCoeff();
        // scalar exp: the vectorized one clamps and leaves masked keys a denormal weight
        scores.row(r) = (scores.row(r).array() - m).unaryExpr([](double v) { return std::exp(v); }).matrix();
        scores.row(r) /= scores.row(r).sum();
      }
      c.context.middleCols(h * dk, dk) = scores * vh;
      c.attention[static_cast<std::size_t>(h)] = std::move(scores);
    }
    Mat attn_out = add_bias(c.context * p.wo, p.bo);
    if (use_dropout) {
      c.attn_dropout = dropout_mask(rows, cfg.d_model, cfg.dropout_rate, *dropout);
      attn_out.array() *= c.attn_dropout.array();
    }
    auto ln1 = normalize_rows(x + attn_out);
    c.y1 = affine_rows(ln1.xhat, p.ln1_gain, p.ln1_bias);
    c.ln1_xhat = std::move(ln1.xhat);
    c.ln1_inv_std = std::move(ln1.inv_std);

    c.ff_pre = add_bias(c.y1 * p.w1, p.b1);
    c.ff_act = c.ff_pre.unaryExpr([](double v) { return gelu(v); });
    Mat ff_out = add_bias(c.ff_act * p.w2, p.b2);
    if (use_dropout) {
      c.ff_dropout = dropout_mask(rows, cfg.d_model, cfg.dropout_rate, *dropout);
      ff_out.array() *= c.ff_dropout.array();
    }
    auto ln2 = normalize_rows(c.y1 + ff_out);
    x = affine_rows(ln2.xhat, p.ln2_gain, p.ln2_bias);
    c.ln2_xhat = std::move(ln2.xhat);
    c.ln2_inv_std = std::move(ln2.inv_std);
    check_finite(x, "output", li);
    run.states.layers.push_back(x);
  }
  run.cache.valid = true;
  return run;
}

Mat encoder_backward(const Mat& upstream, const ForwardCache& cache, const EncoderWeights& weights,
                     const EncoderConfig& cfg, EncoderWeights& grads) {
  if (!cache.valid || cache.layers.size() != weights.layers.size()) {
    throw Error(ErrorCode::MissingCache, "encoder_backward needs the cache of a forward pass");
  }
  const auto rows = static_cast<Eigen::Index>(cache.pad_mask.size());
  if (upstream.rows() != rows || upstream.cols() != cfg.d_model) {
    throw Error(ErrorCode::ShapeMismatch, "upstream gradient shape disagrees with the forward pass");
  }
  const int dk = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  Mat dx = upstream;
  for (std::size_t li = weights.layers.size(); li-- > 0;) {
    const auto& p = weights.layers[li];
    const auto& c = cache.layers[li];
    auto& g = grads.layers[li];

    // Feed-forward block.
    Mat dr2 = layer_norm_backward(dx, c.ln2_xhat, c.ln2_inv_std, p.ln2_gain, g.ln2_gain, g.ln2_bias);
    Mat dy1 = dr2;
    Mat dff = dr2;
    if (c.ff_dropout.size() > 0) dff.array() *= c.ff_dropout.array();
    g.w2 += c.ff_act.transpose() * dff;
    g.b2 += dff.colwise().sum();
    Mat dpre = dff * p.w2.transpose();
    dpre.array() *= c.ff_pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
    g.w1 += c.y1.transpose() * dpre;
    g.b1 += dpre.colwise().sum();
    dy1 += dpre * p.w1.transpose();

    // Attention block.
    Mat dr1 = layer_norm_backward(dy1, c.ln1_xhat, c.ln1_inv_std, p.ln1_gain, g.ln1_gain, g.ln1_bias);
    Mat dinput = dr1;
    Mat dattn = dr1;
    if (c.attn_dropout.size() > 0) dattn.array() *= c.attn_dropout.array();
    g.wo += c.context.transpose() * dattn;
    g.bo += dattn.colwise().sum();
    const Mat dcontext = dattn * p.wo.transpose();

    Mat dq(rows, cfg.d_model), dkm(rows, cfg.d_model), dv(rows, cfg.d_model);
    for (int h = 0; h < cfg.n_heads; ++h) {
      const auto& a = c.attention[static_cast<std::size_t>(h)];
      const auto dch = dcontext.middleCols(h * dk, dk);
      const Mat da = dch * c.v.middleCols(h * dk, dk).transpose();
      dv.middleCols(h * dk, dk) = a.transpose() * dch;
      Mat ds = a.array() * (da.array().colwise() - (da.array() * a.array()).rowwise().sum());
      ds *= scale;
      dq.middleCols(h * dk, dk) = ds * c.k.middleCols(h * dk, dk);
      dkm.middleCols(h * dk, dk) = ds.transpose() * c.q.middleCols(h * dk, dk);
    }
    g.wq += c.input.transpose() * dq;
    g.bq += dq.colwise().sum();
    g.wk += c.input.transpose() * dkm;
    g.bk += dkm.colwise().sum();
    g.wv += c.input.transpose() * dv;
    g.bv += dv.colwise().sum();
    dinput += dq * p.wq.transpose() + dkm * p.wk.transpose() + dv * p.wv.transpose();
    dx = std::move(dinput);
  }
  return dx;
}

Vec pool_cls(const HiddenStates& states) {
  if (states.layers.empty() || states.final().rows() == 0) {
    throw Error(ErrorCode::InvalidArgument, "pool_cls on empty hidden states");
  }
  return states.cls_vector();
}

Vec pool(const HiddenStates& states, const std::vector<bool>& pad_mask, Pooling pooling) {
  if (pooling == Pooling::cls) return pool_cls(states);
  const auto& h = states.final();
  Vec sum = Vec::Zero(h.cols());
  int count = 0;
  for (Eigen::Index r = 0; r < h.rows(); ++r) {
    if (pad_mask[static_cast<std::size_t>(r)]) {
      sum += h.row(r).transpose();
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

Mat pool_backward(const Vec& grad, int rows, const std::vector<bool>& pad_mask, Pooling pooling) {
  Mat out = Mat::Zero(rows, grad.size());
  if (pooling == Pooling::cls) {
    out.row(0) = grad.transpose();
    return out;
  }
  int count = 0;
  for (bool m : pad_mask) count += m ? 1 : 0;
  for (int r = 0; r < rows; ++r) {
    if (pad_mask[static_cast<std::size_t>(r)]) out.row(r) = grad.transpose() / static_cast<double>(count);
  }
  return out;
}

}  // namespace aes

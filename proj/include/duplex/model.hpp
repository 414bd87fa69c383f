#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "duplex/decoder_mask.hpp"
#include "duplex/diagnostics.hpp"
#include "duplex/errors.hpp"
#include "duplex/masking.hpp"
#include "duplex/params.hpp"
#include "duplex/represent.hpp"
#include "duplex/rng.hpp"
#include "duplex/tape.hpp"
#include "duplex/vocab.hpp"

namespace duplex {

struct ModelConfig {
  int n_layers = 2;
  int dim = 32;
  int n_heads = 4;
  int dec_heads = 1;
  int max_len = 128;
  int ffn_dim = 0;  // 0 -> 4 * dim
  int vocab_size = 0;
  int dense_dim = 16;  // d' of the [CLS] projection

  int ffn() const { return ffn_dim > 0 ? ffn_dim : 4 * dim; }

  void validate() const {
    if (n_layers < 1) throw DataError("model config: n_layers must be >= 1");
    if (dim < 1) throw DataError("model config: dim must be >= 1");
    if (n_heads < 1 || dim % n_heads != 0) {
      throw DataError("model config: dim must be divisible by n_heads");
    }
    if (dec_heads < 1 || dim % dec_heads != 0) {
      throw DataError("model config: dim must be divisible by dec_heads");
    }
    if (max_len < 2) throw DataError("model config: max_len must be >= 2");
    if (vocab_size <= Vocab::kNumSpecials) {
      throw DataError("model config: vocab_size must exceed the special tokens");
    }
    if (dense_dim < 1 || dense_dim > dim) {
      throw DataError("model config: dense_dim must lie in [1, dim]");
    }
  }

  // Desk-scale defaults used throughout the tests.
  static ModelConfig desk(int vocab) {
    ModelConfig c;
    c.vocab_size = vocab;
    return c;
  }

  // Full-scale profile: 12 layers, 768 hidden, BERT-base vocabulary, with
  // the [CLS] projection reduced to 384.
  static ModelConfig paper() {
    ModelConfig c;
    c.n_layers = 12;
    c.dim = 768;
    c.n_heads = 12;
    c.dec_heads = 1;
    c.max_len = 512;
    c.ffn_dim = 3072;
    c.vocab_size = 30522;
    c.dense_dim = 384;
    return c;
  }
};

template <typename Real>
struct Model {
  ModelConfig cfg;
  ParamStore<Real> params;

  // Weights ~ N(0, 0.02), layer-norm gains 1, biases 0. Parameter creation
  // order is fixed so a seed pins the full initialization.
  static Model init(const ModelConfig& cfg, Rng& rng, double init_std = 0.02) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    auto normal = [&](int r, int c) {
      Tensor<Real> t(r, c);
      for (auto& v : t.values) v = Real(rng.normal(0.0, init_std));
      return t;
    };
    auto zeros = [](int r, int c) { return Tensor<Real>(r, c); };
    auto ones = [](int r, int c) { return Tensor<Real>(r, c, Real(1)); };

    auto& p = m.params;
    const int d = cfg.dim;
    p.add("tok_emb", normal(cfg.vocab_size, d));
    p.add("pos_emb", normal(cfg.max_len, d));
    p.add("emb_ln.g", ones(1, d));
    p.add("emb_ln.b", zeros(1, d));
    for (int l = 0; l < cfg.n_layers; ++l) {
      const std::string pre = "enc" + std::to_string(l) + ".";
      p.add(pre + "wq", normal(d, d));
      p.add(pre + "bq", zeros(1, d));
      p.add(pre + "wk", normal(d, d));
      p.add(pre + "bk", zeros(1, d));
      p.add(pre + "wv", normal(d, d));
      p.add(pre + "bv", zeros(1, d));
      p.add(pre + "wo", normal(d, d));
      p.add(pre + "bo", zeros(1, d));
      p.add(pre + "ln1.g", ones(1, d));
      p.add(pre + "ln1.b", zeros(1, d));
      p.add(pre + "w1", normal(d, cfg.ffn()));
      p.add(pre + "b1", zeros(1, cfg.ffn()));
      p.add(pre + "w2", normal(cfg.ffn(), d));
      p.add(pre + "b2", zeros(1, d));
      p.add(pre + "ln2.g", ones(1, d));
      p.add(pre + "ln2.b", zeros(1, d));
    }
    p.add("mlm.bias", zeros(1, cfg.vocab_size));
    p.add("dec.wq", normal(d, d));
    p.add("dec.wk", normal(d, d));
    p.add("dec.wv", normal(d, d));
    p.add("dec.ln.g", ones(1, d));
    p.add("dec.ln.b", zeros(1, d));
    p.add("dec.bias", zeros(1, cfg.vocab_size));
    p.add("lpu.w", normal(d, cfg.vocab_size));
    p.add("cls_proj.w", normal(d, cfg.dense_dim));
    return m;
  }
};

template <typename Real>
struct EncoderOutput {
  using Id = typename Tape<Real>::Id;
  Id all = -1;  // L x d hidden states
  Id cls = -1;  // 1 x d, position 0
  Id ot = -1;   // (L-1) x d, positions 1..L-1
  int length = 0;
};

namespace detail {

// Multi-head scaled dot-product attention. Inputs already hold Q/K/V
// projections (L x d each); heads are column slices. The optional additive
// mask applies to every head.
template <typename Real>
typename Tape<Real>::Id attention_heads(Tape<Real>& tape, typename Tape<Real>::Id q,
                                        typename Tape<Real>::Id k, typename Tape<Real>::Id v,
                                        int n_heads, const Tensor<Real>* mask) {
  const int d = tape.value(q).cols();
  const int hd = d / n_heads;
  const Real inv_sqrt = Real(1) / Real(std::sqrt(static_cast<double>(hd)));
  std::vector<typename Tape<Real>::Id> outs;
  outs.reserve(n_heads);
  for (int h = 0; h < n_heads; ++h) {
    auto qh = tape.slice_cols(q, h * hd, (h + 1) * hd);
    auto kh = tape.slice_cols(k, h * hd, (h + 1) * hd);
    auto vh = tape.slice_cols(v, h * hd, (h + 1) * hd);
    auto logits = tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt);
    auto probs = mask ? tape.softmax_rows_masked(logits, *mask) : tape.softmax_rows(logits);
    outs.push_back(tape.matmul(probs, vh));
  }
  return n_heads == 1 ? outs[0] : tape.concat_cols(outs);
}

}  // namespace detail

// Transformer encoder over a token id sequence (ids[0] must be [CLS]).
template <typename Real>
EncoderOutput<Real> encode(Tape<Real>& tape, BoundParams<Real>& bp, const ModelConfig& cfg,
                           const std::vector<int>& ids) {
  const int length = static_cast<int>(ids.size());
  if (length < 1) throw DataError("encode: empty input");
  if (length > cfg.max_len) {
    throw DataError("encode: input length " + std::to_string(length) + " exceeds max_len " +
                    std::to_string(cfg.max_len));
  }
  if (ids[0] != Vocab::kCls) throw DataError("encode: sequence must start with [CLS]");
  for (int id : ids) {
    if (id < 0 || id >= cfg.vocab_size) {
      throw DataError("encode: token id " + std::to_string(id) + " out of range");
    }
  }

  auto x = tape.add(tape.gather_rows(bp.use("tok_emb"), ids),
                    tape.slice_rows(bp.use("pos_emb"), 0, length));
  x = tape.layer_norm(x, bp.use("emb_ln.g"), bp.use("emb_ln.b"));

  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string pre = "enc" + std::to_string(l) + ".";
    auto q = tape.add_rowvec(tape.matmul(x, bp.use(pre + "wq")), bp.use(pre + "bq"));
    auto k = tape.add_rowvec(tape.matmul(x, bp.use(pre + "wk")), bp.use(pre + "bk"));
    auto v = tape.add_rowvec(tape.matmul(x, bp.use(pre + "wv")), bp.use(pre + "bv"));
    auto heads = detail::attention_heads(tape, q, k, v, cfg.n_heads, (const Tensor<Real>*)nullptr);
    auto attn = tape.add_rowvec(tape.matmul(heads, bp.use(pre + "wo")), bp.use(pre + "bo"));
    x = tape.layer_norm(tape.add(x, attn), bp.use(pre + "ln1.g"), bp.use(pre + "ln1.b"));
    auto f = tape.add_rowvec(tape.matmul(x, bp.use(pre + "w1")), bp.use(pre + "b1"));
    f = tape.gelu(f);
    f = tape.add_rowvec(tape.matmul(f, bp.use(pre + "w2")), bp.use(pre + "b2"));
    x = tape.layer_norm(tape.add(x, f), bp.use(pre + "ln2.g"), bp.use(pre + "ln2.b"));
  }

  EncoderOutput<Real> out;
  out.all = x;
  out.cls = tape.slice_rows(x, 0, 1);
  out.ot = tape.slice_rows(x, 1, length);
  out.length = length;
  return out;
}

// Mean cross-entropy over the encoder view's masked positions, predicting the
// original ids through the tied token-embedding projection. Zero masked
// positions yield a constant 0 loss and a warning.
template <typename Real>
typename Tape<Real>::Id mlm_loss(Tape<Real>& tape, BoundParams<Real>& bp, const ModelConfig& cfg,
                                 const EncoderOutput<Real>& enc, const MaskedSequence& view) {
  (void)cfg;
  if (view.masked_positions.empty()) {
    warn("mlm_loss: no masked positions, loss is 0");
    return tape.constant(Tensor<Real>::scalar(Real(0)));
  }
  auto hidden = tape.gather_rows(enc.all, view.masked_positions);
  auto logits = tape.add_rowvec(tape.matmul(hidden, tape.transpose(bp.use("tok_emb"))),
                                bp.use("mlm.bias"));
  std::vector<std::vector<int>> targets;
  targets.reserve(view.original_at_masked.size());
  for (int id : view.original_at_masked) targets.push_back({id});
  return tape.cross_entropy_rows(logits, targets);
}

// Query/context stream pair feeding the one-layer decoder:
//   H1 row i = cls + pos_i            (all rows)
//   H2 row 0 = cls, row i>=1 = tok_emb[dec ids][i] + pos_i
// Position embeddings are shared with the encoder.
template <typename Real>
struct DecoderStreams {
  using Id = typename Tape<Real>::Id;
  Id h1 = -1;
  Id h2 = -1;
  int length = 0;
};

template <typename Real>
DecoderStreams<Real> build_streams(Tape<Real>& tape, BoundParams<Real>& bp, const ModelConfig& cfg,
                                   typename Tape<Real>::Id cls, const MaskedSequence& dec_view) {
  const int length = dec_view.length();
  const auto& cv = tape.value(cls);
  if (cv.rows() != 1 || cv.cols() != cfg.dim) {
    throw DataError("build_streams: cls must be 1x" + std::to_string(cfg.dim) + ", got " +
                    cv.shape_str());
  }
  if (length < 2) throw DataError("build_streams: decoder view needs ordinary tokens");
  if (length > cfg.max_len) throw DataError("build_streams: decoder view exceeds max_len");

  DecoderStreams<Real> s;
  s.length = length;
  auto pos = tape.slice_rows(bp.use("pos_emb"), 0, length);
  s.h1 = tape.add(tape.repeat_rows(cls, length), pos);
  std::vector<int> tail_ids(dec_view.ids.begin() + 1, dec_view.ids.end());
  auto tail = tape.add(tape.gather_rows(bp.use("tok_emb"), tail_ids),
                       tape.slice_rows(bp.use("pos_emb"), 1, length));
  s.h2 = tape.concat_rows(cls, tail);
  return s;
}

// A = softmax(Q K^T / sqrt(d_head) + M) V with Q from the query stream and
// K, V from the context stream. No output projection and no feed-forward:
// the decoder is a single attention layer.
template <typename Real>
typename Tape<Real>::Id decode_attention(Tape<Real>& tape, BoundParams<Real>& bp,
                                         const ModelConfig& cfg, const DecoderStreams<Real>& s,
                                         const AttentionMask& mask) {
  if (mask.size != s.length) {
    throw DataError("decode_attention: mask size " + std::to_string(mask.size) +
                    " != stream length " + std::to_string(s.length));
  }
  auto q = tape.matmul(s.h1, bp.use("dec.wq"));
  auto k = tape.matmul(s.h2, bp.use("dec.wk"));
  auto v = tape.matmul(s.h2, bp.use("dec.wv"));
  const Tensor<Real> add_mask = mask.template additive<Real>();
  return detail::attention_heads(tape, q, k, v, cfg.dec_heads, &add_mask);
}

// Mean cross-entropy over positions 1..L-1 predicting the ORIGINAL token at
// each position from layer_norm(A_i + H1_i) through the tied embedding.
template <typename Real>
typename Tape<Real>::Id cls_decoding_loss(Tape<Real>& tape, BoundParams<Real>& bp,
                                          const ModelConfig& cfg,
                                          typename Tape<Real>::Id attn,
                                          const DecoderStreams<Real>& s,
                                          const std::vector<int>& original_ids) {
  (void)cfg;
  if (static_cast<int>(original_ids.size()) != s.length) {
    throw DataError("cls_decoding_loss: original length " + std::to_string(original_ids.size()) +
                    " != stream length " + std::to_string(s.length));
  }
  auto res = tape.slice_rows(tape.add(attn, s.h1), 1, s.length);
  res = tape.layer_norm(res, bp.use("dec.ln.g"), bp.use("dec.ln.b"));
  auto logits = tape.add_rowvec(tape.matmul(res, tape.transpose(bp.use("tok_emb"))),
                                bp.use("dec.bias"));
  std::vector<std::vector<int>> targets;
  targets.reserve(s.length - 1);
  for (int i = 1; i < s.length; ++i) targets.push_back({original_ids[i]});
  return tape.cross_entropy_rows(logits, targets);
}

// Convenience wrapper for the whole [CLS]-decoding branch.
template <typename Real>
typename Tape<Real>::Id cls_decoder_loss(Tape<Real>& tape, BoundParams<Real>& bp,
                                         const ModelConfig& cfg, typename Tape<Real>::Id cls,
                                         const MaskedSequence& dec_view,
                                         const std::vector<int>& original_ids,
                                         const AttentionMask& mask) {
  auto streams = build_streams(tape, bp, cfg, cls, dec_view);
  auto attn = decode_attention(tape, bp, cfg, streams, mask);
  return cls_decoding_loss(tape, bp, cfg, attn, streams, original_ids);
}

// Ordinary-token embeddings -> vocabulary space, one |V|-dim row per token.
template <typename Real>
typename Tape<Real>::Id project_vocab(Tape<Real>& tape, BoundParams<Real>& bp,
                                      typename Tape<Real>::Id ot_rows) {
  if (tape.value(ot_rows).rows() < 1) {
    throw DataError("project_vocab: no unmasked ordinary tokens");
  }
  return tape.matmul(ot_rows, bp.use("lpu.w"));
}

// Token-wise max over the projected activations -> 1 x |V|.
template <typename Real>
typename Tape<Real>::Id max_pool_vocab(Tape<Real>& tape, typename Tape<Real>::Id activations) {
  if (tape.value(activations).rows() < 1) {
    throw DataError("max_pool_vocab: empty activation list");
  }
  return tape.max_over_rows(activations);
}

// Unique ordinary tokens of the ORIGINAL sequence; specials never count.
inline std::vector<int> bow_targets(const std::vector<int>& original_ids) {
  std::set<int> uniq;
  for (int id : original_ids) {
    if (id >= Vocab::kNumSpecials) uniq.insert(id);
  }
  return {uniq.begin(), uniq.end()};
}

// Softmax cross-entropy of the pooled activation against the bag of unique
// original tokens, averaged over the bag.
template <typename Real>
typename Tape<Real>::Id bow_loss(Tape<Real>& tape, typename Tape<Real>::Id pooled,
                                 const std::vector<int>& original_ids) {
  const auto targets = bow_targets(original_ids);
  if (targets.empty()) throw DataError("bow_loss: input has no ordinary tokens");
  return tape.cross_entropy_rows(pooled, {targets});
}

struct LossWeights {
  double mlm = 1.0;
  double dec = 1.0;
  double bow = 1.0;
};

// Weighted sum of the three pre-training terms (all weights default to 1).
template <typename Real>
typename Tape<Real>::Id joint_loss(Tape<Real>& tape, typename Tape<Real>::Id l_mlm,
                                   typename Tape<Real>::Id l_dec, typename Tape<Real>::Id l_bow,
                                   const LossWeights& w = {}) {
  auto total = tape.scale(l_mlm, Real(w.mlm));
  total = tape.add(total, tape.scale(l_dec, Real(w.dec)));
  total = tape.add(total, tape.scale(l_bow, Real(w.bow)));
  return total;
}

// Inference-time duplex representation: no masking, every ordinary token
// feeds the vocabulary projection. Deterministic.
template <typename Real>
Representation represent(const Model<Real>& model, const std::vector<int>& ids,
                         const ReprConfig& rc) {
  rc.validate();
  if (rc.dense_dim != model.cfg.dense_dim) {
    throw DataError("represent: config dense_dim " + std::to_string(rc.dense_dim) +
                    " != model dense_dim " + std::to_string(model.cfg.dense_dim));
  }
  if (rc.vocab_size != model.cfg.vocab_size) {
    throw DataError("represent: config vocab_size != model vocab_size");
  }
  if (static_cast<int>(ids.size()) < 2) {
    throw DataError("represent: empty input (no ordinary tokens)");
  }
  Tape<Real> tape;
  BoundParams<Real> bp(tape, model.params, false);
  auto enc = encode(tape, bp, model.cfg, ids);
  auto dense = tape.matmul(enc.cls, bp.use("cls_proj.w"));
  auto pooled = max_pool_vocab(tape, project_vocab(tape, bp, enc.ot));

  Representation rep;
  rep.dense.reserve(rc.dense_dim);
  for (Real v : tape.value(dense).values) rep.dense.push_back(static_cast<float>(v));
  std::vector<float> mu;
  mu.reserve(model.cfg.vocab_size);
  for (Real v : tape.value(pooled).values) mu.push_back(static_cast<float>(v));
  rep.sparse = top_k_sparse(mu, rc.sparse_k);
  return rep;
}

}  // namespace duplex

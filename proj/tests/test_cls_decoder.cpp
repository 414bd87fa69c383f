#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "duplex/decoder_mask.hpp"
#include "duplex/gradcheck.hpp"
#include "duplex/model.hpp"

using namespace duplex;

namespace {

ModelConfig tiny_config(int vocab = 50, int dim = 8, int dec_heads = 1) {
  ModelConfig c;
  c.n_layers = 1;
  c.dim = dim;
  c.n_heads = 2;
  c.dec_heads = dec_heads;
  c.max_len = 16;
  c.vocab_size = vocab;
  c.dense_dim = dim / 2;
  return c;
}

MaskedSequence decoder_view(std::vector<int> ids, std::vector<int> positions) {
  MaskedSequence v;
  v.role = ViewRole::decoder;
  v.ids = std::move(ids);
  for (int p : positions) {
    v.masked_positions.push_back(p);
    v.original_at_masked.push_back(v.ids[p]);
    v.ids[p] = Vocab::kMask;
  }
  return v;
}

// Plain-loop reference for A = softmax(Q K^T / sqrt(dh) + M) V per head.
Tensor<double> attention_oracle(const Tensor<double>& h1, const Tensor<double>& h2,
                                const Tensor<double>& wq, const Tensor<double>& wk,
                                const Tensor<double>& wv, const AttentionMask& mask,
                                int n_heads) {
  const int length = h1.rows();
  const int d = h1.cols();
  const int hd = d / n_heads;
  auto mm = [](const Tensor<double>& a, const Tensor<double>& b) {
    Tensor<double> out(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i)
      for (int k = 0; k < a.cols(); ++k)
        for (int j = 0; j < b.cols(); ++j) out.at(i, j) += a.at(i, k) * b.at(k, j);
    return out;
  };
  Tensor<double> q = mm(h1, wq), k = mm(h2, wk), v = mm(h2, wv);
  Tensor<double> out(length, d);
  for (int h = 0; h < n_heads; ++h) {
    for (int i = 0; i < length; ++i) {
      std::vector<double> logits(length);
      for (int j = 0; j < length; ++j) {
        double s = 0;
        for (int c = 0; c < hd; ++c) s += q.at(i, h * hd + c) * k.at(j, h * hd + c);
        logits[j] = s / std::sqrt(double(hd)) + (mask.is_visible(i, j) ? 0.0 : kMaskedLogit);
      }
      double mx = logits[0];
      for (double l : logits) mx = std::max(mx, l);
      double z = 0;
      for (double& l : logits) {
        l = std::exp(l - mx);
        z += l;
      }
      for (int j = 0; j < length; ++j) {
        for (int c = 0; c < hd; ++c) out.at(i, h * hd + c) += logits[j] / z * v.at(j, h * hd + c);
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("mask matrix invariants and determinism") {
  Rng meta(99);
  for (int trial = 0; trial < 200; ++trial) {
    const int length = 3 + meta.below_int(12);
    const int n_visible = 1 + meta.below_int(length - 2);
    const uint64_t seed = meta.next_u64();
    Rng r1(seed), r2(seed);
    auto m1 = generate_mask_matrix(length, n_visible, r1);
    auto m2 = generate_mask_matrix(length, n_visible, r2);
    CHECK(m1.visible == m2.visible);
    for (int i = 0; i < length; ++i) {
      CHECK_FALSE(m1.is_visible(i, i));
      if (i != 0) CHECK(m1.is_visible(i, 0));
      int visible = 0;
      for (int j = 0; j < length; ++j) visible += m1.is_visible(i, j) ? 1 : 0;
      CHECK(visible >= 1);
      CHECK(visible <= n_visible + 1);
    }
  }
}

TEST_CASE("mask matrix matches the frozen reference at L=4, seed 7, n_visible=1") {
  Rng rng(7);
  auto m = generate_mask_matrix(4, 1, rng);
  const std::vector<std::string> expected = {"0100", "1000", "1000", "1000"};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(m.is_visible(i, j) == (expected[i][j] == '1'));
}

TEST_CASE("mask matrix bounds") {
  Rng rng(1);
  CHECK_THROWS_AS(generate_mask_matrix(2, 1, rng), DataError);
  CHECK_THROWS_AS(generate_mask_matrix(5, 0, rng), DataError);
  CHECK_THROWS_AS(generate_mask_matrix(5, 4, rng), DataError);
  CHECK_NOTHROW(generate_mask_matrix(5, 3, rng));
  CHECK(default_visible_count(4) == 1);
  CHECK(default_visible_count(10) == 4);
  CHECK(default_visible_count(3) == 1);
}

TEST_CASE("stream pair holds the contract exactly") {
  ModelConfig cfg = tiny_config();
  Rng rng(3);
  auto model = Model<double>::init(cfg, rng, 0.5);
  auto view = decoder_view({Vocab::kCls, 7, 8, 9}, {2});

  Tape<double> tape;
  BoundParams<double> bp(tape, model.params, false);
  Tensor<double> cls_val(1, cfg.dim);
  for (int c = 0; c < cfg.dim; ++c) cls_val.at(0, c) = 0.1 * (c + 1);
  auto cls = tape.leaf(cls_val);
  auto s = build_streams(tape, bp, cfg, cls, view);

  const auto& h1 = tape.value(s.h1);
  const auto& h2 = tape.value(s.h2);
  const auto& pos = model.params.at("pos_emb");
  const auto& emb = model.params.at("tok_emb");
  REQUIRE(h1.rows() == 4);
  REQUIRE(h2.rows() == 4);
  for (int i = 0; i < 4; ++i) {
    for (int c = 0; c < cfg.dim; ++c) {
      CHECK(h1.at(i, c) == cls_val.at(0, c) + pos.at(i, c));
    }
  }
  for (int c = 0; c < cfg.dim; ++c) {
    CHECK(h2.at(0, c) == cls_val.at(0, c));  // no position added at slot 0
    CHECK(h2.at(1, c) == emb.at(7, c) + pos.at(1, c));
    CHECK(h2.at(2, c) == emb.at(Vocab::kMask, c) + pos.at(2, c));
    CHECK(h2.at(3, c) == emb.at(9, c) + pos.at(3, c));
  }
}

TEST_CASE("zero cls and zero embeddings make H1 equal the position embeddings") {
  ModelConfig cfg = tiny_config();
  Rng rng(3);
  auto model = Model<double>::init(cfg, rng);
  for (auto& v : model.params.at("tok_emb").values) v = 0.0;
  Tape<double> tape;
  BoundParams<double> bp(tape, model.params, false);
  auto cls = tape.leaf(Tensor<double>(1, cfg.dim));
  auto view = decoder_view({Vocab::kCls, 5, 6}, {1});
  auto s = build_streams(tape, bp, cfg, cls, view);
  const auto& pos = model.params.at("pos_emb");
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < cfg.dim; ++c) CHECK(tape.value(s.h1).at(i, c) == pos.at(i, c));
}

TEST_CASE("stream length mismatch is rejected") {
  ModelConfig cfg = tiny_config();
  Rng rng(3);
  auto model = Model<double>::init(cfg, rng);
  Tape<double> tape;
  BoundParams<double> bp(tape, model.params, false);
  auto bad_cls = tape.leaf(Tensor<double>(1, cfg.dim + 1));
  auto view = decoder_view({Vocab::kCls, 5, 6}, {1});
  CHECK_THROWS_AS(build_streams(tape, bp, cfg, bad_cls, view), DataError);
  auto cls = tape.leaf(Tensor<double>(1, cfg.dim));
  MaskedSequence lone;
  lone.ids = {Vocab::kCls};
  CHECK_THROWS_AS(build_streams(tape, bp, cfg, cls, lone), DataError);
}

TEST_CASE("single visible position per row routes attention to that V row") {
  ModelConfig cfg = tiny_config(20, 6);
  Rng rng(5);
  auto model = Model<double>::init(cfg, rng, 0.5);
  auto view = decoder_view({Vocab::kCls, 7, 8, 9}, {1});

  AttentionMask mask = AttentionMask::all_masked(4);
  const std::vector<int> pick = {2, 3, 0, 1};
  for (int i = 0; i < 4; ++i) mask.set_visible(i, pick[i], true);

  Tape<double> tape;
  BoundParams<double> bp(tape, model.params, false);
  Rng crng(8);
  Tensor<double> cls_val(1, cfg.dim);
  for (auto& v : cls_val.values) v = crng.normal();
  auto cls = tape.leaf(cls_val);
  auto s = build_streams(tape, bp, cfg, cls, view);
  auto attn = decode_attention(tape, bp, cfg, s, mask);

  // Independent V = H2 * Wv.
  Tensor<double> h2 = tape.value(s.h2);
  const auto& wv = model.params.at("dec.wv");
  for (int i = 0; i < 4; ++i) {
    for (int c = 0; c < cfg.dim; ++c) {
      double v = 0;
      for (int k = 0; k < cfg.dim; ++k) v += h2.at(pick[i], k) * wv.at(k, c);
      CHECK(tape.value(attn).at(i, c) == doctest::Approx(v).epsilon(1e-12));
    }
  }
}

TEST_CASE("identical context rows with full visibility average to the common V row") {
  ModelConfig cfg = tiny_config(20, 6);
  Rng rng(6);
  auto model = Model<double>::init(cfg, rng, 0.5);

  Tape<double> tape;
  BoundParams<double> bp(tape, model.params, false);
  // Uniform K and V: every H2 row identical.
  Tensor<double> h1(3, cfg.dim), h2(3, cfg.dim);
  Rng vr(4);
  std::vector<double> base(cfg.dim);
  for (auto& v : base) v = vr.normal();
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < cfg.dim; ++c) {
      h1.at(i, c) = vr.normal();
      h2.at(i, c) = base[c];
    }
  DecoderStreams<double> s;
  s.h1 = tape.leaf(h1);
  s.h2 = tape.leaf(h2);
  s.length = 3;
  AttentionMask mask = AttentionMask::all_masked(3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) mask.set_visible(i, j, true);
  auto attn = decode_attention(tape, bp, cfg, s, mask);

  const auto& wv = model.params.at("dec.wv");
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < cfg.dim; ++c) {
      double v = 0;
      for (int k = 0; k < cfg.dim; ++k) v += base[k] * wv.at(k, c);
      CHECK(tape.value(attn).at(i, c) == doctest::Approx(v).epsilon(1e-9));
    }
}

TEST_CASE("decode_attention matches the dense oracle") {
  for (int heads : {1, 2}) {
    ModelConfig cfg = tiny_config(20, 8, heads);
    Rng rng(7 + heads);
    auto model = Model<double>::init(cfg, rng, 0.4);
    auto view = decoder_view({Vocab::kCls, 7, 8, 9, 10}, {2, 4});
    Rng mrng(17);
    auto mask = generate_mask_matrix(5, 2, mrng);

    Tape<double> tape;
    BoundParams<double> bp(tape, model.params, false);
    Rng crng(9);
    Tensor<double> cls_val(1, cfg.dim);
    for (auto& v : cls_val.values) v = crng.normal();
    auto cls = tape.leaf(cls_val);
    auto s = build_streams(tape, bp, cfg, cls, view);
    auto attn = decode_attention(tape, bp, cfg, s, mask);

    auto oracle = attention_oracle(tape.value(s.h1), tape.value(s.h2), model.params.at("dec.wq"),
                                   model.params.at("dec.wk"), model.params.at("dec.wv"), mask,
                                   heads);
    for (size_t i = 0; i < oracle.size(); ++i) {
      CHECK(tape.value(attn).values[i] == doctest::Approx(oracle.values[i]).epsilon(1e-10));
    }
  }
}

TEST_CASE("masked attention weight is exactly zero: context isolation") {
  ModelConfig cfg = tiny_config(20, 8);
  Rng rng(21);
  auto model = Model<double>::init(cfg, rng, 0.4);
  for (int trial = 0; trial < 10; ++trial) {
    const int length = 4 + trial % 3;
    Rng mrng(trial);
    auto mask = generate_mask_matrix(length, 1 + trial % (length - 2), mrng);
    std::vector<int> ids{Vocab::kCls};
    for (int i = 1; i < length; ++i) ids.push_back(4 + (trial + i) % 10);
    auto view = decoder_view(ids, {1});

    Rng crng(trial + 50);
    Tensor<double> cls_val(1, cfg.dim);
    for (auto& v : cls_val.values) v = crng.normal();

    auto run = [&](const Tensor<double>& h2_override, bool use_override, int row) {
      Tape<double> tape;
      BoundParams<double> bp(tape, model.params, false);
      auto cls = tape.leaf(cls_val);
      auto s = build_streams(tape, bp, cfg, cls, view);
      if (use_override) {
        DecoderStreams<double> s2;
        s2.h1 = s.h1;
        s2.h2 = tape.leaf(h2_override);
        s2.length = s.length;
        s = s2;
      }
      auto attn = decode_attention(tape, bp, cfg, s, mask);
      std::vector<double> out(cfg.dim);
      for (int c = 0; c < cfg.dim; ++c) out[c] = tape.value(attn).at(row, c);
      return out;
    };

    const int row = trial % length;
    Tape<double> probe;
    BoundParams<double> bp(probe, model.params, false);
    auto s0 = build_streams(probe, bp, cfg, probe.leaf(cls_val), view);
    Tensor<double> h2 = probe.value(s0.h2);
    auto before = run(h2, false, row);
    // Perturb every row invisible to `row`.
    Rng prng(trial + 99);
    for (int j = 0; j < length; ++j) {
      if (!mask.is_visible(row, j)) {
        for (int c = 0; c < cfg.dim; ++c) h2.at(j, c) += prng.normal(0.0, 3.0);
      }
    }
    auto after = run(h2, true, row);
    for (int c = 0; c < cfg.dim; ++c) {
      CHECK(std::abs(before[c] - after[c]) < 1e-6);
    }
  }
}

TEST_CASE("uniform logits make the reconstruction loss ln |V| per position") {
  ModelConfig cfg = tiny_config(50, 8);
  Rng rng(2);
  auto model = Model<double>::init(cfg, rng);
  for (auto& [name, t] : model.params.values) {
    const bool is_gain = name.find("ln") != std::string::npos && name.back() == 'g';
    for (auto& v : t.values) v = is_gain ? 1.0 : 0.0;
  }
  auto view = decoder_view({Vocab::kCls, 7, 8, 9}, {1, 3});
  Rng mrng(4);
  auto mask = generate_mask_matrix(4, 1, mrng);
  const std::vector<int> original = {Vocab::kCls, 7, 8, 9};

  Tape<double> tape;
  BoundParams<double> bp(tape, model.params, false);
  auto cls = tape.leaf(Tensor<double>(1, cfg.dim));
  auto loss = cls_decoder_loss(tape, bp, cfg, cls, view, original, mask);
  CHECK(tape.value(loss).values[0] == doctest::Approx(std::log(50.0)).epsilon(1e-9));
}

TEST_CASE("reconstruction targets are the original tokens, not the masked view") {
  ModelConfig cfg = tiny_config(30, 8);
  Rng rng(12);
  auto model = Model<double>::init(cfg, rng, 0.4);
  auto view = decoder_view({Vocab::kCls, 7, 8, 9}, {1, 2});
  Rng mrng(4);
  auto mask = generate_mask_matrix(4, 1, mrng);

  auto loss_for = [&](const std::vector<int>& original) {
    Tape<double> tape;
    BoundParams<double> bp(tape, model.params, false);
    Rng crng(5);
    Tensor<double> cls_val(1, cfg.dim);
    for (auto& v : cls_val.values) v = crng.normal();
    auto cls = tape.leaf(cls_val);
    return tape.value(cls_decoder_loss(tape, bp, cfg, cls, view, original, mask)).values[0];
  };
  // Same decoder view, different claimed originals -> different loss.
  CHECK(loss_for({Vocab::kCls, 7, 8, 9}) != loss_for({Vocab::kCls, 10, 11, 9}));
}

TEST_CASE("gradient reaches the cls bottleneck") {
  ModelConfig cfg = tiny_config(30, 8);
  Rng rng(13);
  auto model = Model<double>::init(cfg, rng, 0.4);
  auto view = decoder_view({Vocab::kCls, 7, 8, 9}, {2});
  Rng mrng(6);
  auto mask = generate_mask_matrix(4, 1, mrng);

  Tape<double> tape;
  BoundParams<double> bp(tape, model.params, true);
  Rng crng(5);
  Tensor<double> cls_val(1, cfg.dim);
  for (auto& v : cls_val.values) v = crng.normal();
  auto cls = tape.leaf(cls_val, true);
  auto loss = cls_decoder_loss(tape, bp, cfg, cls, view, {Vocab::kCls, 7, 8, 9}, mask);
  tape.backward(loss);
  double norm = 0;
  for (double g : tape.grad(cls).values) norm += g * g;
  CHECK(norm > 1e-12);
}

TEST_CASE("reconstruction loss passes the finite-difference check through the encoder") {
  ModelConfig cfg = tiny_config(20, 8);
  cfg.n_layers = 1;
  Rng rng(31);
  auto model = Model<double>::init(cfg, rng, 0.3);
  const std::vector<int> original = {Vocab::kCls, 5, 6, 7, 8};
  Rng vrng(3);
  auto enc_view = mask_for_encoder(original, 0.3, vrng);
  auto dec_view = mask_for_decoder(original, 0.5, vrng);
  auto mask = generate_mask_matrix(5, 2, vrng);

  auto report = finite_difference_check(
      model.params,
      [&](Tape<double>& t, BoundParams<double>& bp) {
        auto enc = encode(t, bp, cfg, enc_view.ids);
        return cls_decoder_loss(t, bp, cfg, enc.cls, dec_view, original, mask);
      });
  CHECK_MESSAGE(report.pass(), report.summary());
}

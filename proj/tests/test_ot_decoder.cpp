#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "duplex/gradcheck.hpp"
#include "duplex/model.hpp"

using namespace duplex;

namespace {

ModelConfig tiny_config(int vocab = 50, int dim = 8) {
  ModelConfig c;
  c.n_layers = 1;
  c.dim = dim;
  c.n_heads = 2;
  c.dec_heads = 1;
  c.max_len = 16;
  c.vocab_size = vocab;
  c.dense_dim = dim / 2;
  return c;
}

// Model whose LPU is a hand-picked matrix; every other parameter is
// irrelevant for these value tests.
Model<double> with_lpu(const Tensor<double>& w) {
  ModelConfig cfg = tiny_config(w.cols(), w.rows());
  cfg.vocab_size = std::max(w.cols(), Vocab::kNumSpecials + 1);
  Rng rng(1);
  auto model = Model<double>::init(cfg, rng);
  Tensor<double> full(cfg.dim, cfg.vocab_size);
  for (int r = 0; r < w.rows(); ++r)
    for (int c = 0; c < w.cols(); ++c) full.at(r, c) = w.at(r, c);
  model.params.at("lpu.w") = full;
  return model;
}

}  // namespace

TEST_CASE("vocab projection: hand matrix product") {
  Tensor<double> w(2, 3);
  w.at(0, 0) = 1;
  w.at(0, 1) = 2;
  w.at(0, 2) = 3;
  w.at(1, 0) = 4;
  w.at(1, 1) = 5;
  w.at(1, 2) = 6;
  auto model = with_lpu(w);

  Tape<double> tape;
  BoundParams<double> bp(tape, model.params, false);
  Tensor<double> h(1, 2);
  h.at(0, 0) = 1;
  h.at(0, 1) = 0;
  auto acts = project_vocab(tape, bp, tape.leaf(h));
  CHECK(tape.value(acts).at(0, 0) == 1.0);
  CHECK(tape.value(acts).at(0, 1) == 2.0);
  CHECK(tape.value(acts).at(0, 2) == 3.0);
}

TEST_CASE("vocab projection: zero embedding maps to the zero vector") {
  ModelConfig cfg = tiny_config(10, 4);
  Rng rng(9);
  auto model = Model<double>::init(cfg, rng);
  Tape<double> tape;
  BoundParams<double> bp(tape, model.params, false);
  auto acts = project_vocab(tape, bp, tape.leaf(Tensor<double>(1, 4)));
  for (double v : tape.value(acts).values) CHECK(v == 0.0);
}

TEST_CASE("vocab projection: N tokens in, N activations out") {
  ModelConfig cfg = tiny_config(12, 4);
  Rng rng(9);
  auto model = Model<double>::init(cfg, rng);
  Tape<double> tape;
  BoundParams<double> bp(tape, model.params, false);
  Rng vr(5);
  Tensor<double> rows(5, 4);
  for (auto& v : rows.values) v = vr.normal();
  auto acts = project_vocab(tape, bp, tape.leaf(rows));
  CHECK(tape.value(acts).rows() == 5);
  CHECK(tape.value(acts).cols() == 12);
}

TEST_CASE("vocab projection rejects an empty token set") {
  ModelConfig cfg = tiny_config(10, 4);
  Rng rng(9);
  auto model = Model<double>::init(cfg, rng);
  Tape<double> tape;
  BoundParams<double> bp(tape, model.params, false);
  CHECK_THROWS_AS(project_vocab(tape, bp, tape.leaf(Tensor<double>(0, 4))), DataError);
}

TEST_CASE("max pool: single row is the identity") {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>::row({0.4, -1.0, 2.5}));
  auto pooled = max_pool_vocab(tape, x);
  CHECK(tape.value(pooled).values == std::vector<double>{0.4, -1.0, 2.5});
}

TEST_CASE("max pool: elementwise maximum") {
  Tape<double> tape;
  Tensor<double> x(2, 3);
  x.at(0, 0) = 1;
  x.at(0, 1) = 5;
  x.at(0, 2) = 2;
  x.at(1, 0) = 4;
  x.at(1, 1) = 0;
  x.at(1, 2) = 2;
  auto pooled = max_pool_vocab(tape, tape.leaf(x));
  CHECK(tape.value(pooled).values == std::vector<double>{4.0, 5.0, 2.0});
}

TEST_CASE("max pool is order invariant over token rows") {
  Rng rng(4);
  Tensor<double> x(6, 9);
  for (auto& v : x.values) v = rng.normal();
  Tensor<double> shuffled(6, 9);
  const std::vector<int> perm = {3, 0, 5, 1, 4, 2};
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 9; ++c) shuffled.at(r, c) = x.at(perm[r], c);
  Tape<double> tape;
  auto a = max_pool_vocab(tape, tape.leaf(x));
  auto b = max_pool_vocab(tape, tape.leaf(shuffled));
  CHECK(tape.value(a).values == tape.value(b).values);
}

TEST_CASE("max pool rejects an empty list") {
  Tape<double> tape;
  CHECK_THROWS_AS(max_pool_vocab(tape, tape.leaf(Tensor<double>(0, 5))), DataError);
}

TEST_CASE("bow loss: uniform activation over 4 terms is ln 4") {
  Tape<double> tape;
  auto pooled = tape.leaf(Tensor<double>(1, 4));
  auto loss = bow_loss(tape, pooled, {Vocab::kCls, 3});
  CHECK(tape.value(loss).values[0] == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("bow loss: huge margin on the only input token drives the loss to 0") {
  Tape<double> tape;
  Tensor<double> mu(1, 6);
  mu.at(0, 4) = 80.0;
  auto loss = bow_loss(tape, tape.leaf(mu), {Vocab::kCls, 4});
  CHECK(tape.value(loss).values[0] < 1e-12);
}

TEST_CASE("bow loss: hand-computed two-target case equals ln 5") {
  // Vocabulary {a=3, b=4, c=5}; activation (0, 0, ln 3) over those terms
  // gives softmax (1/5, 1/5, 3/5); the mean NLL over {a, b} is ln 5.
  Tape<double> tape;
  Tensor<double> mu(1, 6);
  mu.values = {kMaskedLogit, kMaskedLogit, kMaskedLogit, 0.0, 0.0, std::log(3.0)};
  auto loss = bow_loss(tape, tape.leaf(mu), {Vocab::kCls, 3, 4});
  CHECK(tape.value(loss).values[0] == doctest::Approx(std::log(5.0)).epsilon(1e-9));
}

TEST_CASE("bow loss ignores token multiplicity") {
  Tape<double> tape;
  Rng rng(3);
  Tensor<double> mu(1, 9);
  for (auto& v : mu.values) v = rng.normal();
  auto leaf_a = tape.leaf(mu);
  auto leaf_b = tape.leaf(mu);
  auto a = bow_loss(tape, leaf_a, {Vocab::kCls, 4, 7});
  auto b = bow_loss(tape, leaf_b, {Vocab::kCls, 4, 7, 7, 4, 4});
  CHECK(tape.value(a).values[0] == tape.value(b).values[0]);
}

TEST_CASE("bow loss rejects inputs without ordinary tokens") {
  Tape<double> tape;
  auto pooled = tape.leaf(Tensor<double>(1, 6));
  CHECK_THROWS_AS(bow_loss(tape, pooled, {Vocab::kCls}), DataError);
  CHECK_THROWS_AS(bow_loss(tape, pooled, {Vocab::kCls, Vocab::kMask, Vocab::kPad}), DataError);
}

TEST_CASE("joint loss sums the three terms") {
  Tape<double> tape;
  auto z = joint_loss(tape, tape.constant(Tensor<double>::scalar(0.0)),
                      tape.constant(Tensor<double>::scalar(0.0)),
                      tape.constant(Tensor<double>::scalar(0.0)));
  CHECK(tape.value(z).values[0] == 0.0);
  auto s = joint_loss(tape, tape.constant(Tensor<double>::scalar(1.0)),
                      tape.constant(Tensor<double>::scalar(2.0)),
                      tape.constant(Tensor<double>::scalar(3.0)));
  CHECK(tape.value(s).values[0] == 6.0);
  LossWeights w{0.5, 2.0, 1.0};
  auto ws = joint_loss(tape, tape.constant(Tensor<double>::scalar(1.0)),
                       tape.constant(Tensor<double>::scalar(2.0)),
                       tape.constant(Tensor<double>::scalar(3.0)), w);
  CHECK(tape.value(ws).values[0] == doctest::Approx(0.5 + 4.0 + 3.0));
}

namespace {

struct JointFixture {
  ModelConfig cfg = tiny_config(20, 8);
  std::vector<int> original{Vocab::kCls, 5, 6, 7, 8, 9};
  MaskedSequence enc_view;
  MaskedSequence dec_view;
  AttentionMask mask;

  JointFixture() {
    Rng vrng(23);
    enc_view = mask_for_encoder(original, 0.3, vrng);
    dec_view = mask_for_decoder(original, 0.5, vrng);
    mask = generate_mask_matrix(static_cast<int>(original.size()), 2, vrng);
  }

  typename Tape<double>::Id build_mlm(Tape<double>& t, BoundParams<double>& bp) const {
    auto enc = encode(t, bp, cfg, enc_view.ids);
    return mlm_loss(t, bp, cfg, enc, enc_view);
  }
  typename Tape<double>::Id build_dec(Tape<double>& t, BoundParams<double>& bp) const {
    auto enc = encode(t, bp, cfg, enc_view.ids);
    return cls_decoder_loss(t, bp, cfg, enc.cls, dec_view, original, mask);
  }
  typename Tape<double>::Id build_bow(Tape<double>& t, BoundParams<double>& bp) const {
    auto enc = encode(t, bp, cfg, enc_view.ids);
    auto positions = unmasked_ordinary_positions(enc_view);
    auto pooled = max_pool_vocab(t, project_vocab(t, bp, t.gather_rows(enc.all, positions)));
    return bow_loss(t, pooled, original);
  }
  typename Tape<double>::Id build_joint(Tape<double>& t, BoundParams<double>& bp) const {
    return joint_loss(t, build_mlm(t, bp), build_dec(t, bp), build_bow(t, bp));
  }
};

}  // namespace

TEST_CASE("bow loss passes the finite-difference check through the encoder") {
  JointFixture fx;
  Rng rng(41);
  auto model = Model<double>::init(fx.cfg, rng, 0.3);
  auto report = finite_difference_check(
      model.params,
      [&](Tape<double>& t, BoundParams<double>& bp) { return fx.build_bow(t, bp); });
  CHECK_MESSAGE(report.pass(), report.summary());
}

TEST_CASE("joint gradient equals the sum of per-term gradients") {
  JointFixture fx;
  Rng rng(43);
  auto model = Model<double>::init(fx.cfg, rng, 0.3);

  auto g_mlm = gradients<double>(model.params, [&](Tape<double>& t, BoundParams<double>& bp) {
    return fx.build_mlm(t, bp);
  });
  auto g_dec = gradients<double>(model.params, [&](Tape<double>& t, BoundParams<double>& bp) {
    return fx.build_dec(t, bp);
  });
  auto g_bow = gradients<double>(model.params, [&](Tape<double>& t, BoundParams<double>& bp) {
    return fx.build_bow(t, bp);
  });
  auto g_joint = gradients<double>(model.params, [&](Tape<double>& t, BoundParams<double>& bp) {
    return fx.build_joint(t, bp);
  });
  for (const auto& [name, g] : g_joint) {
    for (size_t i = 0; i < g.size(); ++i) {
      const double expected = g_mlm.at(name).values[i] + g_dec.at(name).values[i] +
                              g_bow.at(name).values[i];
      CHECK(g.values[i] == doctest::Approx(expected).epsilon(1e-9));
    }
  }
}

TEST_CASE("gradient flows from the bow loss into the LPU and the encoder") {
  JointFixture fx;
  Rng rng(47);
  auto model = Model<double>::init(fx.cfg, rng, 0.3);
  auto grads = gradients<double>(model.params, [&](Tape<double>& t, BoundParams<double>& bp) {
    return fx.build_bow(t, bp);
  });
  auto norm = [&](const char* name) {
    double s = 0;
    for (double v : grads.at(name).values) s += v * v;
    return s;
  };
  CHECK(norm("lpu.w") > 1e-12);
  CHECK(norm("tok_emb") > 1e-12);
  CHECK(norm("enc0.wq") > 1e-12);
}

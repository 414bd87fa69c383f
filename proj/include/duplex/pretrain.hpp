#pragma once

#include <functional>
#include <ostream>
#include <vector>

#include "duplex/adam.hpp"
#include "duplex/model.hpp"

namespace duplex {

struct StepLosses {
  double mlm = 0.0;
  double dec = 0.0;
  double bow = 0.0;
  double joint = 0.0;
};

struct PretrainOptions {
  int steps = 1000;
  int batch = 8;
  double lr = 2e-3;
  uint64_t seed = 1;
  double enc_mask_ratio = 0.3;
  double dec_mask_ratio = 0.5;
  int n_visible = 0;  // 0 -> default_visible_count per sequence
  LossWeights weights;
  std::ostream* loss_log = nullptr;  // TSV, one row per step
  std::function<void(int, const StepLosses&)> on_step;
};

// Joint pre-training over tokenized sentences. Sentences must carry at least
// two ordinary tokens ([CLS] + 2, so the decoder mask is well defined). A
// single rng seeded from opt.seed drives batch sampling, masking and mask
// matrices, so a seed pins the whole run.
template <typename Real>
std::vector<StepLosses> pretrain(Model<Real>& model,
                                 const std::vector<std::vector<int>>& sentences,
                                 const PretrainOptions& opt) {
  if (sentences.empty()) throw DataError("pretrain: no usable sentences");
  for (const auto& s : sentences) {
    if (static_cast<int>(s.size()) < 3) {
      throw DataError("pretrain: sentences need at least two ordinary tokens");
    }
  }
  if (opt.steps < 1 || opt.batch < 1) throw DataError("pretrain: steps and batch must be >= 1");

  Rng rng(opt.seed);
  AdamOptimizer<Real> adam(opt.lr);
  std::vector<StepLosses> history;
  history.reserve(opt.steps);

  if (opt.loss_log) (*opt.loss_log) << "step\tmlm\tdec\tbow\tjoint\n";

  for (int step = 1; step <= opt.steps; ++step) {
    Tape<Real> tape;
    BoundParams<Real> bp(tape, model.params, true);

    StepLosses mean;
    typename Tape<Real>::Id batch_joint = -1;
    for (int b = 0; b < opt.batch; ++b) {
      const auto& ids = sentences[rng.below(sentences.size())];
      const int length = static_cast<int>(ids.size());

      auto enc_view = mask_for_encoder(ids, opt.enc_mask_ratio, rng);
      auto dec_view = mask_for_decoder(ids, opt.dec_mask_ratio, rng);
      const int n_vis = opt.n_visible > 0 ? std::min(opt.n_visible, length - 2)
                                          : default_visible_count(length);
      auto mask = generate_mask_matrix(length, n_vis, rng);

      auto enc = encode(tape, bp, model.cfg, enc_view.ids);
      auto l_mlm = mlm_loss(tape, bp, model.cfg, enc, enc_view);
      auto l_dec = cls_decoder_loss(tape, bp, model.cfg, enc.cls, dec_view, ids, mask);
      auto positions = unmasked_ordinary_positions(enc_view);
      if (positions.empty()) throw DataError("pretrain: all ordinary tokens masked");
      auto pooled = max_pool_vocab(tape, project_vocab(tape, bp, tape.gather_rows(enc.all, positions)));
      auto l_bow = bow_loss(tape, pooled, ids);
      auto joint = joint_loss(tape, l_mlm, l_dec, l_bow, opt.weights);

      mean.mlm += tape.value(l_mlm).values[0];
      mean.dec += tape.value(l_dec).values[0];
      mean.bow += tape.value(l_bow).values[0];
      batch_joint = b == 0 ? joint : tape.add(batch_joint, joint);
    }
    batch_joint = tape.scale(batch_joint, Real(1) / Real(opt.batch));
    mean.mlm /= opt.batch;
    mean.dec /= opt.batch;
    mean.bow /= opt.batch;
    mean.joint = tape.value(batch_joint).values[0];

    if (!std::isfinite(mean.joint)) {
      throw NumericalError("pretrain: non-finite joint loss at step " + std::to_string(step));
    }

    tape.backward(batch_joint);
    adam.step(model.params, bp.collect_grads());

    if (opt.loss_log) {
      (*opt.loss_log) << step << '\t' << mean.mlm << '\t' << mean.dec << '\t' << mean.bow << '\t'
                      << mean.joint << '\n';
    }
    if (opt.on_step) opt.on_step(step, mean);
    history.push_back(mean);
  }
  return history;
}

}  // namespace duplex

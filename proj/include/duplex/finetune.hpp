#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "duplex/adam.hpp"
#include "duplex/model.hpp"
#include "duplex/represent.hpp"

namespace duplex {

// One fine-tuning example. Teacher probabilities, when present, cover exactly
// {positive} + negatives in that order and sum to 1.
struct TrainTriple {
  std::string query_text;
  std::string positive_id;
  std::vector<std::string> negative_ids;
  std::vector<double> teacher;
};

// Triples file: query<TAB>positive_id[<TAB>neg1,neg2,...[<TAB>p0,p1,...]]
// A lone "-" stands for an empty negative list.
std::vector<TrainTriple> load_triples(const std::string& path);
void save_triples(const std::string& path, const std::vector<TrainTriple>& triples);

// Softmax teacher over {positive} + negatives from token-overlap (Jaccard)
// similarity, sharpened by `sharpness`. Stands in for a cross-encoder.
std::vector<double> lexical_teacher(const std::vector<int>& query_ids,
                                    const std::vector<std::vector<int>>& candidate_ids,
                                    double sharpness);

// ---- scoring graph ---------------------------------------------------------

// Tape-resident pieces of one text's representation during training.
template <typename Real>
struct ScoringIds {
  using Id = typename Tape<Real>::Id;
  Id dense = -1;            // 1 x d'
  Id mu = -1;               // 1 x |V|
  std::vector<int> top;     // selected term ids, ascending (empty when k = 0)
};

template <typename Real>
ScoringIds<Real> encode_for_scoring(Tape<Real>& tape, BoundParams<Real>& bp,
                                    const ModelConfig& cfg, const std::vector<int>& ids,
                                    const ReprConfig& rc) {
  if (static_cast<int>(ids.size()) < 2) {
    throw DataError("encode_for_scoring: empty input (no ordinary tokens)");
  }
  auto enc = encode(tape, bp, cfg, ids);
  ScoringIds<Real> out;
  out.dense = tape.matmul(enc.cls, bp.use("cls_proj.w"));
  out.mu = max_pool_vocab(tape, project_vocab(tape, bp, enc.ot));
  if (rc.sparse_k > 0) {
    const auto& mu = tape.value(out.mu).values;
    std::vector<float> as_float(mu.begin(), mu.end());
    for (const SparseEntry& e : top_k_sparse(as_float, rc.sparse_k)) out.top.push_back(e.term);
  }
  return out;
}

// Hybrid inner product on the tape. The sparse sum ranges over the document's
// selected terms; when queries are sparsified too, terms outside the query's
// selection contribute zero and are dropped up front.
template <typename Real>
typename Tape<Real>::Id pair_score(Tape<Real>& tape, const ScoringIds<Real>& query,
                                   const ScoringIds<Real>& doc, const ReprConfig& rc) {
  auto s = tape.matmul(query.dense, tape.transpose(doc.dense));
  std::vector<int> terms;
  if (rc.sparsify_query) {
    std::set_intersection(doc.top.begin(), doc.top.end(), query.top.begin(), query.top.end(),
                          std::back_inserter(terms));
  } else {
    terms = doc.top;
  }
  if (!terms.empty()) {
    auto qv = tape.gather_cols(query.mu, terms);
    auto dv = tape.gather_cols(doc.mu, terms);
    s = tape.add(s, tape.matmul(qv, tape.transpose(dv)));
  }
  return s;
}

// ---- loss assembly ---------------------------------------------------------

// -log softmax(scores / temperature)[positive_index]; scores are 1x1 nodes.
template <typename Real>
typename Tape<Real>::Id softmax_ce_over_scores(Tape<Real>& tape,
                                               const std::vector<typename Tape<Real>::Id>& scores,
                                               int positive_index, Real inv_temperature) {
  auto row = tape.scale(tape.concat_cols(scores), inv_temperature);
  return tape.cross_entropy_rows(row, {{positive_index}});
}

// -sum_d sigma[d] * log softmax(scores / temperature)[d].
template <typename Real>
typename Tape<Real>::Id soft_ce_over_scores(Tape<Real>& tape,
                                            const std::vector<typename Tape<Real>::Id>& scores,
                                            const std::vector<double>& sigma,
                                            Real inv_temperature) {
  if (sigma.size() != scores.size()) {
    throw DataError("distillation: teacher covers " + std::to_string(sigma.size()) +
                    " candidates, expected " + std::to_string(scores.size()));
  }
  double total = 0.0;
  for (double p : sigma) total += p;
  if (std::abs(total - 1.0) > 1e-6) {
    throw DataError("distillation: teacher distribution sums to " + std::to_string(total));
  }
  auto row = tape.scale(tape.concat_cols(scores), inv_temperature);
  Tensor<Real> probs(1, static_cast<int>(sigma.size()));
  for (size_t i = 0; i < sigma.size(); ++i) probs.values[i] = Real(sigma[i]);
  return tape.soft_cross_entropy_rows(row, probs);
}

// One tokenized fine-tuning example inside a batch.
struct FtExample {
  std::vector<int> query;
  std::string positive_id;
  std::vector<int> positive;
  std::vector<std::string> negative_ids;
  std::vector<std::vector<int>> negatives;
  std::vector<double> teacher;  // stage 3 only
};

namespace ft_detail {

template <typename Real>
std::map<std::string, ScoringIds<Real>> encode_unique_docs(Tape<Real>& tape,
                                                           BoundParams<Real>& bp,
                                                           const ModelConfig& cfg,
                                                           const std::vector<FtExample>& batch,
                                                           const ReprConfig& rc,
                                                           bool include_negatives) {
  std::map<std::string, ScoringIds<Real>> cache;
  for (const FtExample& ex : batch) {
    if (!cache.count(ex.positive_id)) {
      cache.emplace(ex.positive_id, encode_for_scoring(tape, bp, cfg, ex.positive, rc));
    }
    if (include_negatives) {
      for (size_t i = 0; i < ex.negative_ids.size(); ++i) {
        if (!cache.count(ex.negative_ids[i])) {
          cache.emplace(ex.negative_ids[i], encode_for_scoring(tape, bp, cfg, ex.negatives[i], rc));
        }
      }
    }
  }
  return cache;
}

inline void check_unique_positives(const std::vector<FtExample>& batch) {
  std::set<std::string> seen;
  for (const FtExample& ex : batch) {
    if (!seen.insert(ex.positive_id).second) {
      throw DataError("contrastive batch has duplicate doc id " + ex.positive_id);
    }
  }
}

}  // namespace ft_detail

// Eq-style in-batch contrastive loss: every other positive in the batch is a
// negative. Mean over queries.
template <typename Real>
typename Tape<Real>::Id inbatch_contrastive_loss(Tape<Real>& tape, BoundParams<Real>& bp,
                                                 const ModelConfig& cfg,
                                                 const std::vector<FtExample>& batch,
                                                 const ReprConfig& rc, double temperature) {
  if (batch.empty()) throw DataError("inbatch_contrastive_loss: empty batch");
  if (temperature <= 0.0) throw DataError("contrastive loss: temperature must be positive");
  ft_detail::check_unique_positives(batch);
  auto docs = ft_detail::encode_unique_docs(tape, bp, cfg, batch, rc, false);
  const Real inv_temp = Real(1.0 / temperature);

  typename Tape<Real>::Id total = -1;
  for (size_t qi = 0; qi < batch.size(); ++qi) {
    auto q = encode_for_scoring(tape, bp, cfg, batch[qi].query, rc);
    std::vector<typename Tape<Real>::Id> scores;
    scores.reserve(batch.size());
    for (const FtExample& ex : batch) {
      scores.push_back(pair_score(tape, q, docs.at(ex.positive_id), rc));
    }
    auto ce = softmax_ce_over_scores(tape, scores, static_cast<int>(qi), inv_temp);
    total = qi == 0 ? ce : tape.add(total, ce);
  }
  return tape.scale(total, Real(1) / Real(batch.size()));
}

// Contrastive loss over {positive} + mined hard negatives + in-batch
// positives. Per query the candidate list is de-duplicated by doc id.
template <typename Real>
typename Tape<Real>::Id hard_contrastive_loss(Tape<Real>& tape, BoundParams<Real>& bp,
                                              const ModelConfig& cfg,
                                              const std::vector<FtExample>& batch,
                                              const ReprConfig& rc, double temperature) {
  if (batch.empty()) throw DataError("hard_contrastive_loss: empty batch");
  if (temperature <= 0.0) throw DataError("contrastive loss: temperature must be positive");
  ft_detail::check_unique_positives(batch);
  for (const FtExample& ex : batch) {
    for (const auto& nid : ex.negative_ids) {
      if (nid == ex.positive_id) {
        throw DataError("hard negatives for a query contain its positive " + nid);
      }
    }
  }
  auto docs = ft_detail::encode_unique_docs(tape, bp, cfg, batch, rc, true);
  const Real inv_temp = Real(1.0 / temperature);

  typename Tape<Real>::Id total = -1;
  for (size_t qi = 0; qi < batch.size(); ++qi) {
    auto q = encode_for_scoring(tape, bp, cfg, batch[qi].query, rc);
    std::vector<std::string> candidates;
    std::set<std::string> seen;
    for (const FtExample& ex : batch) {
      if (seen.insert(ex.positive_id).second) candidates.push_back(ex.positive_id);
    }
    for (const auto& nid : batch[qi].negative_ids) {
      if (seen.count(nid) == 0) {
        seen.insert(nid);
        candidates.push_back(nid);
      }
    }
    std::vector<typename Tape<Real>::Id> scores;
    scores.reserve(candidates.size());
    int pos_index = -1;
    for (size_t c = 0; c < candidates.size(); ++c) {
      if (candidates[c] == batch[qi].positive_id) pos_index = static_cast<int>(c);
      scores.push_back(pair_score(tape, q, docs.at(candidates[c]), rc));
    }
    auto ce = softmax_ce_over_scores(tape, scores, pos_index, inv_temp);
    total = qi == 0 ? ce : tape.add(total, ce);
  }
  return tape.scale(total, Real(1) / Real(batch.size()));
}

// Soft-label cross-entropy against the teacher distribution over
// {positive} + hard negatives (no in-batch candidates). Mean over queries.
template <typename Real>
typename Tape<Real>::Id distillation_loss(Tape<Real>& tape, BoundParams<Real>& bp,
                                          const ModelConfig& cfg,
                                          const std::vector<FtExample>& batch,
                                          const ReprConfig& rc, double temperature) {
  if (batch.empty()) throw DataError("distillation_loss: empty batch");
  if (temperature <= 0.0) throw DataError("distillation loss: temperature must be positive");
  for (const FtExample& ex : batch) {
    for (const auto& nid : ex.negative_ids) {
      if (nid == ex.positive_id) {
        throw DataError("hard negatives for a query contain its positive " + nid);
      }
    }
  }
  auto docs = ft_detail::encode_unique_docs(tape, bp, cfg, batch, rc, true);
  const Real inv_temp = Real(1.0 / temperature);

  typename Tape<Real>::Id total = -1;
  for (size_t qi = 0; qi < batch.size(); ++qi) {
    const FtExample& ex = batch[qi];
    auto q = encode_for_scoring(tape, bp, cfg, ex.query, rc);
    std::vector<typename Tape<Real>::Id> scores;
    scores.reserve(1 + ex.negative_ids.size());
    scores.push_back(pair_score(tape, q, docs.at(ex.positive_id), rc));
    for (const auto& nid : ex.negative_ids) {
      scores.push_back(pair_score(tape, q, docs.at(nid), rc));
    }
    auto ce = soft_ce_over_scores(tape, scores, ex.teacher, inv_temp);
    total = qi == 0 ? ce : tape.add(total, ce);
  }
  return tape.scale(total, Real(1) / Real(batch.size()));
}

// ---- hard-negative mining ---------------------------------------------------

// Exact brute-force search: top-n highest scoring non-positive documents per
// query, ordered by (score desc, doc_id asc). n is clamped to corpus size - 1.
template <typename Real>
std::vector<std::vector<std::string>> mine_hard_negatives(
    const Model<Real>& model, const std::vector<std::vector<int>>& queries,
    const std::vector<std::string>& positive_ids,
    const std::vector<std::pair<std::string, std::vector<int>>>& corpus, int n,
    const ReprConfig& rc) {
  if (queries.size() != positive_ids.size()) {
    throw DataError("mine_hard_negatives: queries and positives differ in count");
  }
  std::vector<std::pair<std::string, Representation>> doc_reps;
  doc_reps.reserve(corpus.size());
  for (const auto& [id, ids] : corpus) {
    doc_reps.emplace_back(id, represent(model, ids, rc));
  }
  const int clamped = std::max(0, std::min<int>(n, static_cast<int>(corpus.size()) - 1));

  std::vector<std::vector<std::string>> out(queries.size());
  for (size_t qi = 0; qi < queries.size(); ++qi) {
    Representation q = represent(model, queries[qi], rc);
    std::vector<std::pair<double, const std::string*>> scored;
    scored.reserve(doc_reps.size());
    for (const auto& [id, rep] : doc_reps) {
      if (id == positive_ids[qi]) continue;
      scored.emplace_back(score(q, rep), &id);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return *a.second < *b.second;
    });
    const int take = std::min<int>(clamped, static_cast<int>(scored.size()));
    for (int i = 0; i < take; ++i) out[qi].push_back(*scored[i].second);
  }
  return out;
}

// ---- stage driver ------------------------------------------------------------

struct FinetuneOptions {
  int stage = 1;  // 1: in-batch, 2: + hard negatives, 3: distillation
  int steps = 300;
  int batch = 4;
  double lr = 1e-3;
  double temperature = 1.0;
  uint64_t seed = 1;
  ReprConfig repr;
  std::ostream* loss_log = nullptr;
  int eval_every = 0;
  std::function<void(int)> on_eval;
};

// Runs one fine-tuning stage over pre-tokenized examples. Batches are drawn
// without replacement per step; examples whose positive id collides inside
// the draw are dropped from that batch.
template <typename Real>
std::vector<double> finetune_run(Model<Real>& model, const std::vector<FtExample>& examples,
                                 const FinetuneOptions& opt) {
  if (examples.empty()) throw DataError("finetune: no usable training examples");
  if (opt.stage < 1 || opt.stage > 3) throw DataError("finetune: stage must be 1, 2 or 3");
  if (opt.steps < 1 || opt.batch < 1) throw DataError("finetune: steps and batch must be >= 1");
  if (opt.stage == 3) {
    for (const FtExample& ex : examples) {
      if (ex.teacher.size() != 1 + ex.negative_ids.size()) {
        throw DataError("finetune stage 3: teacher must cover {positive} + negatives");
      }
    }
  }

  Rng rng(opt.seed);
  AdamOptimizer<Real> adam(opt.lr);
  std::vector<double> losses;
  losses.reserve(opt.steps);
  if (opt.loss_log) (*opt.loss_log) << "step\tloss\n";

  for (int step = 1; step <= opt.steps; ++step) {
    const int want = std::min<int>(opt.batch, static_cast<int>(examples.size()));
    std::vector<FtExample> batch;
    std::set<std::string> pos_seen;
    for (int idx : rng.sample_indices(static_cast<int>(examples.size()), want)) {
      if (pos_seen.insert(examples[idx].positive_id).second) batch.push_back(examples[idx]);
    }

    Tape<Real> tape;
    BoundParams<Real> bp(tape, model.params, true);
    typename Tape<Real>::Id loss;
    switch (opt.stage) {
      case 1:
        loss = inbatch_contrastive_loss(tape, bp, model.cfg, batch, opt.repr, opt.temperature);
        break;
      case 2:
        loss = hard_contrastive_loss(tape, bp, model.cfg, batch, opt.repr, opt.temperature);
        break;
      default:
        loss = distillation_loss(tape, bp, model.cfg, batch, opt.repr, opt.temperature);
        break;
    }
    const double lv = static_cast<double>(tape.value(loss).values[0]);
    if (!std::isfinite(lv)) {
      throw NumericalError("finetune: non-finite loss at step " + std::to_string(step));
    }
    tape.backward(loss);
    adam.step(model.params, bp.collect_grads());

    if (opt.loss_log) (*opt.loss_log) << step << '\t' << lv << '\n';
    if (opt.eval_every > 0 && opt.on_eval && step % opt.eval_every == 0) opt.on_eval(step);
    losses.push_back(lv);
  }
  return losses;
}

}  // namespace duplex

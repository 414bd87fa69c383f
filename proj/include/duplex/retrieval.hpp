#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "duplex/represent.hpp"

namespace duplex {

// Exact-search index over duplex representations: a dense matrix scanned in
// full plus one inverted list per vocabulary term. Immutable after build.
struct Index {
  int dense_dim = 0;
  int vocab_size = 0;
  int sparse_k = 0;

  std::vector<std::string> doc_ids;  // ordinal -> id
  std::vector<float> dense;          // n x dense_dim, row-major

  struct Posting {
    int ordinal = 0;
    float weight = 0.0f;
  };
  std::vector<std::vector<Posting>> inverted;  // term -> postings, ordinal asc

  int doc_count() const { return static_cast<int>(doc_ids.size()); }

  static Index build(const std::vector<std::pair<std::string, Representation>>& reps,
                     const ReprConfig& config);

  // Reconstructs one document's representation (round-trip check support).
  Representation doc_representation(int ordinal) const;

  // Binary format with a versioned header (version, n, dense_dim, vocab, k).
  // Round-trips bit-exactly.
  void save(const std::string& path) const;
  static Index load(const std::string& path);
};

struct SearchHit {
  std::string doc_id;
  double score = 0.0;
};

// Exact top-n by the hybrid score; ties broken by lower doc_id. The dense
// part is a full scan, the sparse part accumulates over the query's terms'
// posting lists.
std::vector<SearchHit> search(const Index& index, const Representation& query, int topn);

// ---- run files (query_id, doc_id, rank, score per line) -------------------

struct RunEntry {
  std::string query_id;
  std::string doc_id;
  int rank = 0;
  double score = 0.0;
};

void save_run(const std::string& path, const std::vector<RunEntry>& entries);
std::vector<RunEntry> load_run(const std::string& path);

// Ranked doc ids per query, in file order, ordered by rank.
std::vector<std::pair<std::string, std::vector<std::string>>> run_to_rankings(
    const std::vector<RunEntry>& entries);

// ---- qrels and metrics -----------------------------------------------------

// "query_id doc_id grade" per line, whitespace separated.
struct Qrels {
  std::map<std::string, std::map<std::string, int>> grades;

  static Qrels load(const std::string& path);
  void save(const std::string& path) const;
};

struct MetricReport {
  std::vector<int> cutoffs;
  std::map<int, double> mrr;
  std::map<int, double> recall;
  std::map<int, double> ndcg;
  int evaluated = 0;
  int skipped = 0;  // queries present in the run but absent from the qrels
};

// MRR@k, Recall@k and NDCG@k (log2 discount, graded gains) averaged over the
// evaluable queries. Queries missing from the qrels are skipped with a
// warning.
MetricReport eval_metrics(
    const std::vector<std::pair<std::string, std::vector<std::string>>>& rankings,
    const Qrels& qrels, const std::vector<int>& cutoffs);

}  // namespace duplex

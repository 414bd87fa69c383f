#pragma once

#include <string>
#include <utility>
#include <vector>

namespace duplex {

// Dimension/sparsity configuration shared by encoding, scoring and indexing.
struct ReprConfig {
  int dense_dim = 16;   // d', projected [CLS] size
  int sparse_k = 16;    // entries kept from the vocabulary activation
  int vocab_size = 0;
  bool sparsify_query = true;  // when false, query activations keep all terms

  void validate() const;
};

struct SparseEntry {
  int term = 0;
  float weight = 0.0f;
};

// Projected dense vector plus top-k sparse vocabulary activation. Sparse
// entries are unique and sorted by term id ascending.
struct Representation {
  std::vector<float> dense;
  std::vector<SparseEntry> sparse;

  // 0 when the term is not part of the sparse set.
  float sparse_weight(int term) const;
};

// Top-k entries of a full vocabulary activation by weight; weight ties keep
// the lower term id. Result sorted by term id ascending. k is clamped to the
// activation size.
std::vector<SparseEntry> top_k_sparse(const std::vector<float>& activation, int k);

// Relevance between a query and a document representation:
//   dense_q . dense_d + sum over the DOCUMENT's sparse terms i of
//   (query weight at i, 0 if absent) * document weight at i.
// The sparse sum ranges over the document side only, so the score is not
// symmetric when supports differ.
double score(const Representation& query, const Representation& doc);

// Bits needed to address one vocabulary entry: ceil(log2(vocab_size)).
int index_bits(int vocab_size);

// Storage cost of one representation in bits:
//   dense_dim * float_bits + sparse_k * (float_bits + index_bits(vocab)).
long long footprint_bits(const ReprConfig& config, int float_bits = 32);

// Line-delimited text format, one document per line:
//   doc_id<TAB>v0 v1 ...<TAB>term:weight term:weight ...
// Floats use 9 significant digits so float32 values round-trip exactly.
void save_representations(const std::string& path,
                          const std::vector<std::pair<std::string, Representation>>& reps,
                          const ReprConfig& config);
std::vector<std::pair<std::string, Representation>> load_representations(const std::string& path,
                                                                         ReprConfig* config_out);

}  // namespace duplex

#include "duplex/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "duplex/diagnostics.hpp"
#include "duplex/errors.hpp"
#include "duplex/io.hpp"

namespace duplex {

Index Index::build(const std::vector<std::pair<std::string, Representation>>& reps,
                   const ReprConfig& config) {
  Index idx;
  idx.dense_dim = config.dense_dim;
  idx.vocab_size = config.vocab_size;
  idx.sparse_k = config.sparse_k;
  idx.inverted.resize(config.vocab_size);

  std::set<std::string> seen;
  for (const auto& [id, rep] : reps) {
    if (!seen.insert(id).second) throw DataError("build_index: duplicate doc id " + id);
    if (static_cast<int>(rep.dense.size()) != config.dense_dim) {
      throw DataError("build_index: doc " + id + " has dense size " +
                      std::to_string(rep.dense.size()));
    }
    const int ordinal = idx.doc_count();
    idx.doc_ids.push_back(id);
    idx.dense.insert(idx.dense.end(), rep.dense.begin(), rep.dense.end());
    for (const SparseEntry& e : rep.sparse) {
      if (e.term < 0 || e.term >= config.vocab_size) {
        throw DataError("build_index: doc " + id + " has term " + std::to_string(e.term) +
                        " outside the vocabulary");
      }
      idx.inverted[e.term].push_back({ordinal, e.weight});
    }
  }
  return idx;
}

Representation Index::doc_representation(int ordinal) const {
  Representation rep;
  rep.dense.assign(dense.begin() + static_cast<size_t>(ordinal) * dense_dim,
                   dense.begin() + static_cast<size_t>(ordinal + 1) * dense_dim);
  for (int term = 0; term < vocab_size; ++term) {
    for (const Posting& p : inverted[term]) {
      if (p.ordinal == ordinal) rep.sparse.push_back({term, p.weight});
    }
  }
  return rep;
}

namespace {

constexpr char kIndexMagic[9] = "DPXIDX01";

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("truncated index file: " + path);
  return v;
}

}  // namespace

void Index::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write index file: " + path);
  out.write(kIndexMagic, 8);
  write_pod<uint32_t>(out, static_cast<uint32_t>(doc_count()));
  write_pod<uint32_t>(out, static_cast<uint32_t>(dense_dim));
  write_pod<uint32_t>(out, static_cast<uint32_t>(vocab_size));
  write_pod<uint32_t>(out, static_cast<uint32_t>(sparse_k));
  for (const auto& id : doc_ids) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
  }
  out.write(reinterpret_cast<const char*>(dense.data()),
            static_cast<std::streamsize>(dense.size() * sizeof(float)));
  // Per-document sparse records so the file round-trips document by document.
  std::vector<std::vector<SparseEntry>> per_doc(doc_count());
  for (int term = 0; term < vocab_size; ++term) {
    for (const Posting& p : inverted[term]) {
      per_doc[p.ordinal].push_back({term, p.weight});
    }
  }
  for (const auto& entries : per_doc) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(entries.size()));
    for (const SparseEntry& e : entries) {
      write_pod<uint32_t>(out, static_cast<uint32_t>(e.term));
      write_pod<float>(out, e.weight);
    }
  }
  if (!out) throw DataError("failed writing index file: " + path);
}

Index Index::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open index file: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kIndexMagic, 8) != 0) {
    throw DataError("not an index file (or unsupported version): " + path);
  }
  const auto n = read_pod<uint32_t>(in, path);
  Index idx;
  idx.dense_dim = static_cast<int>(read_pod<uint32_t>(in, path));
  idx.vocab_size = static_cast<int>(read_pod<uint32_t>(in, path));
  idx.sparse_k = static_cast<int>(read_pod<uint32_t>(in, path));
  idx.inverted.resize(idx.vocab_size);
  for (uint32_t i = 0; i < n; ++i) {
    const auto len = read_pod<uint32_t>(in, path);
    std::string id(len, '\0');
    in.read(id.data(), len);
    if (!in) throw DataError("truncated index file: " + path);
    idx.doc_ids.push_back(std::move(id));
  }
  idx.dense.resize(static_cast<size_t>(n) * idx.dense_dim);
  in.read(reinterpret_cast<char*>(idx.dense.data()),
          static_cast<std::streamsize>(idx.dense.size() * sizeof(float)));
  if (!in) throw DataError("truncated index file: " + path);
  for (uint32_t ordinal = 0; ordinal < n; ++ordinal) {
    const auto m = read_pod<uint32_t>(in, path);
    int prev_term = -1;
    for (uint32_t j = 0; j < m; ++j) {
      const int term = static_cast<int>(read_pod<uint32_t>(in, path));
      const float w = read_pod<float>(in, path);
      if (term <= prev_term || term >= idx.vocab_size) {
        throw DataError("corrupt index file: " + path);
      }
      prev_term = term;
      idx.inverted[term].push_back({static_cast<int>(ordinal), w});
    }
  }
  return idx;
}

std::vector<SearchHit> search(const Index& index, const Representation& query, int topn) {
  if (topn < 1) throw DataError("search: topn must be >= 1");
  if (index.doc_count() == 0) return {};
  if (static_cast<int>(query.dense.size()) != index.dense_dim) {
    throw DataError("search: query dense size " + std::to_string(query.dense.size()) +
                    " != index dense_dim " + std::to_string(index.dense_dim));
  }
  const int n = index.doc_count();
  std::vector<double> dense_part(n, 0.0);
  for (int d = 0; d < n; ++d) {
    const float* row = index.dense.data() + static_cast<size_t>(d) * index.dense_dim;
    double s = 0.0;
    for (int c = 0; c < index.dense_dim; ++c) {
      s += static_cast<double>(query.dense[c]) * static_cast<double>(row[c]);
    }
    dense_part[d] = s;
  }
  std::vector<double> sparse_part(n, 0.0);
  for (const SparseEntry& qe : query.sparse) {
    if (qe.term < 0 || qe.term >= index.vocab_size) continue;
    for (const Index::Posting& p : index.inverted[qe.term]) {
      sparse_part[p.ordinal] += static_cast<double>(qe.weight) * static_cast<double>(p.weight);
    }
  }
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::vector<double> total(n);
  for (int i = 0; i < n; ++i) total[i] = dense_part[i] + sparse_part[i];
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (total[a] != total[b]) return total[a] > total[b];
    return index.doc_ids[a] < index.doc_ids[b];
  });
  if (topn < n) order.resize(topn);
  std::vector<SearchHit> hits;
  hits.reserve(order.size());
  for (int ordinal : order) hits.push_back({index.doc_ids[ordinal], total[ordinal]});
  return hits;
}

void save_run(const std::string& path, const std::vector<RunEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write run file: " + path);
  char buf[32];
  for (const RunEntry& e : entries) {
    std::snprintf(buf, sizeof(buf), "%.9g", e.score);
    out << e.query_id << ' ' << e.doc_id << ' ' << e.rank << ' ' << buf << '\n';
  }
}

std::vector<RunEntry> load_run(const std::string& path) {
  std::vector<RunEntry> out;
  for (const auto& line : read_lines(path)) {
    std::istringstream is(line);
    RunEntry e;
    if (!(is >> e.query_id >> e.doc_id >> e.rank >> e.score)) {
      throw DataError(path + ": expected 'query_id doc_id rank score', got: " + line);
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<std::pair<std::string, std::vector<std::string>>> run_to_rankings(
    const std::vector<RunEntry>& entries) {
  std::vector<std::pair<std::string, std::vector<RunEntry>>> grouped;
  std::map<std::string, size_t> where;
  for (const RunEntry& e : entries) {
    auto it = where.find(e.query_id);
    if (it == where.end()) {
      where[e.query_id] = grouped.size();
      grouped.push_back({e.query_id, {e}});
    } else {
      grouped[it->second].second.push_back(e);
    }
  }
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  out.reserve(grouped.size());
  for (auto& [qid, group] : grouped) {
    std::sort(group.begin(), group.end(),
              [](const RunEntry& a, const RunEntry& b) { return a.rank < b.rank; });
    std::vector<std::string> docs;
    docs.reserve(group.size());
    for (const RunEntry& e : group) docs.push_back(e.doc_id);
    out.emplace_back(qid, std::move(docs));
  }
  return out;
}

Qrels Qrels::load(const std::string& path) {
  Qrels q;
  for (const auto& line : read_lines(path)) {
    std::istringstream is(line);
    std::string qid, did;
    int grade;
    if (!(is >> qid >> did >> grade)) {
      throw DataError(path + ": expected 'query_id doc_id grade', got: " + line);
    }
    q.grades[qid][did] = grade;
  }
  return q;
}

void Qrels::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write qrels file: " + path);
  for (const auto& [qid, docs] : grades) {
    for (const auto& [did, grade] : docs) out << qid << ' ' << did << ' ' << grade << '\n';
  }
}

MetricReport eval_metrics(
    const std::vector<std::pair<std::string, std::vector<std::string>>>& rankings,
    const Qrels& qrels, const std::vector<int>& cutoffs) {
  MetricReport report;
  report.cutoffs = cutoffs;
  for (int k : cutoffs) {
    report.mrr[k] = 0.0;
    report.recall[k] = 0.0;
    report.ndcg[k] = 0.0;
  }
  for (const auto& [qid, ranked] : rankings) {
    auto qit = qrels.grades.find(qid);
    if (qit == qrels.grades.end()) {
      warn("eval_metrics: query " + qid + " missing from qrels, skipped");
      ++report.skipped;
      continue;
    }
    const auto& rel = qit->second;
    std::vector<int> gains;  // grades sorted desc, for the ideal ranking
    int n_relevant = 0;
    for (const auto& [did, grade] : rel) {
      (void)did;
      gains.push_back(grade);
      if (grade > 0) ++n_relevant;
    }
    if (n_relevant == 0) {
      warn("eval_metrics: query " + qid + " has no relevant documents, skipped");
      ++report.skipped;
      continue;
    }
    std::sort(gains.begin(), gains.end(), std::greater<int>());
    ++report.evaluated;

    for (int k : cutoffs) {
      const int depth = std::min<int>(k, static_cast<int>(ranked.size()));
      double rr = 0.0;
      int hits = 0;
      double dcg = 0.0;
      for (int i = 0; i < depth; ++i) {
        auto dit = rel.find(ranked[i]);
        const int grade = dit == rel.end() ? 0 : dit->second;
        if (grade > 0) {
          if (rr == 0.0) rr = 1.0 / (i + 1);
          ++hits;
        }
        dcg += grade / std::log2(i + 2.0);
      }
      double idcg = 0.0;
      for (int i = 0; i < std::min<int>(k, static_cast<int>(gains.size())); ++i) {
        idcg += gains[i] / std::log2(i + 2.0);
      }
      report.mrr[k] += rr;
      report.recall[k] += static_cast<double>(hits) / n_relevant;
      report.ndcg[k] += idcg > 0.0 ? dcg / idcg : 0.0;
    }
  }
  if (report.evaluated > 0) {
    for (int k : cutoffs) {
      report.mrr[k] /= report.evaluated;
      report.recall[k] /= report.evaluated;
      report.ndcg[k] /= report.evaluated;
    }
  }
  return report;
}

}  // namespace duplex

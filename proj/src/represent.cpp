#include "duplex/represent.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "duplex/errors.hpp"
#include "duplex/io.hpp"

namespace duplex {

void ReprConfig::validate() const {
  if (dense_dim < 1) throw DataError("repr config: dense_dim must be >= 1");
  if (sparse_k < 0) throw DataError("repr config: sparse_k must be >= 0");
  if (vocab_size > 0 && sparse_k > vocab_size) {
    throw DataError("repr config: sparse_k exceeds vocabulary size");
  }
}

float Representation::sparse_weight(int term) const {
  auto it = std::lower_bound(sparse.begin(), sparse.end(), term,
                             [](const SparseEntry& e, int t) { return e.term < t; });
  if (it != sparse.end() && it->term == term) return it->weight;
  return 0.0f;
}

std::vector<SparseEntry> top_k_sparse(const std::vector<float>& activation, int k) {
  const int n = static_cast<int>(activation.size());
  if (k > n) k = n;
  if (k <= 0) return {};
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  // weight desc, term id asc on ties
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
    if (activation[a] != activation[b]) return activation[a] > activation[b];
    return a < b;
  });
  order.resize(k);
  std::sort(order.begin(), order.end());
  std::vector<SparseEntry> out;
  out.reserve(k);
  for (int term : order) out.push_back({term, activation[term]});
  return out;
}

double score(const Representation& query, const Representation& doc) {
  if (query.dense.size() != doc.dense.size()) {
    throw DataError("score: dense dimensions differ (" + std::to_string(query.dense.size()) +
                    " vs " + std::to_string(doc.dense.size()) + ")");
  }
  // Dense and sparse parts accumulate separately and combine once, the same
  // arithmetic the inverted-index search performs, so the two routes agree
  // bit for bit.
  double dense_sum = 0.0;
  for (size_t i = 0; i < query.dense.size(); ++i) {
    dense_sum += static_cast<double>(query.dense[i]) * static_cast<double>(doc.dense[i]);
  }
  double sparse_sum = 0.0;
  for (const SparseEntry& e : doc.sparse) {
    sparse_sum += static_cast<double>(query.sparse_weight(e.term)) * static_cast<double>(e.weight);
  }
  return dense_sum + sparse_sum;
}

int index_bits(int vocab_size) {
  if (vocab_size < 2) return 1;
  int bits = 0;
  while ((1LL << bits) < vocab_size) ++bits;
  return bits;
}

long long footprint_bits(const ReprConfig& config, int float_bits) {
  return static_cast<long long>(config.dense_dim) * float_bits +
         static_cast<long long>(config.sparse_k) * (float_bits + index_bits(config.vocab_size));
}

namespace {

std::string fmt_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
  return buf;
}

}  // namespace

void save_representations(const std::string& path,
                          const std::vector<std::pair<std::string, Representation>>& reps,
                          const ReprConfig& config) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write representations file: " + path);
  out << "#duplex-reprs v1 dense=" << config.dense_dim << " k=" << config.sparse_k
      << " vocab=" << config.vocab_size << "\n";
  for (const auto& [id, rep] : reps) {
    out << id << '\t';
    for (size_t i = 0; i < rep.dense.size(); ++i) {
      if (i) out << ' ';
      out << fmt_float(rep.dense[i]);
    }
    out << '\t';
    for (size_t i = 0; i < rep.sparse.size(); ++i) {
      if (i) out << ' ';
      out << rep.sparse[i].term << ':' << fmt_float(rep.sparse[i].weight);
    }
    out << '\n';
  }
}

std::vector<std::pair<std::string, Representation>> load_representations(const std::string& path,
                                                                         ReprConfig* config_out) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open representations file: " + path);
  std::string header;
  std::getline(in, header);
  ReprConfig cfg;
  {
    std::istringstream hs(header);
    std::string magic, field;
    hs >> magic;
    if (magic != "#duplex-reprs") throw DataError(path + ": not a representations file");
    hs >> field;  // version
    if (field != "v1") throw DataError(path + ": unsupported version " + field);
    while (hs >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw DataError(path + ": malformed header field " + field);
      const std::string key = field.substr(0, eq);
      const int val = std::stoi(field.substr(eq + 1));
      if (key == "dense") cfg.dense_dim = val;
      else if (key == "k") cfg.sparse_k = val;
      else if (key == "vocab") cfg.vocab_size = val;
      else throw DataError(path + ": unknown header field " + key);
    }
  }

  std::vector<std::pair<std::string, Representation>> out;
  std::string line;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected 3 tab-separated fields");
    }
    Representation rep;
    const std::string id = line.substr(0, t1);
    {
      std::istringstream ds(line.substr(t1 + 1, t2 - t1 - 1));
      float v;
      while (ds >> v) rep.dense.push_back(v);
    }
    if (static_cast<int>(rep.dense.size()) != cfg.dense_dim) {
      throw DataError(path + ":" + std::to_string(line_no) + ": dense size " +
                      std::to_string(rep.dense.size()) + " != header dense=" +
                      std::to_string(cfg.dense_dim));
    }
    {
      std::istringstream ss(line.substr(t2 + 1));
      std::string pair;
      int prev_term = -1;
      while (ss >> pair) {
        const auto colon = pair.find(':');
        if (colon == std::string::npos) {
          throw DataError(path + ":" + std::to_string(line_no) + ": malformed sparse entry " + pair);
        }
        SparseEntry e;
        e.term = std::stoi(pair.substr(0, colon));
        e.weight = std::strtof(pair.c_str() + colon + 1, nullptr);
        if (e.term <= prev_term) {
          throw DataError(path + ":" + std::to_string(line_no) +
                          ": sparse terms must be strictly increasing");
        }
        prev_term = e.term;
        rep.sparse.push_back(e);
      }
    }
    out.emplace_back(id, std::move(rep));
  }
  if (config_out) *config_out = cfg;
  return out;
}

}  // namespace duplex

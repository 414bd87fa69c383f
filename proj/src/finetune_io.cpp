#include "duplex/finetune.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "duplex/errors.hpp"
#include "duplex/io.hpp"

namespace duplex {

namespace {

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  return out;
}

}  // namespace

std::vector<TrainTriple> load_triples(const std::string& path) {
  std::vector<TrainTriple> out;
  size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    const auto fields = split_on(line, '\t');
    if (fields.size() < 2 || fields.size() > 4) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": expected 2-4 tab-separated fields");
    }
    TrainTriple t;
    t.query_text = fields[0];
    t.positive_id = fields[1];
    if (fields.size() >= 3 && !fields[2].empty() && fields[2] != "-") {
      t.negative_ids = split_on(fields[2], ',');
    }
    for (const auto& nid : t.negative_ids) {
      if (nid == t.positive_id) {
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": negative list contains the positive id " + nid);
      }
    }
    if (fields.size() == 4 && !fields[3].empty() && fields[3] != "-") {
      for (const auto& v : split_on(fields[3], ',')) t.teacher.push_back(std::stod(v));
      if (t.teacher.size() != 1 + t.negative_ids.size()) {
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": teacher scores must cover {positive} + negatives");
      }
    }
    out.push_back(std::move(t));
  }
  if (out.empty()) throw DataError(path + ": no triples");
  return out;
}

void save_triples(const std::string& path, const std::vector<TrainTriple>& triples) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write triples file: " + path);
  char buf[32];
  for (const TrainTriple& t : triples) {
    out << t.query_text << '\t' << t.positive_id;
    if (!t.negative_ids.empty() || !t.teacher.empty()) {
      out << '\t';
      if (t.negative_ids.empty()) {
        out << '-';
      } else {
        for (size_t i = 0; i < t.negative_ids.size(); ++i) {
          if (i) out << ',';
          out << t.negative_ids[i];
        }
      }
    }
    if (!t.teacher.empty()) {
      out << '\t';
      for (size_t i = 0; i < t.teacher.size(); ++i) {
        if (i) out << ',';
        std::snprintf(buf, sizeof(buf), "%.9g", t.teacher[i]);
        out << buf;
      }
    }
    out << '\n';
  }
}

std::vector<double> lexical_teacher(const std::vector<int>& query_ids,
                                    const std::vector<std::vector<int>>& candidate_ids,
                                    double sharpness) {
  if (candidate_ids.empty()) throw DataError("lexical_teacher: no candidates");
  const std::set<int> q(query_ids.begin(), query_ids.end());
  std::vector<double> raw;
  raw.reserve(candidate_ids.size());
  for (const auto& cand : candidate_ids) {
    const std::set<int> d(cand.begin(), cand.end());
    size_t inter = 0;
    for (int id : q) inter += d.count(id);
    const size_t uni = q.size() + d.size() - inter;
    raw.push_back(uni == 0 ? 0.0 : sharpness * static_cast<double>(inter) / uni);
  }
  const double mx = *std::max_element(raw.begin(), raw.end());
  double z = 0.0;
  for (double& v : raw) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : raw) v /= z;
  return raw;
}

}  // namespace duplex

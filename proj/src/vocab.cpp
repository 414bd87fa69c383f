#include "duplex/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "duplex/errors.hpp"

namespace duplex {

std::vector<std::string> split_whitespace(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

namespace {

Vocab with_specials() {
  Vocab v;
  v.tokens = {Vocab::cls_token(), Vocab::mask_token(), Vocab::pad_token()};
  for (int i = 0; i < Vocab::kNumSpecials; ++i) v.ids[v.tokens[i]] = i;
  return v;
}

bool is_special_literal(const std::string& tok) {
  return tok == Vocab::cls_token() || tok == Vocab::mask_token() || tok == Vocab::pad_token();
}

}  // namespace

Vocab Vocab::build(const std::vector<std::string>& corpus_lines, int max_size) {
  if (corpus_lines.empty()) throw DataError("build_vocab: empty corpus");
  if (max_size <= kNumSpecials) {
    throw DataError("build_vocab: max_size must exceed the " +
                    std::to_string(kNumSpecials) + " special tokens");
  }
  std::map<std::string, long> counts;  // ordered: ties resolve lexically
  for (const auto& line : corpus_lines) {
    for (const auto& tok : split_whitespace(line)) {
      if (is_special_literal(tok)) continue;
      ++counts[tok];
    }
  }
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocab v = with_specials();
  const int keep = max_size - kNumSpecials;
  for (int i = 0; i < keep && i < static_cast<int>(ranked.size()); ++i) {
    v.ids[ranked[i].first] = v.size();
    v.tokens.push_back(ranked[i].first);
  }
  return v;
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary file: " + path);
  Vocab v = with_specials();
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (v.ids.count(line)) throw DataError("duplicate vocabulary token: " + line);
    v.ids[line] = v.size();
    v.tokens.push_back(line);
  }
  return v;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write vocabulary file: " + path);
  for (int i = kNumSpecials; i < size(); ++i) out << tokens[i] << "\n";
}

std::vector<int> tokenize(const std::string& text, const Vocab& vocab, int max_len) {
  std::vector<int> ids{Vocab::kCls};
  for (const auto& tok : split_whitespace(text)) {
    if (is_special_literal(tok)) continue;
    const int id = vocab.id_of(tok);
    if (id >= 0) ids.push_back(id);
    if (max_len > 0 && static_cast<int>(ids.size()) >= max_len) break;
  }
  if (max_len > 0 && static_cast<int>(ids.size()) > max_len) ids.resize(max_len);
  return ids;
}

}  // namespace duplex

#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace duplex {

// Whitespace-token vocabulary. Ids are dense: specials first, then corpus
// tokens ordered by (frequency desc, token asc). Corpus tokenization never
// produces a special id.
struct Vocab {
  static constexpr int kCls = 0;
  static constexpr int kMask = 1;
  static constexpr int kPad = 2;
  static constexpr int kNumSpecials = 3;

  static const char* cls_token() { return "[CLS]"; }
  static const char* mask_token() { return "[M]"; }
  static const char* pad_token() { return "[PAD]"; }

  std::vector<std::string> tokens;  // id -> token, specials included
  std::unordered_map<std::string, int> ids;

  int size() const { return static_cast<int>(tokens.size()); }
  bool is_special(int id) const { return id >= 0 && id < kNumSpecials; }

  // -1 when absent.
  int id_of(const std::string& token) const {
    auto it = ids.find(token);
    return it == ids.end() ? -1 : it->second;
  }

  // max_size bounds the total vocabulary, specials included. Frequency ties
  // keep the lexically smaller token.
  static Vocab build(const std::vector<std::string>& corpus_lines, int max_size);

  // One corpus token per line; line number = id - kNumSpecials.
  static Vocab load(const std::string& path);
  void save(const std::string& path) const;
};

std::vector<std::string> split_whitespace(const std::string& text);

// Token ids with [CLS] prepended; out-of-vocabulary tokens are dropped.
// max_len > 0 truncates the result ([CLS] included) to that many ids.
std::vector<int> tokenize(const std::string& text, const Vocab& vocab, int max_len = 0);

}  // namespace duplex

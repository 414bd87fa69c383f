#include "duplex/masking.hpp"

#include <cmath>

#include "duplex/errors.hpp"
#include "duplex/vocab.hpp"

namespace duplex {

MaskedSequence mask_tokens(const std::vector<int>& seq, double ratio, Rng& rng, ViewRole role) {
  if (ratio < 0.0 || ratio >= 1.0) {
    throw DataError("mask_tokens: ratio must lie in [0, 1)");
  }
  const int length = static_cast<int>(seq.size());
  if (length < 2) {
    throw DataError("mask_tokens: sequence has no ordinary tokens to mask");
  }
  const int n_ordinary = length - 1;
  const int n_mask = static_cast<int>(std::lround(ratio * n_ordinary));

  MaskedSequence out;
  out.ids = seq;
  out.role = role;
  if (n_mask > 0) {
    std::vector<int> pool(n_ordinary);
    for (int i = 0; i < n_ordinary; ++i) pool[i] = i + 1;  // never position 0
    out.masked_positions = rng.sample_values(std::move(pool), n_mask);
    out.original_at_masked.reserve(n_mask);
    for (int p : out.masked_positions) {
      out.original_at_masked.push_back(seq[p]);
      out.ids[p] = Vocab::kMask;
    }
  }
  return out;
}

std::vector<int> unmasked_ordinary_positions(const MaskedSequence& view) {
  std::vector<int> out;
  size_t next = 0;
  for (int p = 1; p < view.length(); ++p) {
    if (next < view.masked_positions.size() && view.masked_positions[next] == p) {
      ++next;
      continue;
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace duplex

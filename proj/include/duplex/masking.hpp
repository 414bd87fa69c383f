#pragma once

#include <vector>

#include "duplex/rng.hpp"

namespace duplex {

enum class ViewRole { encoder, decoder };

// A token sequence with round(ratio * (L-1)) of its non-[CLS] positions
// replaced by [M]. Restoring original_at_masked at masked_positions recovers
// the input sequence exactly.
struct MaskedSequence {
  std::vector<int> ids;
  std::vector<int> masked_positions;   // sorted, unique, never 0
  std::vector<int> original_at_masked; // aligned with masked_positions
  ViewRole role = ViewRole::encoder;

  int length() const { return static_cast<int>(ids.size()); }

  std::vector<int> restore() const {
    std::vector<int> out = ids;
    for (size_t i = 0; i < masked_positions.size(); ++i) {
      out[masked_positions[i]] = original_at_masked[i];
    }
    return out;
  }
};

MaskedSequence mask_tokens(const std::vector<int>& seq, double ratio, Rng& rng, ViewRole role);

inline MaskedSequence mask_for_encoder(const std::vector<int>& seq, double ratio, Rng& rng) {
  return mask_tokens(seq, ratio, rng, ViewRole::encoder);
}

inline MaskedSequence mask_for_decoder(const std::vector<int>& seq, double ratio, Rng& rng) {
  return mask_tokens(seq, ratio, rng, ViewRole::decoder);
}

// Positions 1..L-1 of the encoder view that kept their original token.
std::vector<int> unmasked_ordinary_positions(const MaskedSequence& view);

}  // namespace duplex

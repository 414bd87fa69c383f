#include "duplex/decoder_mask.hpp"

#include <cmath>

#include "duplex/errors.hpp"

namespace duplex {

int default_visible_count(int length) {
  return std::max(1, static_cast<int>(std::lround(0.5 * (length - 2))));
}

AttentionMask generate_mask_matrix(int length, int n_visible, Rng& rng) {
  if (length < 3) {
    throw DataError("generate_mask_matrix: length must be >= 3, got " + std::to_string(length));
  }
  if (n_visible < 1 || n_visible > length - 2) {
    throw DataError("generate_mask_matrix: n_visible must lie in [1, " +
                    std::to_string(length - 2) + "], got " + std::to_string(n_visible));
  }
  AttentionMask m = AttentionMask::all_masked(length);
  for (int i = 0; i < length; ++i) {
    std::vector<int> pool;
    pool.reserve(length - 1);
    for (int j = 0; j < length; ++j) {
      if (j != i) pool.push_back(j);
    }
    for (int j : rng.sample_values(std::move(pool), n_visible)) {
      m.set_visible(i, j, true);
    }
    if (i != 0) m.set_visible(i, 0, true);
  }
  return m;
}

}  // namespace duplex

#pragma once

#include <cstdint>
#include <vector>

#include "duplex/rng.hpp"
#include "duplex/tape.hpp"
#include "duplex/tensor.hpp"

namespace duplex {

// L x L attention visibility matrix for the one-layer decoder. A row lists
// the positions its token may attend to; the diagonal is always masked and
// position 0 is always visible to rows i != 0.
struct AttentionMask {
  int size = 0;
  std::vector<uint8_t> visible;  // row-major, 1 = visible

  bool is_visible(int i, int j) const {
    return visible[static_cast<size_t>(i) * size + j] != 0;
  }

  void set_visible(int i, int j, bool v) {
    visible[static_cast<size_t>(i) * size + j] = v ? 1 : 0;
  }

  static AttentionMask all_masked(int length) {
    AttentionMask m;
    m.size = length;
    m.visible.assign(static_cast<size_t>(length) * length, 0);
    return m;
  }

  // Additive form: 0 where visible, kMaskedLogit where masked.
  template <typename Real>
  Tensor<Real> additive() const {
    Tensor<Real> t(size, size);
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j) {
        t.at(i, j) = is_visible(i, j) ? Real(0) : Real(kMaskedLogit);
      }
    return t;
  }
};

// Per row i: a random sample of n_visible positions != i is made visible,
// plus position 0 when i != 0. The diagonal stays masked, so every token is
// reconstructed from context other than itself. Requires length >= 3 and
// 1 <= n_visible <= length - 2.
AttentionMask generate_mask_matrix(int length, int n_visible, Rng& rng);

// Default sample size when the run config does not pin one:
// max(1, round(0.5 * (length - 2))).
int default_visible_count(int length);

}  // namespace duplex

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "duplex/tensor.hpp"

namespace duplex {

// Additive stand-in for -inf in attention masks. exp(x + kMaskedLogit)
// underflows to exactly 0 for any activation magnitude this model produces,
// so masked positions get exactly zero probability.
inline constexpr double kMaskedLogit = -1e9;

// Reverse-mode autodiff over an eagerly evaluated operation tape. Values are
// computed at op-construction time; backward() replays the tape in reverse.
// Single-threaded by design: independent Tape instances share no state.
template <typename Real>
class Tape {
 public:
  using Id = int;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Id leaf(Tensor<Real> v, bool needs_grad = false) {
    return push(std::move(v), "leaf", {}, needs_grad);
  }

  Id constant(Tensor<Real> v) { return leaf(std::move(v), false); }

  const Tensor<Real>& value(Id id) const { return node_at(id).value; }

  const Tensor<Real>& grad(Id id) const {
    const Node& n = node_at(id);
    if (!n.needs_grad) throw TensorError("grad: node does not track gradients");
    return n.grad;
  }

  size_t num_nodes() const { return nodes_.size(); }

  // ---- primitives -------------------------------------------------------

  Id add(Id a, Id b) {
    const auto& A = value(a);
    const auto& B = value(b);
    require(A.same_shape(B), "add", "shapes " + A.shape_str() + " vs " + B.shape_str());
    Tensor<Real> out = A;
    for (size_t i = 0; i < out.size(); ++i) out.values[i] += B.values[i];
    Id id = push(std::move(out), "add", {a, b});
    set_back(id, [a, b, id](Tape& t) {
      const auto& g = t.node_at(id).grad;
      t.accumulate(a, [&](Tensor<Real>& ga) {
        for (size_t i = 0; i < g.size(); ++i) ga.values[i] += g.values[i];
      });
      t.accumulate(b, [&](Tensor<Real>& gb) {
        for (size_t i = 0; i < g.size(); ++i) gb.values[i] += g.values[i];
      });
    });
    return id;
  }

  // x: n x m, bias: 1 x m, broadcast over rows.
  Id add_rowvec(Id x, Id b) {
    const auto& X = value(x);
    const auto& B = value(b);
    require(B.rows() == 1 && B.cols() == X.cols(), "add_rowvec",
            "bias " + B.shape_str() + " for input " + X.shape_str());
    Tensor<Real> out = X;
    for (int r = 0; r < out.rows(); ++r)
      for (int c = 0; c < out.cols(); ++c) out.at(r, c) += B.at(0, c);
    Id id = push(std::move(out), "add_rowvec", {x, b});
    set_back(id, [x, b, id](Tape& t) {
      const auto& g = t.node_at(id).grad;
      t.accumulate(x, [&](Tensor<Real>& gx) {
        for (size_t i = 0; i < g.size(); ++i) gx.values[i] += g.values[i];
      });
      t.accumulate(b, [&](Tensor<Real>& gb) {
        for (int r = 0; r < g.rows(); ++r)
          for (int c = 0; c < g.cols(); ++c) gb.at(0, c) += g.at(r, c);
      });
    });
    return id;
  }

  Id scale(Id x, Real c) {
    Tensor<Real> out = value(x);
    for (auto& v : out.values) v *= c;
    Id id = push(std::move(out), "scale", {x});
    set_back(id, [x, c, id](Tape& t) {
      const auto& g = t.node_at(id).grad;
      t.accumulate(x, [&](Tensor<Real>& gx) {
        for (size_t i = 0; i < g.size(); ++i) gx.values[i] += c * g.values[i];
      });
    });
    return id;
  }

  Id matmul(Id a, Id b) {
    const auto& A = value(a);
    const auto& B = value(b);
    require(A.cols() == B.rows(), "matmul",
            "inner dims " + A.shape_str() + " x " + B.shape_str());
    Tensor<Real> out(A.rows(), B.cols());
    mm_accumulate(A, B, out);
    Id id = push(std::move(out), "matmul", {a, b});
    set_back(id, [a, b, id](Tape& t) {
      const auto& g = t.node_at(id).grad;
      const auto& A2 = t.value(a);
      const auto& B2 = t.value(b);
      // dA += G * B^T
      t.accumulate(a, [&](Tensor<Real>& ga) {
        for (int i = 0; i < g.rows(); ++i)
          for (int j = 0; j < g.cols(); ++j) {
            const Real gv = g.at(i, j);
            for (int k = 0; k < B2.rows(); ++k) ga.at(i, k) += gv * B2.at(k, j);
          }
      });
      // dB += A^T * G
      t.accumulate(b, [&](Tensor<Real>& gb) {
        for (int i = 0; i < A2.rows(); ++i)
          for (int k = 0; k < A2.cols(); ++k) {
            const Real av = A2.at(i, k);
            for (int j = 0; j < g.cols(); ++j) gb.at(k, j) += av * g.at(i, j);
          }
      });
    });
    return id;
  }

  Id transpose(Id x) {
    const auto& X = value(x);
    Tensor<Real> out(X.cols(), X.rows());
    for (int r = 0; r < X.rows(); ++r)
      for (int c = 0; c < X.cols(); ++c) out.at(c, r) = X.at(r, c);
    Id id = push(std::move(out), "transpose", {x});
    set_back(id, [x, id](Tape& t) {
      const auto& g = t.node_at(id).grad;
      t.accumulate(x, [&](Tensor<Real>& gx) {
        for (int r = 0; r < g.rows(); ++r)
          for (int c = 0; c < g.cols(); ++c) gx.at(c, r) += g.at(r, c);
      });
    });
    return id;
  }

  // Row-wise layer norm with learnable gain/bias (1 x m each).
  Id layer_norm(Id x, Id gain, Id bias) {
    const auto& X = value(x);
    const auto& G = value(gain);
    const auto& B = value(bias);
    require(G.rows() == 1 && G.cols() == X.cols(), "layer_norm",
            "gain " + G.shape_str() + " for input " + X.shape_str());
    require(B.rows() == 1 && B.cols() == X.cols(), "layer_norm",
            "bias " + B.shape_str() + " for input " + X.shape_str());
    require(X.cols() >= 1, "layer_norm", "needs at least one column");
    const int m = X.cols();
    Tensor<Real> out(X.rows(), m);
    Tensor<Real> xhat(X.rows(), m);
    std::vector<Real> inv_std(X.rows());
    const Real eps = Real(1e-5);
    for (int r = 0; r < X.rows(); ++r) {
      Real mean = 0;
      for (int c = 0; c < m; ++c) mean += X.at(r, c);
      mean /= Real(m);
      Real var = 0;
      for (int c = 0; c < m; ++c) {
        const Real d = X.at(r, c) - mean;
        var += d * d;
      }
      var /= Real(m);
      const Real inv = Real(1) / std::sqrt(var + eps);
      inv_std[r] = inv;
      for (int c = 0; c < m; ++c) {
        const Real xh = (X.at(r, c) - mean) * inv;
        xhat.at(r, c) = xh;
        out.at(r, c) = xh * G.at(0, c) + B.at(0, c);
      }
    }
    Id id = push(std::move(out), "layer_norm", {x, gain, bias});
    set_back(id, [x, gain, bias, id, xhat = std::move(xhat),
                  inv_std = std::move(inv_std)](Tape& t) {
      const auto& g = t.node_at(id).grad;
      const auto& G2 = t.value(gain);
      const int m2 = g.cols();
      t.accumulate(gain, [&](Tensor<Real>& gg) {
        for (int r = 0; r < g.rows(); ++r)
          for (int c = 0; c < m2; ++c) gg.at(0, c) += g.at(r, c) * xhat.at(r, c);
      });
      t.accumulate(bias, [&](Tensor<Real>& gb) {
        for (int r = 0; r < g.rows(); ++r)
          for (int c = 0; c < m2; ++c) gb.at(0, c) += g.at(r, c);
      });
      t.accumulate(x, [&](Tensor<Real>& gx) {
        for (int r = 0; r < g.rows(); ++r) {
          Real m1 = 0, m2sum = 0;
          for (int c = 0; c < m2; ++c) {
            const Real tc = g.at(r, c) * G2.at(0, c);
            m1 += tc;
            m2sum += tc * xhat.at(r, c);
          }
          m1 /= Real(m2);
          m2sum /= Real(m2);
          for (int c = 0; c < m2; ++c) {
            const Real tc = g.at(r, c) * G2.at(0, c);
            gx.at(r, c) += inv_std[r] * (tc - m1 - xhat.at(r, c) * m2sum);
          }
        }
      });
    });
    return id;
  }

  // Exact GELU: 0.5 x (1 + erf(x / sqrt(2))).
  Id gelu(Id x) {
    const auto& X = value(x);
    Tensor<Real> out = X;
    for (auto& v : out.values) {
      v = Real(0.5) * v * (Real(1) + Real(std::erf(static_cast<double>(v) / std::sqrt(2.0))));
    }
    Id id = push(std::move(out), "gelu", {x});
    set_back(id, [x, id](Tape& t) {
      const auto& g = t.node_at(id).grad;
      const auto& X2 = t.value(x);
      t.accumulate(x, [&](Tensor<Real>& gx) {
        for (size_t i = 0; i < g.size(); ++i) {
          const double xv = static_cast<double>(X2.values[i]);
          const double cdf = 0.5 * (1.0 + std::erf(xv / std::sqrt(2.0)));
          const double pdf = std::exp(-0.5 * xv * xv) / std::sqrt(2.0 * 3.14159265358979323846);
          gx.values[i] += g.values[i] * Real(cdf + xv * pdf);
        }
      });
    });
    return id;
  }

  Id softmax_rows(Id x) { return softmax_impl(x, nullptr); }

  // Softmax over logits + additive mask. The mask is data, not a tape node;
  // entries are 0 (visible) or kMaskedLogit (masked). A fully masked row is
  // rejected: its softmax would be meaningless.
  Id softmax_rows_masked(Id x, const Tensor<Real>& additive_mask) {
    const auto& X = value(x);
    require(X.same_shape(additive_mask), "softmax_rows_masked",
            "mask " + additive_mask.shape_str() + " for input " + X.shape_str());
    return softmax_impl(x, &additive_mask);
  }

  // Gather whole rows by index; also serves as embedding lookup when x is an
  // embedding table. Backward scatter-adds into the source rows.
  Id gather_rows(Id x, std::vector<int> idx) {
    const auto& X = value(x);
    for (int r : idx) {
      require(r >= 0 && r < X.rows(), "gather_rows",
              "row " + std::to_string(r) + " out of range for " + X.shape_str());
    }
    Tensor<Real> out(static_cast<int>(idx.size()), X.cols());
    for (size_t r = 0; r < idx.size(); ++r)
      for (int c = 0; c < X.cols(); ++c) out.at(static_cast<int>(r), c) = X.at(idx[r], c);
    Id id = push(std::move(out), "gather_rows", {x});
    set_back(id, [x, id, idx = std::move(idx)](Tape& t) {
      const auto& g = t.node_at(id).grad;
      t.accumulate(x, [&](Tensor<Real>& gx) {
        for (size_t r = 0; r < idx.size(); ++r)
          for (int c = 0; c < g.cols(); ++c) gx.at(idx[r], c) += g.at(static_cast<int>(r), c);
      });
    });
    return id;
  }

  Id gather_cols(Id x, std::vector<int> idx) {
    const auto& X = value(x);
    for (int c : idx) {
      require(c >= 0 && c < X.cols(), "gather_cols",
              "col " + std::to_string(c) + " out of range for " + X.shape_str());
    }
    Tensor<Real> out(X.rows(), static_cast<int>(idx.size()));
    for (int r = 0; r < X.rows(); ++r)
      for (size_t c = 0; c < idx.size(); ++c) out.at(r, static_cast<int>(c)) = X.at(r, idx[c]);
    Id id = push(std::move(out), "gather_cols", {x});
    set_back(id, [x, id, idx = std::move(idx)](Tape& t) {
      const auto& g = t.node_at(id).grad;
      t.accumulate(x, [&](Tensor<Real>& gx) {
        for (int r = 0; r < g.rows(); ++r)
          for (size_t c = 0; c < idx.size(); ++c) gx.at(r, idx[c]) += g.at(r, static_cast<int>(c));
      });
    });
    return id;
  }

  // Column-wise max over rows -> 1 x m. The argmax row per column is recorded
  // at forward time; ties route the gradient to the lowest row index.
  Id max_over_rows(Id x) {
    const auto& X = value(x);
    require(X.rows() >= 1, "max_over_rows", "needs at least one row, got " + X.shape_str());
    const int m = X.cols();
    Tensor<Real> out(1, m);
    std::vector<int> arg(m, 0);
    for (int c = 0; c < m; ++c) {
      Real best = X.at(0, c);
      int bi = 0;
      for (int r = 1; r < X.rows(); ++r) {
        if (X.at(r, c) > best) {
          best = X.at(r, c);
          bi = r;
        }
      }
      out.at(0, c) = best;
      arg[c] = bi;
    }
    Id id = push(std::move(out), "max_over_rows", {x});
    set_back(id, [x, id, arg = std::move(arg)](Tape& t) {
      const auto& g = t.node_at(id).grad;
      t.accumulate(x, [&](Tensor<Real>& gx) {
        for (int c = 0; c < g.cols(); ++c) gx.at(arg[c], c) += g.at(0, c);
      });
    });
    return id;
  }

  // Mean over rows of (logsumexp(row) - mean of logits at the row's target
  // ids). With a single target per row this is ordinary softmax
  // cross-entropy from logits; multiple targets average within the row.
  Id cross_entropy_rows(Id logits, const std::vector<std::vector<int>>& targets) {
    const auto& X = value(logits);
    require(static_cast<int>(targets.size()) == X.rows(), "cross_entropy_rows",
            "got " + std::to_string(targets.size()) + " target rows for logits " + X.shape_str());
    require(X.rows() >= 1, "cross_entropy_rows", "needs at least one row");
    for (const auto& row : targets) {
      require(!row.empty(), "cross_entropy_rows", "empty target row");
      for (int tgt : row) {
        require(tgt >= 0 && tgt < X.cols(), "cross_entropy_rows",
                "target " + std::to_string(tgt) + " out of range for " + X.shape_str());
      }
    }
    std::vector<Real> lse(X.rows());
    Real total = 0;
    for (int r = 0; r < X.rows(); ++r) {
      lse[r] = row_logsumexp(X, r);
      Real tmean = 0;
      for (int tgt : targets[r]) tmean += X.at(r, tgt);
      tmean /= Real(targets[r].size());
      total += lse[r] - tmean;
    }
    total /= Real(X.rows());
    Id id = push(Tensor<Real>::scalar(total), "cross_entropy_rows", {logits});
    set_back(id, [logits, id, targets, lse = std::move(lse)](Tape& t) {
      const Real g = t.node_at(id).grad.values[0];
      const auto& X2 = t.value(logits);
      const Real inv_rows = Real(1) / Real(X2.rows());
      t.accumulate(logits, [&](Tensor<Real>& gx) {
        for (int r = 0; r < X2.rows(); ++r) {
          const Real coeff = g * inv_rows;
          for (int c = 0; c < X2.cols(); ++c) {
            const Real p = std::exp(X2.at(r, c) - lse[r]);
            gx.at(r, c) += coeff * p;
          }
          const Real w = coeff / Real(targets[r].size());
          for (int tgt : targets[r]) gx.at(r, tgt) -= w;
        }
      });
    });
    return id;
  }

  // Mean over rows of (logsumexp(row) - sum_c probs[c] * logits[c]).
  // probs rows are expected to be normalized by the caller.
  Id soft_cross_entropy_rows(Id logits, const Tensor<Real>& probs) {
    const auto& X = value(logits);
    require(X.same_shape(probs), "soft_cross_entropy_rows",
            "probs " + probs.shape_str() + " for logits " + X.shape_str());
    require(X.rows() >= 1, "soft_cross_entropy_rows", "needs at least one row");
    std::vector<Real> lse(X.rows());
    Real total = 0;
    for (int r = 0; r < X.rows(); ++r) {
      lse[r] = row_logsumexp(X, r);
      Real dot = 0;
      for (int c = 0; c < X.cols(); ++c) dot += probs.at(r, c) * X.at(r, c);
      total += lse[r] - dot;
    }
    total /= Real(X.rows());
    Id id = push(Tensor<Real>::scalar(total), "soft_cross_entropy_rows", {logits});
    set_back(id, [logits, id, probs, lse = std::move(lse)](Tape& t) {
      const Real g = t.node_at(id).grad.values[0];
      const auto& X2 = t.value(logits);
      const Real inv_rows = Real(1) / Real(X2.rows());
      t.accumulate(logits, [&](Tensor<Real>& gx) {
        for (int r = 0; r < X2.rows(); ++r)
          for (int c = 0; c < X2.cols(); ++c) {
            const Real p = std::exp(X2.at(r, c) - lse[r]);
            gx.at(r, c) += g * inv_rows * (p - probs.at(r, c));
          }
      });
    });
    return id;
  }

  Id concat_rows(Id a, Id b) {
    const auto& A = value(a);
    const auto& B = value(b);
    require(A.cols() == B.cols(), "concat_rows",
            "cols differ: " + A.shape_str() + " vs " + B.shape_str());
    Tensor<Real> out(A.rows() + B.rows(), A.cols());
    std::copy(A.values.begin(), A.values.end(), out.values.begin());
    std::copy(B.values.begin(), B.values.end(), out.values.begin() + A.size());
    const int arows = A.rows();
    Id id = push(std::move(out), "concat_rows", {a, b});
    set_back(id, [a, b, id, arows](Tape& t) {
      const auto& g = t.node_at(id).grad;
      t.accumulate(a, [&](Tensor<Real>& ga) {
        for (int r = 0; r < arows; ++r)
          for (int c = 0; c < g.cols(); ++c) ga.at(r, c) += g.at(r, c);
      });
      t.accumulate(b, [&](Tensor<Real>& gb) {
        for (int r = arows; r < g.rows(); ++r)
          for (int c = 0; c < g.cols(); ++c) gb.at(r - arows, c) += g.at(r, c);
      });
    });
    return id;
  }

  // Horizontal concatenation of blocks with equal row counts.
  Id concat_cols(const std::vector<Id>& xs) {
    require(!xs.empty(), "concat_cols", "no inputs");
    const int rows = value(xs[0]).rows();
    int cols = 0;
    for (Id x : xs) {
      require(value(x).rows() == rows, "concat_cols",
              "row mismatch: " + value(x).shape_str() + " vs first block with " +
                  std::to_string(rows) + " rows");
      cols += value(x).cols();
    }
    Tensor<Real> out(rows, cols);
    std::vector<int> offsets(xs.size());
    int off = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
      offsets[i] = off;
      const auto& X = value(xs[i]);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < X.cols(); ++c) out.at(r, off + c) = X.at(r, c);
      off += X.cols();
    }
    Id id = push(std::move(out), "concat_cols", xs);
    set_back(id, [xs, id, offsets = std::move(offsets)](Tape& t) {
      const auto& g = t.node_at(id).grad;
      for (size_t i = 0; i < xs.size(); ++i) {
        const int w = t.value(xs[i]).cols();
        const int o = offsets[i];
        t.accumulate(xs[i], [&](Tensor<Real>& gx) {
          for (int r = 0; r < g.rows(); ++r)
            for (int c = 0; c < w; ++c) gx.at(r, c) += g.at(r, o + c);
        });
      }
    });
    return id;
  }

  Id slice_rows(Id x, int r0, int r1) {
    const auto& X = value(x);
    require(0 <= r0 && r0 <= r1 && r1 <= X.rows(), "slice_rows",
            "[" + std::to_string(r0) + ", " + std::to_string(r1) + ") of " + X.shape_str());
    Tensor<Real> out(r1 - r0, X.cols());
    for (int r = r0; r < r1; ++r)
      for (int c = 0; c < X.cols(); ++c) out.at(r - r0, c) = X.at(r, c);
    Id id = push(std::move(out), "slice_rows", {x});
    set_back(id, [x, id, r0](Tape& t) {
      const auto& g = t.node_at(id).grad;
      t.accumulate(x, [&](Tensor<Real>& gx) {
        for (int r = 0; r < g.rows(); ++r)
          for (int c = 0; c < g.cols(); ++c) gx.at(r0 + r, c) += g.at(r, c);
      });
    });
    return id;
  }

  Id slice_cols(Id x, int c0, int c1) {
    const auto& X = value(x);
    require(0 <= c0 && c0 <= c1 && c1 <= X.cols(), "slice_cols",
            "[" + std::to_string(c0) + ", " + std::to_string(c1) + ") of " + X.shape_str());
    Tensor<Real> out(X.rows(), c1 - c0);
    for (int r = 0; r < X.rows(); ++r)
      for (int c = c0; c < c1; ++c) out.at(r, c - c0) = X.at(r, c);
    Id id = push(std::move(out), "slice_cols", {x});
    set_back(id, [x, id, c0](Tape& t) {
      const auto& g = t.node_at(id).grad;
      t.accumulate(x, [&](Tensor<Real>& gx) {
        for (int r = 0; r < g.rows(); ++r)
          for (int c = 0; c < g.cols(); ++c) gx.at(r, c0 + c) += g.at(r, c);
      });
    });
    return id;
  }

  // x: 1 x m replicated into n rows. Backward sums over rows.
  Id repeat_rows(Id x, int n) {
    const auto& X = value(x);
    require(X.rows() == 1, "repeat_rows", "expected single row, got " + X.shape_str());
    require(n >= 1, "repeat_rows", "n must be >= 1");
    Tensor<Real> out(n, X.cols());
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < X.cols(); ++c) out.at(r, c) = X.at(0, c);
    Id id = push(std::move(out), "repeat_rows", {x});
    set_back(id, [x, id](Tape& t) {
      const auto& g = t.node_at(id).grad;
      t.accumulate(x, [&](Tensor<Real>& gx) {
        for (int r = 0; r < g.rows(); ++r)
          for (int c = 0; c < g.cols(); ++c) gx.at(0, c) += g.at(r, c);
      });
    });
    return id;
  }

  // ---- backward ----------------------------------------------------------

  // Loss must be scalar. Gradients are (re)computed from scratch on each call.
  void backward(Id loss) {
    const Node& ln = node_at(loss);
    if (ln.value.rows() != 1 || ln.value.cols() != 1) {
      throw TensorError("backward: loss must be scalar, got " + ln.value.shape_str());
    }
    for (Node& n : nodes_) {
      if (n.needs_grad) {
        n.grad = Tensor<Real>(n.value.rows(), n.value.cols());
      }
    }
    if (!nodes_[loss].needs_grad) return;  // constant graph: all grads zero
    nodes_[loss].grad.values[0] = Real(1);
    for (Id i = loss; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.needs_grad && n.back) n.back(*this);
    }
  }

 private:
  struct Node {
    Tensor<Real> value;
    Tensor<Real> grad;
    std::function<void(Tape&)> back;
    bool needs_grad = false;
    const char* op = "leaf";
  };

  std::vector<Node> nodes_;

  static void require(bool cond, const char* op, const std::string& detail) {
    if (!cond) throw TensorError(std::string(op) + ": " + detail);
  }

  Node& node_at(Id id) {
    require(id >= 0 && id < static_cast<Id>(nodes_.size()), "tape", "bad node id");
    return nodes_[id];
  }
  const Node& node_at(Id id) const {
    require(id >= 0 && id < static_cast<Id>(nodes_.size()), "tape", "bad node id");
    return nodes_[id];
  }

  Id push(Tensor<Real> v, const char* op, const std::vector<Id>& parents,
          bool leaf_needs_grad = false) {
    Node n;
    n.value = std::move(v);
    n.op = op;
    n.needs_grad = leaf_needs_grad;
    for (Id p : parents) {
      if (node_at(p).needs_grad) n.needs_grad = true;
    }
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  template <typename F>
  void set_back(Id id, F&& f) {
    if (nodes_[id].needs_grad) nodes_[id].back = std::forward<F>(f);
  }

  // Run fn against the parent's gradient buffer iff the parent tracks grads.
  template <typename F>
  void accumulate(Id parent, F&& fn) {
    Node& p = nodes_[parent];
    if (p.needs_grad) fn(p.grad);
  }

  static void mm_accumulate(const Tensor<Real>& A, const Tensor<Real>& B, Tensor<Real>& out) {
    for (int i = 0; i < A.rows(); ++i)
      for (int k = 0; k < A.cols(); ++k) {
        const Real av = A.at(i, k);
        for (int j = 0; j < B.cols(); ++j) out.at(i, j) += av * B.at(k, j);
      }
  }

  static Real row_logsumexp(const Tensor<Real>& X, int r) {
    Real mx = X.at(r, 0);
    for (int c = 1; c < X.cols(); ++c) mx = std::max(mx, X.at(r, c));
    Real s = 0;
    for (int c = 0; c < X.cols(); ++c) s += std::exp(X.at(r, c) - mx);
    return mx + std::log(s);
  }

  Id softmax_impl(Id x, const Tensor<Real>* mask) {
    const auto& X = value(x);
    require(X.cols() >= 1, "softmax_rows", "needs at least one column");
    Tensor<Real> out(X.rows(), X.cols());
    for (int r = 0; r < X.rows(); ++r) {
      Real mx = -std::numeric_limits<Real>::infinity();
      for (int c = 0; c < X.cols(); ++c) {
        Real v = X.at(r, c) + (mask ? mask->at(r, c) : Real(0));
        out.at(r, c) = v;
        mx = std::max(mx, v);
      }
      if (mask) {
        require(mx > Real(kMaskedLogit / 2), "softmax_rows_masked",
                "row " + std::to_string(r) + " is fully masked");
      }
      Real s = 0;
      for (int c = 0; c < X.cols(); ++c) {
        const Real e = std::exp(out.at(r, c) - mx);
        out.at(r, c) = e;
        s += e;
      }
      for (int c = 0; c < X.cols(); ++c) out.at(r, c) /= s;
    }
    Id id = push(std::move(out), mask ? "softmax_rows_masked" : "softmax_rows", {x});
    set_back(id, [x, id](Tape& t) {
      const auto& g = t.node_at(id).grad;
      const auto& P = t.value(id);
      t.accumulate(x, [&](Tensor<Real>& gx) {
        for (int r = 0; r < g.rows(); ++r) {
          Real s = 0;
          for (int c = 0; c < g.cols(); ++c) s += P.at(r, c) * g.at(r, c);
          for (int c = 0; c < g.cols(); ++c) gx.at(r, c) += P.at(r, c) * (g.at(r, c) - s);
        }
      });
    });
    return id;
  }
};

}  // namespace duplex

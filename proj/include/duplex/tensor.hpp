#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace duplex {

class TensorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix. Everything in the engine is 2-D: scalars are 1x1,
// vectors are 1xN. Real is float (training/serving) or double (gradient
// checking).
template <typename Real>
struct Tensor {
  std::vector<int> shape;  // {rows, cols}
  std::vector<Real> values;

  Tensor() : shape{0, 0} {}

  Tensor(int rows, int cols, Real fill = Real(0)) : shape{rows, cols} {
    if (rows < 0 || cols < 0) {
      throw TensorError("tensor: negative dimension");
    }
    values.assign(static_cast<size_t>(rows) * static_cast<size_t>(cols), fill);
  }

  static Tensor scalar(Real v) {
    Tensor t(1, 1);
    t.values[0] = v;
    return t;
  }

  static Tensor row(std::vector<Real> vals) {
    Tensor t;
    t.shape = {1, static_cast<int>(vals.size())};
    t.values = std::move(vals);
    return t;
  }

  int rows() const { return shape[0]; }
  int cols() const { return shape[1]; }
  size_t size() const { return values.size(); }

  Real& at(int r, int c) { return values[static_cast<size_t>(r) * cols() + c]; }
  Real at(int r, int c) const { return values[static_cast<size_t>(r) * cols() + c]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  bool all_finite() const {
    for (Real v : values) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  std::string shape_str() const {
    return "(" + std::to_string(rows()) + "x" + std::to_string(cols()) + ")";
  }
};

}  // namespace duplex

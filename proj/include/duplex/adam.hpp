#pragma once

#include <cmath>
#include <map>
#include <string>

#include "duplex/params.hpp"
#include "duplex/tensor.hpp"

namespace duplex {

// Adam with bias correction. Moment buffers are created lazily per parameter
// name; parameters with all-zero gradients do not move.
template <typename Real>
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(ParamStore<Real>& params, const std::map<std::string, Tensor<Real>>& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, t_);
    const double bc2 = 1.0 - std::pow(b2_, t_);
    for (const auto& [name, g] : grads) {
      Tensor<Real>& p = params.at(name);
      if (!p.same_shape(g)) {
        throw TensorError("adam: gradient shape " + g.shape_str() + " != param '" + name +
                          "' shape " + p.shape_str());
      }
      auto& m = moment(m_, name, p);
      auto& v = moment(v_, name, p);
      for (size_t i = 0; i < p.size(); ++i) {
        const double gv = static_cast<double>(g.values[i]);
        const double mi = b1_ * static_cast<double>(m.values[i]) + (1.0 - b1_) * gv;
        const double vi = b2_ * static_cast<double>(v.values[i]) + (1.0 - b2_) * gv * gv;
        m.values[i] = Real(mi);
        v.values[i] = Real(vi);
        const double update = lr_ * (mi / bc1) / (std::sqrt(vi / bc2) + eps_);
        p.values[i] = Real(static_cast<double>(p.values[i]) - update);
      }
    }
  }

  long steps_taken() const { return t_; }

 private:
  Tensor<Real>& moment(std::map<std::string, Tensor<Real>>& store, const std::string& name,
                       const Tensor<Real>& shape_like) {
    auto it = store.find(name);
    if (it == store.end()) {
      it = store.emplace(name, Tensor<Real>(shape_like.rows(), shape_like.cols())).first;
    }
    return it->second;
  }

  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::map<std::string, Tensor<Real>> m_, v_;
};

}  // namespace duplex

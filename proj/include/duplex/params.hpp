#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "duplex/tape.hpp"
#include "duplex/tensor.hpp"

namespace duplex {

// Named parameter tensors. std::map keeps iteration order deterministic.
template <typename Real>
struct ParamStore {
  std::map<std::string, Tensor<Real>> values;

  void add(const std::string& name, Tensor<Real> t) {
    auto [it, inserted] = values.emplace(name, std::move(t));
    (void)it;
    if (!inserted) throw TensorError("param '" + name + "' already exists");
  }

  Tensor<Real>& at(const std::string& name) {
    auto it = values.find(name);
    if (it == values.end()) throw TensorError("unknown param '" + name + "'");
    return it->second;
  }

  const Tensor<Real>& at(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end()) throw TensorError("unknown param '" + name + "'");
    return it->second;
  }

  bool has(const std::string& name) const { return values.count(name) != 0; }
  size_t count() const { return values.size(); }

  size_t element_count() const {
    size_t n = 0;
    for (const auto& [name, t] : values) n += t.size();
    return n;
  }
};

// Binds store parameters into a tape on first use, one leaf per name, so
// gradients from every use site (e.g. tied embeddings) accumulate into a
// single node.
template <typename Real>
class BoundParams {
 public:
  using Id = typename Tape<Real>::Id;

  BoundParams(Tape<Real>& tape, const ParamStore<Real>& store, bool trainable = true)
      : tape_(&tape), store_(&store), trainable_(trainable) {}

  Id use(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Id id = tape_->leaf(store_->at(name), trainable_);
    bound_.emplace(name, id);
    return id;
  }

  const ParamStore<Real>& store() const { return *store_; }
  bool trainable() const { return trainable_; }

  // Gradients for every parameter in the store after tape.backward(); names
  // never touched by the graph report zeros.
  std::map<std::string, Tensor<Real>> collect_grads() const {
    std::map<std::string, Tensor<Real>> out;
    for (const auto& [name, t] : store_->values) {
      auto it = bound_.find(name);
      if (it != bound_.end()) {
        out.emplace(name, tape_->grad(it->second));
      } else {
        out.emplace(name, Tensor<Real>(t.rows(), t.cols()));
      }
    }
    return out;
  }

 private:
  Tape<Real>* tape_;
  const ParamStore<Real>* store_;
  bool trainable_;
  std::map<std::string, Id> bound_;
};

// Evaluates build (which must return a scalar loss id) and returns the
// gradient of the loss for every named parameter.
template <typename Real, typename Build>
std::map<std::string, Tensor<Real>> gradients(const ParamStore<Real>& params, Build&& build) {
  Tape<Real> tape;
  BoundParams<Real> bp(tape, params, true);
  typename Tape<Real>::Id loss = build(tape, bp);
  const auto& lv = tape.value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw TensorError("gradients: loss must be scalar, got " + lv.shape_str());
  }
  tape.backward(loss);
  return bp.collect_grads();
}

// Forward-only evaluation of a scalar graph.
template <typename Real, typename Build>
Real loss_value(const ParamStore<Real>& params, Build&& build) {
  Tape<Real> tape;
  BoundParams<Real> bp(tape, params, false);
  typename Tape<Real>::Id loss = build(tape, bp);
  const auto& lv = tape.value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw TensorError("loss_value: loss must be scalar, got " + lv.shape_str());
  }
  return lv.values[0];
}

}  // namespace duplex

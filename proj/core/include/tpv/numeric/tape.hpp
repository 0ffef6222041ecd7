#pragma once

#include <cstdint>
#include <functional>
#include <deque>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tpv/numeric/tensor.hpp"

namespace tpv::numeric {

// A named learnable tensor. The tensor always carries requires_grad.
template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T> tensor;
};

// Ordered collection of uniquely named parameters.
template <typename T>
class ParameterStore {
 public:
  Parameter<T>& add(std::string name, BasicTensor<T> tensor);

  bool contains(std::string_view name) const;
  Parameter<T>& at(std::string_view name);
  const Parameter<T>& at(std::string_view name) const;

  std::vector<Parameter<T>>& items() { return params_; }
  const std::vector<Parameter<T>>& items() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::int64_t value_count() const;

  template <typename U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (const auto& p : params_) out.add(p.name, p.tensor.template cast<U>());
    return out;
  }

 private:
  std::vector<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
using GradientMap = std::map<std::string, BasicTensor<T>>;

template <typename T>
class Tape;

// Handle to a value recorded on a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const BasicTensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  std::int64_t dim(std::size_t axis) const { return value().dim(axis); }
  bool requires_grad() const;

 private:
  Tape<T>* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

// Reverse-mode recording of one forward evaluation. Nodes are appended in
// evaluation order; backward walks them in reverse and accumulates gradients.
template <typename T>
class Tape {
 public:
  // Receives the node's output value and its gradient and pushes
  // contributions into the inputs it captured, through accumulate().
  using BackwardFn = std::function<void(const BasicTensor<T>& out, const BasicTensor<T>& out_grad, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(BasicTensor<T> value);
  // Leaf tied to a parameter; gradients are reported under its name.
  Var<T> parameter(const ParameterStore<T>& store, std::string_view name);
  // Leaf that requires grad if the tensor says so (no name attached).
  Var<T> leaf(BasicTensor<T> value);

  // Appends an op result. The backward closure is dropped when no input needs
  // a gradient.
  Var<T> record(BasicTensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn backward);
  Var<T> record(BasicTensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn backward);

  const BasicTensor<T>& value(std::uint32_t id) const { return nodes_[id].value; }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }

  // Adds `g` into the gradient buffer of `v` (no-op when v needs no grad).
  void accumulate(Var<T> v, const BasicTensor<T>& g);
  // Mutable gradient buffer of `v`, zero-allocated on first use.
  BasicTensor<T>& grad_buffer(Var<T> v);

  // Runs reverse accumulation from a scalar loss. Every parameter of `store`
  // gets an entry; parameters the loss does not reach get zeros.
  GradientMap<T> backward(Var<T> loss, const ParameterStore<T>& store);
  // Same walk, returning gradients of arbitrary leaves.
  void backward(Var<T> loss);
  // Gradient of `v` after backward() (zeros if never reached).
  BasicTensor<T> grad(Var<T> v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    BasicTensor<T> value;
    BasicTensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
    std::string param_name;
  };

  std::deque<Node> nodes_;
};

template <typename T>
const BasicTensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace tpv::numeric

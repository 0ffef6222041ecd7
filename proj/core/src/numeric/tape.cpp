#include "tpv/numeric/tape.hpp"

#include "tpv/errors.hpp"

namespace tpv::numeric {

template <typename T>
Parameter<T>& ParameterStore<T>::add(std::string name, BasicTensor<T> tensor) {
  if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
  tensor.set_requires_grad(true);
  index_.emplace(name, params_.size());
  params_.push_back({std::move(name), std::move(tensor)});
  return params_.back();
}

template <typename T>
bool ParameterStore<T>::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

template <typename T>
Parameter<T>& ParameterStore<T>::at(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ContractError("unknown parameter: " + std::string(name));
  return params_[it->second];
}

template <typename T>
const Parameter<T>& ParameterStore<T>::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ContractError("unknown parameter: " + std::string(name));
  return params_[it->second];
}

template <typename T>
std::int64_t ParameterStore<T>::value_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <typename T>
Var<T> Tape<T>::constant(BasicTensor<T> value) {
  Node node;
  node.value = std::move(value);
  node.value.set_requires_grad(false);
  nodes_.push_back(std::move(node));
  return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::leaf(BasicTensor<T> value) {
  Node node;
  node.requires_grad = value.requires_grad();
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::parameter(const ParameterStore<T>& store, std::string_view name) {
  const auto& p = store.at(name);
  Node node;
  node.value = p.tensor;
  node.requires_grad = true;
  node.param_name = p.name;
  nodes_.push_back(std::move(node));
  return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::record(BasicTensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn backward) {
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  Node node;
  node.value = std::move(value);
  node.requires_grad = needs;
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::record(BasicTensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn backward) {
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  Node node;
  node.value = std::move(value);
  node.requires_grad = needs;
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

template <typename T>
BasicTensor<T>& Tape<T>::grad_buffer(Var<T> v) {
  auto& node = nodes_[v.id()];
  if (node.grad.empty()) node.grad = BasicTensor<T>(node.value.shape());
  return node.grad;
}

template <typename T>
void Tape<T>::accumulate(Var<T> v, const BasicTensor<T>& g) {
  if (!nodes_[v.id()].requires_grad) return;
  auto& buf = grad_buffer(v);
  if (buf.numel() != g.numel()) {
    throw DimensionError("gradient " + shape_str(g.shape()) + " does not match value " + shape_str(buf.shape()));
  }
  auto dst = buf.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (loss.value().numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  for (auto& n : nodes_) n.grad = BasicTensor<T>();
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad = BasicTensor<T>::full(loss.shape(), T{1});
  for (std::int64_t i = loss.id(); i >= 0; --i) {
    auto& node = nodes_[static_cast<std::size_t>(i)];
    if (!node.backward || node.grad.empty()) continue;
    node.backward(node.value, node.grad, *this);
  }
}

template <typename T>
GradientMap<T> Tape<T>::backward(Var<T> loss, const ParameterStore<T>& store) {
  backward(loss);
  GradientMap<T> out;
  for (const auto& p : store.items()) out.emplace(p.name, BasicTensor<T>(p.tensor.shape()));
  for (const auto& n : nodes_) {
    if (n.param_name.empty() || n.grad.empty()) continue;
    auto it = out.find(n.param_name);
    if (it == out.end()) continue;
    auto dst = it->second.data();
    auto src = n.grad.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  return out;
}

template <typename T>
BasicTensor<T> Tape<T>::grad(Var<T> v) const {
  const auto& n = nodes_[v.id()];
  if (n.grad.empty()) return BasicTensor<T>(n.value.shape());
  return n.grad;
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace tpv::numeric

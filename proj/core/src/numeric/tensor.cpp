#include "tpv/numeric/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tpv/errors.hpp"

namespace tpv::numeric {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) {
    if (e < 0) throw DimensionError("negative extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), T{0}) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_)) {
    throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_str(shape_));
  }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value) {
  BasicTensor out(std::move(shape));
  std::fill(out.data_.begin(), out.data_.end(), value);
  return out;
}

template <typename T>
T BasicTensor<T>::item() const {
  if (data_.size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const& {
  BasicTensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) && {
  if (shape_numel(shape) != numel()) {
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

template <typename T>
bool all_finite(const BasicTensor<T>& t) {
  for (T v : t.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <typename T>
void validate_finite(const BasicTensor<T>& t, const std::string& what) {
  const auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!std::isfinite(d[i])) {
      std::ostringstream os;
      os << what << ": non-finite value " << d[i] << " at flat index " << i << " of " << shape_str(t.shape());
      throw NumericError(os.str());
    }
  }
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template bool all_finite(const BasicTensor<float>&);
template bool all_finite(const BasicTensor<double>&);
template void validate_finite(const BasicTensor<float>&, const std::string&);
template void validate_finite(const BasicTensor<double>&, const std::string&);

}  // namespace tpv::numeric

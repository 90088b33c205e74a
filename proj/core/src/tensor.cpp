#include "voxmae/numcore/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace voxmae::numcore {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_size(shape_) != values_.size()) {
    throw std::invalid_argument("tensor shape " + shape_str(shape_) + " does not match " +
                                std::to_string(values_.size()) + " values");
  }
}

template <typename T>
void Tensor<T>::fill(T v) {
  for (auto& x : values_) x = v;
}

template <typename T>
Tensor<T>& Tensor<T>::operator+=(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw std::invalid_argument("tensor add: shape " + shape_str(shape_) + " vs " + shape_str(other.shape_));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

template <typename T>
void Tensor<T>::reshape(Shape shape) {
  if (shape_size(shape) != values_.size()) {
    throw std::invalid_argument("reshape " + shape_str(shape_) + " -> " + shape_str(shape));
  }
  shape_ = std::move(shape);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  for (auto v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace voxmae::numcore

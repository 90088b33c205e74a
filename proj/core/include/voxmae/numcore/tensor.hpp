#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace voxmae::numcore {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor. Most operations treat it as a matrix of
// shape[0] rows by the product of the remaining extents.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros_like(const Tensor& other) {
    if (other.shape_.empty() && other.values_.empty()) return Tensor();
    return Tensor(other.shape_);
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  std::size_t rows() const { return shape_.empty() ? 1 : shape_[0]; }
  std::size_t cols() const {
    if (shape_.size() == 2) return shape_[1];
    if (shape_.size() <= 1) return 1;
    std::size_t n = 1;
    for (std::size_t i = 1; i < shape_.size(); ++i) n *= shape_[i];
    return n;
  }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  std::vector<T>& storage() { return values_; }
  const std::vector<T>& storage() const { return values_; }

  T* data() { return values_.data(); }
  const T* data() const { return values_.data(); }
  T* row(std::size_t r) { return values_.data() + r * cols(); }
  const T* row(std::size_t r) const { return values_.data() + r * cols(); }

  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }
  T& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  void fill(T v);
  Tensor& operator+=(const Tensor& other);
  void reshape(Shape shape);
  bool all_finite() const;

  template <typename U>
  Tensor<U> cast() const {
    if (shape_.empty() && values_.empty()) return Tensor<U>();
    std::vector<U> out(values_.begin(), values_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  Shape shape_;
  std::vector<T> values_;
};

// A learned tensor with its gradient accumulator and a stable name used
// for checkpoints and diagnostics.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor<T>::zeros_like(value)) {}

  void zero_grad() { grad = Tensor<T>::zeros_like(value); }

  template <typename U>
  Parameter<U> cast() const {
    Parameter<U> p(name, value.template cast<U>());
    p.grad = grad.template cast<U>();
    return p;
  }
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace voxmae::numcore

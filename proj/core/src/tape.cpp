#include "voxmae/numcore/tape.hpp"

#include <stdexcept>

namespace voxmae::numcore {

template <typename T>
Var Tape<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::input(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::parameter(Parameter<T>& param) {
  if (auto it = bound_.find(&param); it != bound_.end()) return Var{it->second};
  if (param.grad.shape() != param.value.shape()) param.zero_grad();
  Node n;
  n.value = param.value;
  n.param = &param;
  n.requires_grad = true;
  Var v = push(std::move(n));
  bound_.emplace(&param, v.id);
  param_nodes_.push_back(v.id);
  return v;
}

template <typename T>
Var Tape<T>::record(Tensor<T> value, std::initializer_list<Var> parents, Backward backward) {
  return record(std::move(value), std::vector<Var>(parents), std::move(backward));
}

template <typename T>
Var Tape<T>::record(Tensor<T> value, const std::vector<Var>& parents, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (auto p : parents) {
    if (nodes_.at(p.id).requires_grad) {
      n.requires_grad = true;
      break;
    }
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

template <typename T>
Tensor<T>& Tape<T>::grad(Var v) {
  Node& n = nodes_.at(v.id);
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor<T>::zeros_like(n.value);
  return n.grad;
}

template <typename T>
void Tape<T>::backward(Var root) {
  if (value(root).size() != 1) {
    throw std::invalid_argument("backward on non-scalar of shape " + shape_str(value(root).shape()));
  }
  Tensor<T> seed(value(root).shape(), T(1));
  backward(root, seed);
}

template <typename T>
void Tape<T>::backward(Var root, const Tensor<T>& seed) {
  if (seed.shape() != value(root).shape()) {
    throw std::invalid_argument("backward seed shape " + shape_str(seed.shape()) + " vs " +
                                shape_str(value(root).shape()));
  }
  grad(root) += seed;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.shape() != n.value.shape()) continue;
    if (n.backward) n.backward(*this);
    if (i == 0) break;
  }
  if (!options_.accumulate_into_parameters) return;
  for (auto id : param_nodes_) {
    Node& n = nodes_[id];
    if (n.grad.shape() != n.value.shape()) continue;
    const bool corrupt = !options_.corrupt_prefix.empty() && n.param->name.starts_with(options_.corrupt_prefix);
    auto& dst = n.param->grad.storage();
    const auto& src = n.grad.storage();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += corrupt ? -src[k] : src[k];
  }
}

template <typename T>
std::vector<std::pair<Parameter<T>*, const Tensor<T>*>> Tape<T>::parameter_grads() const {
  std::vector<std::pair<Parameter<T>*, const Tensor<T>*>> out;
  for (auto id : param_nodes_) {
    const Node& n = nodes_[id];
    if (n.grad.shape() != n.value.shape()) continue;
    out.emplace_back(n.param, &n.grad);
  }
  return out;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace voxmae::numcore

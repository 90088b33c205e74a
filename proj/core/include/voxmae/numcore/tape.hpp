#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "voxmae/numcore/tensor.hpp"

namespace voxmae::numcore {

// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
  bool valid() const { return id != static_cast<std::size_t>(-1); }
};

struct TapeOptions {
  // Parameters receive their gradient on backward(). When false, the
  // gradient stays on the tape and is read back with parameter_grads().
  bool accumulate_into_parameters = true;
  // Negates the gradient delivered to every parameter whose name starts
  // with this prefix. Used only to build negative controls.
  std::string corrupt_prefix;
};

// Reverse-mode recording of one forward pass. Nodes are appended in
// evaluation order, so replaying them backwards is a valid topological
// order.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&)>;

  Tape() = default;
  explicit Tape(TapeOptions options) : options_(std::move(options)) {}

  Var constant(Tensor<T> value);
  Var input(Tensor<T> value);  // differentiable leaf not bound to a Parameter
  Var parameter(Parameter<T>& param);

  // Records an operation. `backward` reads grad(result) and adds into the
  // grads of its parents; it runs only if the result requires a gradient.
  Var record(Tensor<T> value, std::initializer_list<Var> parents, Backward backward);
  Var record(Tensor<T> value, const std::vector<Var>& parents, Backward backward);

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  Tensor<T>& grad(Var v);
  const Shape& shape(Var v) const { return value(v).shape(); }
  std::size_t size() const { return nodes_.size(); }

  void backward(Var root);                       // root must be a scalar
  void backward(Var root, const Tensor<T>& seed);  // vector-Jacobian product

  // Gradients per bound parameter, in the order they were first bound.
  std::vector<std::pair<Parameter<T>*, const Tensor<T>*>> parameter_grads() const;

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    Backward backward;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Node node);

  TapeOptions options_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::size_t> bound_;
  std::vector<std::size_t> param_nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace voxmae::numcore

#ifndef KGE_TAPE_H_
#define KGE_TAPE_H_

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "kge/tensor.h"

namespace kge {

// Trainable array plus its accumulated gradient. Lives outside any tape so
// that one set of weights can be bound to many short-lived tapes.
template <typename T>
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor<T> value)
      : name(std::move(name)), value(std::move(value)), grad(this->value.shape()) {}

  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  void zero_grad() { grad.fill(T(0)); }
};

// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
  bool valid() const { return id != static_cast<std::size_t>(-1); }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so a node's
// inputs always precede it and backward() is a single reverse sweep.
template <typename T>
class Tape {
 public:
  // Receives the gradient flowing into the node; pushes it to the inputs.
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // With gradients disabled, parameters bind as constants and no backward
  // closures are stored (evaluation mode).
  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor<T> value);
  Var variable(Tensor<T> value);
  Var param(Parameter<T>& p);

  // Appends an op output. The backward rule is kept only when some input
  // requires a gradient.
  Var record(Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn backward);

  const Tensor<T>& value(Var v) const;
  const Shape& shape(Var v) const { return value(v).shape(); }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Gradient buffer of v, allocated (zero) on first use; nullptr when v
  // does not require a gradient. Parameter nodes alias Parameter::grad.
  Tensor<T>* grad_sink(Var v);

  // Gradient accumulated on a non-parameter node after backward().
  const Tensor<T>& grad(Var v) const;

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  Node& node(Var v);
  const Node& node(Var v) const;

  std::deque<Node> nodes_;  // deque: value() references survive later records
  bool grad_enabled_ = true;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace kge

#endif  // KGE_TAPE_H_

#include "kge/tape.h"

#include "kge/error.h"

namespace kge {

template <typename T>
typename Tape<T>::Node& Tape<T>::node(Var v) {
  if (v.id >= nodes_.size()) throw ContractError("variable does not belong to this tape");
  return nodes_[v.id];
}

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
  if (v.id >= nodes_.size()) throw ContractError("variable does not belong to this tape");
  return nodes_[v.id];
}

template <typename T>
Var Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::variable(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::param(Parameter<T>& p) {
  Node n;
  n.param = &p;
  n.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::record(Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (Var in : inputs) {
      if (node(in).requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
    if (n.requires_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var v) const {
  const Node& n = node(v);
  return n.param ? n.param->value : n.value;
}

template <typename T>
Tensor<T>* Tape<T>::grad_sink(Var v) {
  Node& n = node(v);
  if (!n.requires_grad) return nullptr;
  if (n.param) return &n.param->grad;
  if (!n.has_grad) {
    n.grad = Tensor<T>(n.value.shape());
    n.has_grad = true;
  }
  return &n.grad;
}

template <typename T>
const Tensor<T>& Tape<T>::grad(Var v) const {
  const Node& n = node(v);
  if (n.param) return n.param->grad;
  if (!n.has_grad) throw ContractError("no gradient recorded for variable");
  return n.grad;
}

template <typename T>
void Tape<T>::backward(Var loss) {
  Node& root = node(loss);
  const Tensor<T>& lv = root.param ? root.param->value : root.value;
  if (lv.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_string(lv.shape()));
  }
  Tensor<T>* seed = grad_sink(loss);
  if (!seed) return;
  (*seed)[0] += T(1);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || !n.has_grad) continue;
    n.backward(*this, n.grad);
    // Intermediate gradients are dead once propagated.
    n.grad = Tensor<T>();
    n.has_grad = false;
    n.backward = nullptr;
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace kge

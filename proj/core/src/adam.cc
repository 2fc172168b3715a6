#include "kge/adam.h"

#include <cmath>

#include "kge/error.h"

namespace kge {

template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state, double lr) {
  if (state.first_moment.empty()) {
    for (const Parameter<T>* p : params) {
      state.first_moment.emplace_back(p->value.shape());
      state.second_moment.emplace_back(p->value.shape());
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam_step: state tracks " + std::to_string(state.first_moment.size()) + " parameters, got " +
                     std::to_string(params.size()));
  }
  ++state.step;
  const double b1 = state.options.beta1, b2 = state.options.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const T step_size = static_cast<T>(lr / c1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
  const T eps = static_cast<T>(state.options.eps);
  const T tb1 = static_cast<T>(b1), tb2 = static_cast<T>(b2);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = *params[i];
    Tensor<T>& m = state.first_moment[i];
    Tensor<T>& v = state.second_moment[i];
    if (m.shape() != p.value.shape() || p.grad.shape() != p.value.shape()) {
      throw ShapeError("adam_step: shape mismatch for parameter " + p.name);
    }
    T* w = p.value.data();
    const T* g = p.grad.data();
    T* mm = m.data();
    T* vv = v.data();
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      mm[k] = tb1 * mm[k] + (T(1) - tb1) * g[k];
      vv[k] = tb2 * vv[k] + (T(1) - tb2) * g[k] * g[k];
      w[k] -= step_size * mm[k] / (std::sqrt(vv[k]) * inv_sqrt_c2 + eps);
    }
  }
}

template void adam_step<float>(std::span<Parameter<float>* const>, AdamState<float>&, double);
template void adam_step<double>(std::span<Parameter<double>* const>, AdamState<double>&, double);

}  // namespace kge

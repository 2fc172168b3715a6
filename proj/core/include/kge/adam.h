#ifndef KGE_ADAM_H_
#define KGE_ADAM_H_

#include <cstdint>
#include <span>
#include <vector>

#include "kge/tape.h"

namespace kge {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First and second moment accumulators, one pair per parameter in the order
// the parameters are passed to adam_step.
template <typename T>
struct AdamState {
  AdamOptions options;
  std::int64_t step = 0;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
};

// One bias-corrected Adam update of every parameter from its grad. The state
// is sized lazily on the first call; later calls must pass the same
// parameters in the same order.
template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state, double lr);

extern template void adam_step<float>(std::span<Parameter<float>* const>, AdamState<float>&, double);
extern template void adam_step<double>(std::span<Parameter<double>* const>, AdamState<double>&, double);

}  // namespace kge

#endif  // KGE_ADAM_H_

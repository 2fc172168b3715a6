#ifndef KGE_OPS_H_
#define KGE_OPS_H_

#include <cstddef>
#include <span>
#include <vector>

#include "kge/rng.h"
#include "kge/tape.h"
#include "kge/tensor.h"

namespace kge {

enum class Mode { kTrain, kEval };

// Non-trainable batch-norm buffers.
template <typename T>
struct BatchNormStats {
  explicit BatchNormStats(std::size_t features = 0)
      : running_mean({1, features}, T(0)), running_var({1, features}, T(1)) {}

  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);
};

// c = a b, or a bᵀ when transpose_b is set.
template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b, bool transpose_b = false);

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);

// x [m x n] plus a [1 x n] row broadcast over all rows.
template <typename T>
Var add_bias(Tape<T>& tape, Var x, Var bias);

template <typename T>
Var scale(Tape<T>& tape, Var x, T factor);

template <typename T>
Var relu(Tape<T>& tape, Var x);

template <typename T>
Var sigmoid(Tape<T>& tape, Var x);

// Row-wise softmax of (scale * x), stabilized by subtracting the row max.
template <typename T>
Var softmax_rows(Tape<T>& tape, Var x, T scale = T(1));

// Inverted dropout: survivors are rescaled by 1 / (1 - rate). Identity in
// eval mode or at rate 0. Throws ParameterError unless 0 <= rate < 1.
template <typename T>
Var dropout(Tape<T>& tape, Var x, double rate, Mode mode, Rng& rng);

// Per-feature normalization over the batch (rows). Train mode needs at
// least two rows and updates the running statistics.
template <typename T>
Var batch_norm(Tape<T>& tape, Var x, Var gamma, Var beta, BatchNormStats<T>& stats, Mode mode);

// Normalization over the last dimension of each row.
template <typename T>
Var layer_norm(Tape<T>& tape, Var x, Var gamma, Var beta, T eps = T(1e-5));

// Interleaves two [B x d] tensors into [2B x d]: row 2i is a_i and row
// 2i + 1 is b_i. For single rows this simply stacks a over b.
template <typename T>
Var concat_rows(Tape<T>& tape, Var a, Var b);

// Inverse of concat_rows: part 0 takes the even rows, part 1 the odd rows.
template <typename T>
Var split_rows(Tape<T>& tape, Var x, std::size_t part);

// Embedding lookup; gradients scatter-add back into the table.
template <typename T>
Var gather_rows(Tape<T>& tape, Var table, std::span<const int> ids);

template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape shape);

// Sum of all entries as a [1 x 1] tensor.
template <typename T>
Var sum(Tape<T>& tape, Var x);

// Attention logits for length-2 sequences stored as consecutive row pairs.
// q, k: [2B x heads*width]. Output: [(B*heads*2) x 2], where row
// (b*heads + i)*2 + a holds q_a · k_c for head i, c = 0, 1.
template <typename T>
Var pair_attention_logits(Tape<T>& tape, Var q, Var k, std::size_t heads);

// Applies [(B*heads*2) x 2] attention weights to v [2B x heads*width];
// output has v's shape with heads concatenated per row.
template <typename T>
Var pair_attention_mix(Tape<T>& tape, Var probs, Var v, std::size_t heads);

// out[b, k] = sum_j m[b, j*d + k] * r[b, j] for m [B x d*d], r [B x d].
template <typename T>
Var contract_mode2(Tape<T>& tape, Var m, Var r);

// Mean over rows of the per-row binary cross-entropy on logits against a
// one-hot target, with optional label smoothing
// y <- y (1 - smoothing) + smoothing / n.
template <typename T>
Var bce_with_logits(Tape<T>& tape, Var scores, std::span<const int> targets, T smoothing);

// Same, but each row may have several positive targets.
template <typename T>
Var bce_with_logits(Tape<T>& tape, Var scores, const std::vector<std::vector<int>>& positives, T smoothing);

}  // namespace kge

#endif  // KGE_OPS_H_

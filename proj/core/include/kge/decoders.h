#ifndef KGE_DECODERS_H_
#define KGE_DECODERS_H_

#include <span>

#include "kge/decoder_kind.h"
#include "kge/tape.h"

namespace kge {

// TwoMult: scores[b, t] = encoded[b] · entities[t]. encoded is ẽ_r (or ẽ_s
// for the source-decoding variant), [B x d]; entities is [|V| x d].
template <typename T>
Var score_twomult(Tape<T>& tape, Var encoded, Var entities);

// Tucker: scores[b, t] = sum_{i,j,k} core[i,j,k] ẽ_s[b,i] ẽ_r[b,j] e_t[k],
// computed as a mode-1 product (one GEMM against the core viewed as
// d x d²), a mode-2 contraction, then a GEMM against the entity table.
template <typename T>
Var score_tucker(Tape<T>& tape, Var encoded_source, Var encoded_relation, Var core, Var entities);

// Elementwise logistic sigmoid, saturating without NaN.
template <typename T>
Tensor<T> scores_to_probabilities(const Tensor<T>& scores);

}  // namespace kge

#endif  // KGE_DECODERS_H_

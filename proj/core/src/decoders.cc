#include "kge/decoders.h"

#include <cmath>

#include "kge/error.h"
#include "kge/ops.h"

namespace kge {

std::string to_string(DecoderKind kind) { return kind == DecoderKind::kTwoMult ? "twomult" : "tucker"; }

std::string to_string(DecodeFrom from) { return from == DecodeFrom::kRelation ? "relation" : "source"; }

DecoderKind parse_decoder_kind(std::string_view name) {
  if (name == "twomult") return DecoderKind::kTwoMult;
  if (name == "tucker") return DecoderKind::kTucker;
  throw ParameterError("unknown decoder '" + std::string(name) + "'; expected one of {twomult, tucker}");
}

DecodeFrom parse_decode_from(std::string_view name) {
  if (name == "relation") return DecodeFrom::kRelation;
  if (name == "source") return DecodeFrom::kSource;
  throw ParameterError("unknown decode-from '" + std::string(name) + "'; expected one of {relation, source}");
}

template <typename T>
Var score_twomult(Tape<T>& tape, Var encoded, Var entities) {
  const Shape& es = tape.shape(encoded);
  const Shape& ts = tape.shape(entities);
  if (es.size() != 2 || ts.size() != 2 || es[1] != ts[1]) {
    throw ShapeError("score_twomult: encoded " + shape_string(es) + " vs entity table " + shape_string(ts));
  }
  return matmul(tape, encoded, entities, /*transpose_b=*/true);
}

template <typename T>
Var score_tucker(Tape<T>& tape, Var encoded_source, Var encoded_relation, Var core, Var entities) {
  const Shape& ss = tape.shape(encoded_source);
  const Shape& rs = tape.shape(encoded_relation);
  const Shape& cs = tape.shape(core);
  const Shape& ts = tape.shape(entities);
  if (ss.size() != 2 || ss != rs) {
    throw ShapeError("score_tucker: encoded rows " + shape_string(ss) + " and " + shape_string(rs) + " differ");
  }
  const std::size_t d = ss[1];
  if (cs != Shape{d, d, d} || ts.size() != 2 || ts[1] != d) {
    throw ShapeError("score_tucker: core " + shape_string(cs) + " / entity table " + shape_string(ts) +
                     " do not fit d = " + std::to_string(d));
  }
  const Var flat_core = reshape(tape, core, {d, d * d});
  const Var mode1 = matmul(tape, encoded_source, flat_core);
  const Var projected = contract_mode2(tape, mode1, encoded_relation);
  return matmul(tape, projected, entities, /*transpose_b=*/true);
}

template <typename T>
Tensor<T> scores_to_probabilities(const Tensor<T>& scores) {
  Tensor<T> out(scores.shape());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const T x = scores[i];
    if (x >= 0) {
      out[i] = T(1) / (T(1) + std::exp(-x));
    } else {
      const T e = std::exp(x);
      out[i] = e / (T(1) + e);
    }
  }
  return out;
}

template Var score_twomult<float>(Tape<float>&, Var, Var);
template Var score_twomult<double>(Tape<double>&, Var, Var);
template Var score_tucker<float>(Tape<float>&, Var, Var, Var, Var);
template Var score_tucker<double>(Tape<double>&, Var, Var, Var, Var);
template Tensor<float> scores_to_probabilities<float>(const Tensor<float>&);
template Tensor<double> scores_to_probabilities<double>(const Tensor<double>&);

}  // namespace kge

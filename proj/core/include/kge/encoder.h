#ifndef KGE_ENCODER_H_
#define KGE_ENCODER_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "kge/decoder_kind.h"
#include "kge/ops.h"
#include "kge/rng.h"
#include "kge/tape.h"

namespace kge {

// Hyper-parameters of the single attention block. The dropout rates follow
// these sites:
//   dropout_enc  on the normalized (source, relation) inputs,
//   dropout_sdp  on the attention probabilities after softmax,
//   dropout_mha  on the multi-head output after the W_O projection,
//   dropout_pff  inside the feed-forward network after the ReLU.
struct EncoderConfig {
  std::size_t dim = 100;
  std::size_t heads = 64;
  std::size_t key_dim = 32;
  std::size_t value_dim = 50;
  std::size_t hidden_dim = 2048;
  double dropout_enc = 0.0;
  double dropout_mha = 0.0;
  double dropout_sdp = 0.0;
  double dropout_pff = 0.0;
  bool final_layer_norm = true;

  // Throws ParameterError on zero sizes or rates outside [0, 1).
  void validate() const;
};

enum class Init { kXavierUniform, kUniformUnit, kOnes, kZeros };

struct ParamSpec {
  std::string name;
  Shape shape;
  Init init = Init::kXavierUniform;
  // Fans used by Xavier; per-head matrices use the per-head fan.
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
};

// Every trainable tensor of the encoder, in a fixed order. Per-head
// projections W_i^Q, W_i^K (d x d_k) and W_i^V (d x d_v) are stored side by
// side as column blocks of one matrix; head i owns columns [i*d_k, (i+1)*d_k).
std::vector<ParamSpec> encoder_param_specs(const EncoderConfig& config);

// Trainable decoder tensors: none for TwoMult; the d x d x d core plus the
// source batch norm (when enabled) for Tucker.
std::vector<ParamSpec> decoder_param_specs(std::size_t dim, DecoderKind kind, bool tucker_source_norm = true);

// Nonembedding free parameters: encoder plus decoder.
std::int64_t count_nonembedding_params(const EncoderConfig& config, DecoderKind kind, bool tucker_source_norm = true);

// (|V| + 2|R|) * d, reciprocal relations included.
std::int64_t count_embedding_params(std::size_t entity_count, std::size_t relation_count, std::size_t dim);

// Fills a parameter according to its spec.
template <typename T>
Parameter<T> make_parameter(const ParamSpec& spec, Rng& rng);

template <typename T>
struct EncoderParams {
  EncoderParams() = default;
  EncoderParams(const EncoderConfig& config, Rng& rng);

  EncoderConfig config;
  Parameter<T> w_query;   // d x (h * d_k)
  Parameter<T> w_key;     // d x (h * d_k)
  Parameter<T> w_value;   // d x (h * d_v)
  Parameter<T> w_out;     // (h * d_v) x d
  Parameter<T> ffn_w1;    // d x d_h
  Parameter<T> ffn_b1;    // 1 x d_h
  Parameter<T> ffn_w2;    // d_h x d
  Parameter<T> ffn_b2;    // 1 x d
  Parameter<T> entity_norm_gamma, entity_norm_beta;
  Parameter<T> relation_norm_gamma, relation_norm_beta;
  Parameter<T> final_norm_gamma, final_norm_beta;  // empty without final layer norm
  BatchNormStats<T> entity_norm_stats;
  BatchNormStats<T> relation_norm_stats;

  // Trainable tensors in encoder_param_specs order.
  std::vector<Parameter<T>*> parameters();
  std::int64_t parameter_count();
};

struct EncodedPair {
  Var source;    // ẽ_s, [B x d]
  Var relation;  // ẽ_r, [B x d]
};

// Multi-head self-attention over row pairs of x [2B x d] (Q = K = V = x).
// When probs is given it receives the [(B*h*2) x 2] attention matrices
// before dropout.
template <typename T>
Var multi_head_attention(Tape<T>& tape, Var x, EncoderParams<T>& params, Mode mode, Rng& rng,
                         Var* probs = nullptr);

// Full block for a batch of (source, relation) embedding rows:
// two input batch norms, dropout, attention + residual, feed-forward +
// residual, optional final layer norm. No positional encoding: the two
// slots are distinguished by their separate batch norms.
template <typename T>
EncodedPair encode(Tape<T>& tape, Var source_rows, Var relation_rows, EncoderParams<T>& params, Mode mode,
                   Rng& rng, Var* attention_probs = nullptr);

extern template struct EncoderParams<float>;
extern template struct EncoderParams<double>;

}  // namespace kge

#endif  // KGE_ENCODER_H_

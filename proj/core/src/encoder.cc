#include "kge/encoder.h"

#include <cmath>

#include "kge/error.h"

namespace kge {

void EncoderConfig::validate() const {
  if (dim == 0 || heads == 0 || key_dim == 0 || value_dim == 0 || hidden_dim == 0) {
    throw ParameterError("encoder dimensions must all be at least 1");
  }
  for (double rate : {dropout_enc, dropout_mha, dropout_sdp, dropout_pff}) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ParameterError("encoder dropout rates must be in [0, 1)");
  }
}

std::vector<ParamSpec> encoder_param_specs(const EncoderConfig& c) {
  const std::size_t d = c.dim, h = c.heads;
  std::vector<ParamSpec> specs = {
      {"encoder.w_query", {d, h * c.key_dim}, Init::kXavierUniform, d, c.key_dim},
      {"encoder.w_key", {d, h * c.key_dim}, Init::kXavierUniform, d, c.key_dim},
      {"encoder.w_value", {d, h * c.value_dim}, Init::kXavierUniform, d, c.value_dim},
      {"encoder.w_out", {h * c.value_dim, d}, Init::kXavierUniform, h * c.value_dim, d},
      {"encoder.ffn_w1", {d, c.hidden_dim}, Init::kXavierUniform, d, c.hidden_dim},
      {"encoder.ffn_b1", {1, c.hidden_dim}, Init::kZeros},
      {"encoder.ffn_w2", {c.hidden_dim, d}, Init::kXavierUniform, c.hidden_dim, d},
      {"encoder.ffn_b2", {1, d}, Init::kZeros},
      {"encoder.entity_norm.gamma", {1, d}, Init::kOnes},
      {"encoder.entity_norm.beta", {1, d}, Init::kZeros},
      {"encoder.relation_norm.gamma", {1, d}, Init::kOnes},
      {"encoder.relation_norm.beta", {1, d}, Init::kZeros},
  };
  if (c.final_layer_norm) {
    specs.push_back({"encoder.final_norm.gamma", {1, d}, Init::kOnes});
    specs.push_back({"encoder.final_norm.beta", {1, d}, Init::kZeros});
  }
  return specs;
}

std::vector<ParamSpec> decoder_param_specs(std::size_t dim, DecoderKind kind, bool tucker_source_norm) {
  std::vector<ParamSpec> specs;
  if (kind == DecoderKind::kTucker) {
    specs.push_back({"decoder.core", {dim, dim, dim}, Init::kUniformUnit});
    if (tucker_source_norm) {
      specs.push_back({"decoder.source_norm.gamma", {1, dim}, Init::kOnes});
      specs.push_back({"decoder.source_norm.beta", {1, dim}, Init::kZeros});
    }
  }
  return specs;
}

std::int64_t count_nonembedding_params(const EncoderConfig& config, DecoderKind kind, bool tucker_source_norm) {
  EncoderConfig c = config;
  if (kind == DecoderKind::kTucker) c.final_layer_norm = false;
  std::int64_t total = 0;
  for (const auto& s : encoder_param_specs(c)) total += static_cast<std::int64_t>(shape_numel(s.shape));
  for (const auto& s : decoder_param_specs(c.dim, kind, tucker_source_norm)) {
    total += static_cast<std::int64_t>(shape_numel(s.shape));
  }
  return total;
}

std::int64_t count_embedding_params(std::size_t entity_count, std::size_t relation_count, std::size_t dim) {
  return static_cast<std::int64_t>((entity_count + 2 * relation_count) * dim);
}

template <typename T>
Parameter<T> make_parameter(const ParamSpec& spec, Rng& rng) {
  Parameter<T> p(spec.name, Tensor<T>(spec.shape));
  switch (spec.init) {
    case Init::kXavierUniform: {
      const double bound = std::sqrt(6.0 / static_cast<double>(spec.fan_in + spec.fan_out));
      for (auto& v : p.value.values()) v = static_cast<T>(rng.uniform(-bound, bound));
      break;
    }
    case Init::kUniformUnit:
      for (auto& v : p.value.values()) v = static_cast<T>(rng.uniform(-1.0, 1.0));
      break;
    case Init::kOnes:
      p.value.fill(T(1));
      break;
    case Init::kZeros:
      break;
  }
  return p;
}

template Parameter<float> make_parameter<float>(const ParamSpec&, Rng&);
template Parameter<double> make_parameter<double>(const ParamSpec&, Rng&);

template <typename T>
EncoderParams<T>::EncoderParams(const EncoderConfig& cfg, Rng& rng)
    : config(cfg), entity_norm_stats(cfg.dim), relation_norm_stats(cfg.dim) {
  config.validate();
  const auto specs = encoder_param_specs(config);
  const auto all = parameters();
  for (std::size_t i = 0; i < specs.size(); ++i) *all[i] = make_parameter<T>(specs[i], rng);
}

template <typename T>
std::vector<Parameter<T>*> EncoderParams<T>::parameters() {
  std::vector<Parameter<T>*> out = {&w_query, &w_key, &w_value, &w_out,
                                    &ffn_w1, &ffn_b1, &ffn_w2, &ffn_b2,
                                    &entity_norm_gamma, &entity_norm_beta,
                                    &relation_norm_gamma, &relation_norm_beta};
  if (config.final_layer_norm) {
    out.push_back(&final_norm_gamma);
    out.push_back(&final_norm_beta);
  }
  return out;
}

template <typename T>
std::int64_t EncoderParams<T>::parameter_count() {
  std::int64_t total = 0;
  for (auto* p : parameters()) total += static_cast<std::int64_t>(p->value.size());
  return total;
}

template <typename T>
Var multi_head_attention(Tape<T>& tape, Var x, EncoderParams<T>& params, Mode mode, Rng& rng, Var* probs) {
  const EncoderConfig& c = params.config;
  const Shape& xs = tape.shape(x);
  if (xs.size() != 2 || xs[1] != c.dim || xs[0] % 2 != 0) {
    throw ShapeError("multi_head_attention: input " + shape_string(xs) + " is not [2B x " + std::to_string(c.dim) + "]");
  }
  const Var q = matmul(tape, x, tape.param(params.w_query));
  const Var k = matmul(tape, x, tape.param(params.w_key));
  const Var v = matmul(tape, x, tape.param(params.w_value));
  const Var logits = pair_attention_logits(tape, q, k, c.heads);
  Var weights = softmax_rows(tape, logits, static_cast<T>(1.0 / std::sqrt(static_cast<double>(c.key_dim))));
  if (probs) *probs = weights;
  weights = dropout(tape, weights, c.dropout_sdp, mode, rng);
  const Var heads = pair_attention_mix(tape, weights, v, c.heads);
  const Var projected = matmul(tape, heads, tape.param(params.w_out));
  return dropout(tape, projected, c.dropout_mha, mode, rng);
}

template <typename T>
EncodedPair encode(Tape<T>& tape, Var source_rows, Var relation_rows, EncoderParams<T>& params, Mode mode, Rng& rng,
                   Var* attention_probs) {
  const EncoderConfig& c = params.config;
  const Shape& ss = tape.shape(source_rows);
  const Shape& rs = tape.shape(relation_rows);
  if (ss.size() != 2 || ss[1] != c.dim || ss != rs) {
    throw ShapeError("encode: inputs " + shape_string(ss) + " and " + shape_string(rs) + " do not match d = " +
                     std::to_string(c.dim));
  }
  const Var s = batch_norm(tape, source_rows, tape.param(params.entity_norm_gamma),
                           tape.param(params.entity_norm_beta), params.entity_norm_stats, mode);
  const Var r = batch_norm(tape, relation_rows, tape.param(params.relation_norm_gamma),
                           tape.param(params.relation_norm_beta), params.relation_norm_stats, mode);
  Var x = dropout(tape, concat_rows(tape, s, r), c.dropout_enc, mode, rng);

  x = add(tape, x, multi_head_attention(tape, x, params, mode, rng, attention_probs));

  Var hidden = relu(tape, add_bias(tape, matmul(tape, x, tape.param(params.ffn_w1)), tape.param(params.ffn_b1)));
  hidden = dropout(tape, hidden, c.dropout_pff, mode, rng);
  const Var ffn = add_bias(tape, matmul(tape, hidden, tape.param(params.ffn_w2)), tape.param(params.ffn_b2));
  x = add(tape, x, ffn);

  if (c.final_layer_norm) {
    x = layer_norm(tape, x, tape.param(params.final_norm_gamma), tape.param(params.final_norm_beta));
  }
  return {split_rows(tape, x, 0), split_rows(tape, x, 1)};
}

template struct EncoderParams<float>;
template struct EncoderParams<double>;
template Var multi_head_attention<float>(Tape<float>&, Var, EncoderParams<float>&, Mode, Rng&, Var*);
template Var multi_head_attention<double>(Tape<double>&, Var, EncoderParams<double>&, Mode, Rng&, Var*);
template EncodedPair encode<float>(Tape<float>&, Var, Var, EncoderParams<float>&, Mode, Rng&, Var*);
template EncodedPair encode<double>(Tape<double>&, Var, Var, EncoderParams<double>&, Mode, Rng&, Var*);

}  // namespace kge

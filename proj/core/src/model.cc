#include "kge/model.h"

#include "kge/decoders.h"
#include "kge/error.h"

namespace kge {

template <typename T>
Model<T>::Model(const ModelConfig& config, std::size_t entity_count, std::size_t relation_count)
    : source_norm_stats(config.dim), config_(config), entity_count_(entity_count), relation_count_(relation_count) {
  config_.validate();
  if (entity_count == 0 || relation_count == 0) throw ContractError("model needs at least one entity and relation");
  Rng rng(derive_seed(config_.seed, 0x1a17));
  const std::size_t d = config_.dim;
  entity_embeddings = make_parameter<T>({"entity_embeddings", {entity_count, d}, Init::kXavierUniform, d, entity_count}, rng);
  relation_embeddings =
      make_parameter<T>({"relation_embeddings", {2 * relation_count, d}, Init::kXavierUniform, d, 2 * relation_count}, rng);
  encoder = EncoderParams<T>(encoder_config(config_), rng);
  for (const auto& spec : decoder_param_specs(d, config_.decoder, config_.tucker_source_norm)) {
    if (spec.name == "decoder.core") core = make_parameter<T>(spec, rng);
    if (spec.name == "decoder.source_norm.gamma") source_norm_gamma = make_parameter<T>(spec, rng);
    if (spec.name == "decoder.source_norm.beta") source_norm_beta = make_parameter<T>(spec, rng);
  }
}

template <typename T>
bool Model<T>::uses_source_norm() const {
  return config_.decoder == DecoderKind::kTucker && config_.tucker_source_norm;
}

template <typename T>
Var Model<T>::score(Tape<T>& tape, std::span<const int> sources, std::span<const int> relations, Mode mode, Rng& rng) {
  if (sources.size() != relations.size()) throw ShapeError("score: sources and relations differ in length");
  const Var entities = tape.param(entity_embeddings);
  const Var relation_table = tape.param(relation_embeddings);
  const Var source_rows = gather_rows(tape, entities, sources);
  const Var relation_rows = gather_rows(tape, relation_table, relations);
  const EncodedPair enc = encode(tape, source_rows, relation_rows, encoder, mode, rng);
  if (config_.decoder == DecoderKind::kTwoMult) {
    return score_twomult(tape, config_.decode_from == DecodeFrom::kRelation ? enc.relation : enc.source, entities);
  }
  Var source = enc.source;
  if (uses_source_norm()) {
    source = batch_norm(tape, source, tape.param(source_norm_gamma), tape.param(source_norm_beta), source_norm_stats,
                        mode);
  }
  return score_tucker(tape, source, enc.relation, tape.param(core), entities);
}

template <typename T>
std::vector<Parameter<T>*> Model<T>::parameters() {
  std::vector<Parameter<T>*> out = {&entity_embeddings, &relation_embeddings};
  for (auto* p : encoder.parameters()) out.push_back(p);
  if (config_.decoder == DecoderKind::kTucker) {
    out.push_back(&core);
    if (uses_source_norm()) {
      out.push_back(&source_norm_gamma);
      out.push_back(&source_norm_beta);
    }
  }
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> Model<T>::buffers() {
  std::vector<std::pair<std::string, Tensor<T>*>> out = {
      {"encoder.entity_norm.running_mean", &encoder.entity_norm_stats.running_mean},
      {"encoder.entity_norm.running_var", &encoder.entity_norm_stats.running_var},
      {"encoder.relation_norm.running_mean", &encoder.relation_norm_stats.running_mean},
      {"encoder.relation_norm.running_var", &encoder.relation_norm_stats.running_var},
  };
  if (uses_source_norm()) {
    out.emplace_back("decoder.source_norm.running_mean", &source_norm_stats.running_mean);
    out.emplace_back("decoder.source_norm.running_var", &source_norm_stats.running_var);
  }
  return out;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template <typename T>
std::int64_t Model<T>::nonembedding_parameter_count() {
  std::int64_t total = 0;
  for (auto* p : parameters()) {
    if (p != &entity_embeddings && p != &relation_embeddings) total += static_cast<std::int64_t>(p->value.size());
  }
  return total;
}

template <typename T>
std::int64_t Model<T>::embedding_parameter_count() const {
  return count_embedding_params(entity_count_, relation_count_, config_.dim);
}

template class Model<float>;
template class Model<double>;

}  // namespace kge

#ifndef KGE_MODEL_H_
#define KGE_MODEL_H_

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kge/config.h"
#include "kge/encoder.h"
#include "kge/ops.h"
#include "kge/tape.h"

namespace kge {

// Embedding tables, the attention encoder and the configured decoder.
template <typename T>
class Model {
 public:
  // relation_count is |R| of the vocabulary; the relation table holds 2|R|
  // rows so that reciprocal relations have their own embeddings.
  Model(const ModelConfig& config, std::size_t entity_count, std::size_t relation_count);

  // [B x |V|] raw scores for every (source, relation) pair.
  Var score(Tape<T>& tape, std::span<const int> sources, std::span<const int> relations, Mode mode, Rng& rng);

  // Trainable parameters in a fixed order: embeddings, encoder, decoder.
  std::vector<Parameter<T>*> parameters();
  // Non-trainable state (batch-norm running statistics) by name.
  std::vector<std::pair<std::string, Tensor<T>*>> buffers();

  void zero_grad();

  const ModelConfig& config() const { return config_; }
  std::size_t entity_count() const { return entity_count_; }
  std::size_t relation_count() const { return relation_count_; }

  std::int64_t nonembedding_parameter_count();
  std::int64_t embedding_parameter_count() const;

  Parameter<T> entity_embeddings;    // |V| x d
  Parameter<T> relation_embeddings;  // 2|R| x d
  EncoderParams<T> encoder;
  Parameter<T> core;                 // d x d x d, Tucker only
  Parameter<T> source_norm_gamma;    // Tucker source batch norm
  Parameter<T> source_norm_beta;
  BatchNormStats<T> source_norm_stats;

 private:
  bool uses_source_norm() const;

  ModelConfig config_;
  std::size_t entity_count_;
  std::size_t relation_count_;
};

extern template class Model<float>;
extern template class Model<double>;

}  // namespace kge

#endif  // KGE_MODEL_H_

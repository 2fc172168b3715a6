#ifndef KGE_CONFIG_H_
#define KGE_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kge/decoder_kind.h"
#include "kge/encoder.h"

namespace kge {

// Complete run configuration. Defaults reproduce the FB15k-237 / TwoMult /
// d = 100 row of the published settings.
struct ModelConfig {
  std::string dataset = "FB15k-237";
  DecoderKind decoder = DecoderKind::kTwoMult;
  DecodeFrom decode_from = DecodeFrom::kRelation;

  std::size_t dim = 100;
  std::size_t heads = 64;
  std::size_t key_dim = 32;
  std::size_t value_dim = 50;
  std::size_t hidden_dim = 2048;

  double dropout_enc = 0.4;
  double dropout_mha = 0.3;
  double dropout_pff = 0.2;
  double dropout_sdp = 0.1;

  std::size_t batch_size = 2048;
  double learning_rate = 0.001;
  double decay_rate = 0.995;
  std::size_t decay_step = 2;  // epochs per decay
  double label_smoothing = 0.1;
  bool multi_label = false;
  bool tucker_source_norm = true;

  std::size_t epochs = 1000;
  std::uint64_t seed = 1;
  std::size_t eval_every = 5;
  std::size_t early_stopping_patience = 0;  // evaluations without improvement; 0 disables
  std::size_t eval_batch_size = 512;

  // Throws ParameterError describing the first invalid field.
  void validate() const;
};

// Encoder slice of a run config. The final layer norm is dropped for Tucker.
EncoderConfig encoder_config(const ModelConfig& config);

struct Preset {
  std::string dataset;
  DecoderKind decoder;
  std::size_t dim;
  ModelConfig config;
};

// The nine published (dataset, decoder, d) rows.
const std::vector<Preset>& presets();

// Row for (dataset, decoder, dim); throws ParameterError if none exists.
ModelConfig preset_config(const std::string& dataset, DecoderKind decoder, std::size_t dim);
bool has_preset(const std::string& dataset, DecoderKind decoder, std::size_t dim);

std::string config_to_json(const ModelConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig config_from_json(const std::string& text, const ModelConfig& base = ModelConfig{});
ModelConfig load_config(const std::filesystem::path& path, const ModelConfig& base = ModelConfig{});
void save_config(const ModelConfig& config, const std::filesystem::path& path);

// Digest of every model-defining and optimization field (not the epoch
// budget or evaluation cadence).
std::uint64_t config_hash(const ModelConfig& config);

std::string hex64(std::uint64_t value);

}  // namespace kge

#endif  // KGE_CONFIG_H_

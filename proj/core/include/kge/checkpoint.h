#ifndef KGE_CHECKPOINT_H_
#define KGE_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "kge/config.h"
#include "kge/tensor.h"
#include "kge/training.h"

namespace kge {

// Tensor container: a sequence of named little-endian float32 arrays, each
// preceded by its name and shape.
//   "KGET" u32:version u32:count
//   repeated: u32:name_len name u32:rank u64[rank]:dims f32[numel]:data
void write_tensor_file(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, const Tensor<float>*>>& tensors);
std::vector<std::pair<std::string, Tensor<float>>> read_tensor_file(const std::filesystem::path& path);

struct CheckpointInfo {
  ModelConfig config;
  std::uint64_t config_hash = 0;
  std::uint64_t dataset_hash = 0;
  std::size_t entity_count = 0;
  std::size_t relation_count = 0;
  std::size_t epoch = 0;  // completed epochs
  std::string initializer;
};

// Writes <dir>/manifest.json and <dir>/tensors.bin: every parameter, the
// batch-norm running statistics, both Adam moments, plus epoch, RNG state
// and optimizer step in the manifest.
void save_checkpoint(const std::filesystem::path& dir, Trainer& trainer, std::uint64_t dataset_hash);

struct LoadedCheckpoint {
  CheckpointInfo info;
  std::unique_ptr<Trainer> trainer;
};

// Restores a Trainer that continues exactly where the saved one stopped.
// Throws IoError when the manifest is inconsistent or the stored config
// hash does not match the recomputed one.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);
CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir);

}  // namespace kge

#endif  // KGE_CHECKPOINT_H_

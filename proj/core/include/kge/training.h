#ifndef KGE_TRAINING_H_
#define KGE_TRAINING_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kge/adam.h"
#include "kge/config.h"
#include "kge/evaluation.h"
#include "kge/kg_data.h"
#include "kge/model.h"
#include "kge/rng.h"

namespace kge {

// Binary cross-entropy of one score row against a one-hot target, averaged
// over candidates, with y <- y (1 - smoothing) + smoothing / |V|.
double bce_loss(std::span<const double> scores, int true_target, double smoothing);

// lr * dr^floor(epoch / decay_step).
double lr_at_epoch(const ModelConfig& config, std::size_t epoch);

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;  // batch losses weighted by batch size
  double lr = 0.0;
  double seconds = 0.0;
  double triples_per_second = 0.0;
  std::size_t batches = 0;
  // Single-row batches cannot be batch-normalized in train mode and are
  // skipped; at most one per epoch.
  std::size_t skipped_triples = 0;
};

// Owns the model, the optimizer state and the dropout stream.
class Trainer {
 public:
  Trainer(const ModelConfig& config, std::size_t entity_count, std::size_t relation_count);

  // One pass over train (reciprocals included). With multi-label training
  // label_index supplies every known target of each (s, r) key.
  EpochStats train_epoch(const TripleStore& train, const FilterIndex* label_index = nullptr);

  Model<float>& model() { return model_; }
  const Model<float>& model() const { return model_; }
  AdamState<float>& optimizer() { return optimizer_; }
  Rng& rng() { return rng_; }
  const ModelConfig& config() const { return model_.config(); }

  // Index of the next epoch to run.
  std::size_t epoch() const { return epoch_; }
  void set_epoch(std::size_t epoch) { epoch_ = epoch; }

 private:
  Model<float> model_;
  AdamState<float> optimizer_;
  Rng rng_;
  std::size_t epoch_ = 0;
};

struct HistoryRow {
  std::size_t epoch = 0;  // 1-based count of completed epochs
  std::string split;      // "train" or "valid"
  std::optional<RankMetrics> metrics;
  double loss = 0.0;
  double lr = 0.0;
};

// Metrics CSV: epoch,split,mrr,hits1,hits3,hits10,loss,lr
void write_history_header(std::ostream& os);
void write_history_row(std::ostream& os, const HistoryRow& row);

struct FitOptions {
  std::filesystem::path out_dir;  // empty: nothing is written
  std::optional<std::filesystem::path> resume_from;
  EvalOptions eval;
  std::uint64_t eval_seed = 0;
  std::ostream* log = nullptr;
  // Called after every epoch; return false to stop early.
  std::function<bool(const EpochStats&)> on_epoch;
};

struct FitResult {
  std::vector<HistoryRow> history;
  double best_valid_mrr = -1.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
};

// Reciprocal-augmented splits and the indices training and evaluation need.
struct PreparedData {
  std::size_t entity_count = 0;
  std::size_t relation_count = 0;
  std::uint64_t vocab_hash = 0;
  TripleStore train;      // with reciprocals
  TripleStore valid_raw;  // original ids only
  TripleStore test_raw;
  TripleStore train_raw;
  FilterIndex filter;         // all splits, reciprocals included
  FilterIndex train_targets;  // train only, reciprocals included
};

PreparedData prepare_data(const Dataset& dataset);

// Trains for config.epochs, evaluating the validation split every
// config.eval_every epochs. With an out_dir it writes metrics.csv, the best
// validation checkpoint under best/ and the last state under final/.
FitResult fit(const ModelConfig& config, const PreparedData& data, const FitOptions& options);

// Per-epoch training for a Trainer that is already set up (used by fit).
FitResult fit(Trainer& trainer, const PreparedData& data, const FitOptions& options);

}  // namespace kge

#endif  // KGE_TRAINING_H_

#include "kge/training.h"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "kge/checkpoint.h"
#include "kge/error.h"
#include "kge/ops.h"
#include "kge/tape.h"

namespace kge {

namespace {
constexpr std::uint64_t kDropoutStream = 0xd209;
}

double bce_loss(std::span<const double> scores, int true_target, double smoothing) {
  Tape<double> tape;
  tape.set_grad_enabled(false);
  Tensor<double> row({1, scores.size()});
  std::copy(scores.begin(), scores.end(), row.values().begin());
  const Var s = tape.constant(std::move(row));
  const int target[1] = {true_target};
  return tape.value(bce_with_logits(tape, s, std::span<const int>(target), smoothing))[0];
}

double lr_at_epoch(const ModelConfig& config, std::size_t epoch) {
  const std::size_t step = config.decay_step == 0 ? 1 : config.decay_step;
  return config.learning_rate * std::pow(config.decay_rate, static_cast<double>(epoch / step));
}

Trainer::Trainer(const ModelConfig& config, std::size_t entity_count, std::size_t relation_count)
    : model_(config, entity_count, relation_count), rng_(derive_seed(config.seed, kDropoutStream)) {}

EpochStats Trainer::train_epoch(const TripleStore& train, const FilterIndex* label_index) {
  const ModelConfig& cfg = model_.config();
  if (cfg.multi_label && label_index == nullptr) throw ContractError("multi-label training needs a label index");
  const auto start = std::chrono::steady_clock::now();

  EpochStats stats;
  stats.epoch = epoch_;
  stats.lr = lr_at_epoch(cfg, epoch_);
  const auto batches = batch_queries(train, cfg.batch_size, cfg.seed, epoch_);
  auto params = model_.parameters();

  double loss_sum = 0.0;
  std::size_t trained = 0;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const QueryBatch& batch = batches[b];
    if (batch.size() < 2) {
      stats.skipped_triples += batch.size();
      continue;
    }
    Tape<float> tape;
    const Var scores = model_.score(tape, batch.sources, batch.relations, Mode::kTrain, rng_);
    Var loss;
    const auto smoothing = static_cast<float>(cfg.label_smoothing);
    if (cfg.multi_label) {
      std::vector<std::vector<int>> positives(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto* known = label_index->find(batch.sources[i], batch.relations[i]);
        if (known != nullptr) positives[i] = *known;
        else positives[i] = {batch.targets[i]};
      }
      loss = bce_with_logits(tape, scores, positives, smoothing);
    } else {
      loss = bce_with_logits(tape, scores, std::span<const int>(batch.targets), smoothing);
    }
    const double value = tape.value(loss)[0];
    if (!std::isfinite(value)) {
      std::ostringstream msg;
      msg << "non-finite loss at epoch " << epoch_ << ", batch " << b << ", lr " << stats.lr;
      throw NumericError(msg.str());
    }
    model_.zero_grad();
    tape.backward(loss);
    adam_step<float>(std::span<Parameter<float>* const>(params), optimizer_, stats.lr);

    loss_sum += value * static_cast<double>(batch.size());
    trained += batch.size();
    ++stats.batches;
  }

  stats.mean_loss = trained == 0 ? 0.0 : loss_sum / static_cast<double>(trained);
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  stats.triples_per_second = stats.seconds > 0 ? static_cast<double>(trained) / stats.seconds : 0.0;
  ++epoch_;
  return stats;
}

void write_history_header(std::ostream& os) { os << "epoch,split,mrr,hits1,hits3,hits10,loss,lr\n"; }

void write_history_row(std::ostream& os, const HistoryRow& row) {
  os << row.epoch << ',' << row.split << ',';
  if (row.metrics) {
    os << std::setprecision(6) << row.metrics->mrr << ',' << row.metrics->hits1 << ',' << row.metrics->hits3 << ','
       << row.metrics->hits10;
  } else {
    os << ",,,";
  }
  os << ',' << std::setprecision(8) << row.loss << ',' << row.lr << '\n';
}

PreparedData prepare_data(const Dataset& dataset) {
  PreparedData data;
  data.entity_count = dataset.vocab.entity_count();
  data.relation_count = dataset.vocab.relation_count();
  data.vocab_hash = dataset.vocab.fingerprint();
  data.train_raw = dataset.train;
  data.valid_raw = dataset.valid;
  data.test_raw = dataset.test;
  data.train = add_reciprocals(dataset.train, dataset.vocab);
  const TripleStore valid = add_reciprocals(dataset.valid, dataset.vocab);
  const TripleStore test = add_reciprocals(dataset.test, dataset.vocab);
  data.filter = build_filter_index(data.train, valid, test);
  data.train_targets = build_filter_index({&data.train});
  return data;
}

namespace {

struct BestRecord {
  double mrr = -1.0;
  std::size_t epoch = 0;
};

BestRecord read_best(const std::filesystem::path& out_dir) {
  BestRecord best;
  std::ifstream in(out_dir / "best.json");
  if (!in) return best;
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) return best;
  best.mrr = j.value("valid_mrr", -1.0);
  best.epoch = j.value("epoch", std::size_t{0});
  return best;
}

void write_best(const std::filesystem::path& out_dir, const BestRecord& best) {
  std::ofstream out(out_dir / "best.json", std::ios::trunc);
  out << nlohmann::json{{"valid_mrr", best.mrr}, {"epoch", best.epoch}}.dump(2) << '\n';
}

FitResult run(Trainer& trainer, const PreparedData& data, const FitOptions& options, std::size_t total_epochs) {
  const ModelConfig& cfg = trainer.config();
  const bool write = !options.out_dir.empty();
  std::ofstream history;
  BestRecord best;
  if (write) {
    std::filesystem::create_directories(options.out_dir);
    const auto path = options.out_dir / "metrics.csv";
    const bool append = trainer.epoch() > 0 && std::filesystem::exists(path);
    history.open(path, append ? std::ios::app : std::ios::trunc);
    if (!history) throw IoError("cannot write " + path.string());
    if (!append) write_history_header(history);
    if (append) best = read_best(options.out_dir);
  }

  FitResult result;
  result.best_valid_mrr = best.mrr;
  result.best_epoch = best.epoch;
  const FilterIndex* labels = cfg.multi_label ? &data.train_targets : nullptr;
  EvalOptions eval = options.eval;
  eval.batch_size = cfg.eval_batch_size;
  std::size_t stale = 0;

  while (trainer.epoch() < total_epochs) {
    const EpochStats stats = trainer.train_epoch(data.train, labels);
    ++result.epochs_run;
    const std::size_t done = trainer.epoch();
    HistoryRow train_row{done, "train", std::nullopt, stats.mean_loss, stats.lr};
    result.history.push_back(train_row);
    if (write) write_history_row(history, train_row);
    if (options.log != nullptr) {
      *options.log << "epoch " << done << " loss " << std::setprecision(6) << stats.mean_loss << " lr " << stats.lr
                   << " " << std::setprecision(4) << stats.seconds << "s (" << static_cast<long long>(stats.triples_per_second)
                   << " triples/s)\n";
    }

    const bool last = done == total_epochs;
    bool stop = false;
    if (cfg.eval_every > 0 && (done % cfg.eval_every == 0 || last) && !data.valid_raw.empty()) {
      const EvalReport report = evaluate(make_model_scorer(trainer.model()), data.valid_raw, data.relation_count,
                                         data.filter, options.eval_seed, eval);
      HistoryRow valid_row{done, "valid", report.overall, stats.mean_loss, stats.lr};
      result.history.push_back(valid_row);
      if (write) {
        write_history_row(history, valid_row);
        history.flush();
      }
      if (options.log != nullptr) *options.log << "  valid " << format_report(report) << '\n';
      if (report.overall.mrr > result.best_valid_mrr) {
        result.best_valid_mrr = report.overall.mrr;
        result.best_epoch = done;
        stale = 0;
        if (write) {
          save_checkpoint(options.out_dir / "best", trainer, data.vocab_hash);
          write_best(options.out_dir, {result.best_valid_mrr, result.best_epoch});
        }
      } else if (cfg.early_stopping_patience > 0 && ++stale >= cfg.early_stopping_patience) {
        stop = true;
      }
    }
    if (options.on_epoch && !options.on_epoch(stats)) stop = true;
    if (stop) break;
  }
  if (write) save_checkpoint(options.out_dir / "final", trainer, data.vocab_hash);
  return result;
}

}  // namespace

FitResult fit(Trainer& trainer, const PreparedData& data, const FitOptions& options) {
  return run(trainer, data, options, trainer.config().epochs);
}

FitResult fit(const ModelConfig& config, const PreparedData& data, const FitOptions& options) {
  config.validate();
  if (options.resume_from) {
    LoadedCheckpoint loaded = load_checkpoint(*options.resume_from);
    if (loaded.info.dataset_hash != data.vocab_hash) {
      throw ContractError("checkpoint dataset hash " + hex64(loaded.info.dataset_hash) +
                          " does not match dataset hash " + hex64(data.vocab_hash));
    }
    if (loaded.info.config_hash != config_hash(config)) {
      throw ContractError("checkpoint config hash " + hex64(loaded.info.config_hash) +
                          " does not match the requested config " + hex64(config_hash(config)));
    }
    return run(*loaded.trainer, data, options, config.epochs);
  }
  Trainer trainer(config, data.entity_count, data.relation_count);
  return fit(trainer, data, options);
}

}  // namespace kge

#include "kge_cli/commands.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "kge/checkpoint.h"
#include "kge/config.h"
#include "kge/encoder.h"
#include "kge/error.h"
#include "kge/evaluation.h"
#include "kge/kg_data.h"
#include "kge/training.h"

#ifndef KGE_BUILD_ID
#define KGE_BUILD_ID "unknown"
#endif

namespace kge::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

struct KnownDataset {
  const char* name;
  std::size_t entities;
  std::size_t relations;
  // Reported parameter counts of the d = 100 TwoMult model, in millions.
  double reported_nfp;
  double reported_efp;
};

constexpr KnownDataset kKnownDatasets[] = {
    {"FB15k-237", 14541, 237, 1.50, 1.50},
    {"WN18RR", 40943, 11, 1.14, 4.10},
};

const KnownDataset* find_known(const std::string& name) {
  const std::string canonical = canonical_dataset_name(name);
  for (const auto& k : kKnownDatasets) {
    if (canonical == k.name) return &k;
  }
  return nullptr;
}

std::string dataset_name_from_dir(const fs::path& dir) {
  fs::path p = dir;
  if (p.filename().empty()) p = p.parent_path();
  return canonical_dataset_name(p.filename().string());
}

std::string now_iso8601() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string millions(std::int64_t n) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << static_cast<double>(n) / 1e6 << "M";
  return os.str();
}

// Flags shared by every command that builds a ModelConfig. A flag that was
// not given leaves the file or preset value alone.
struct ConfigFlags {
  std::string config_path;
  std::string dataset;
  std::string decoder;
  std::string decode_from;
  std::size_t dim = 0;
  std::size_t heads = 0;
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  std::size_t eval_every = 0;
  double label_smoothing = 0;
  bool multi_label = false;

  CLI::Option* o_config = nullptr;
  CLI::Option* o_dataset = nullptr;
  CLI::Option* o_decoder = nullptr;
  CLI::Option* o_decode_from = nullptr;
  CLI::Option* o_dim = nullptr;
  CLI::Option* o_heads = nullptr;
  CLI::Option* o_epochs = nullptr;
  CLI::Option* o_seed = nullptr;
  CLI::Option* o_eval_every = nullptr;
  CLI::Option* o_label_smoothing = nullptr;
  CLI::Option* o_multi_label = nullptr;

  void attach(CLI::App* app, bool training_flags) {
    o_config = app->add_option("--config", config_path, "JSON run config")->check(CLI::ExistingFile);
    o_dataset = app->add_option("--dataset", dataset, "Dataset name (FB15k-237, WN18RR) for preset lookup");
    o_decoder = app->add_option("--decoder", decoder, "Decoder")->check(CLI::IsMember({"twomult", "tucker"}));
    o_decode_from =
        app->add_option("--decode-from", decode_from, "TwoMult input")->check(CLI::IsMember({"relation", "source"}));
    o_dim = app->add_option("--d", dim, "Embedding dimension")->check(CLI::PositiveNumber);
    o_heads = app->add_option("--heads", heads, "Attention heads")->check(CLI::PositiveNumber);
    if (!training_flags) return;
    o_epochs = app->add_option("--epochs", epochs, "Epoch budget");
    o_seed = app->add_option("--seed", seed, "Random seed");
    o_eval_every = app->add_option("--eval-every", eval_every, "Validate every N epochs (0 disables)");
    o_label_smoothing =
        app->add_option("--label-smoothing", label_smoothing, "Label smoothing")->check(CLI::Range(0.0, 1.0));
    o_multi_label = app->add_flag("--multi-label", multi_label, "Train against every known target of (s, r)");
  }

  static bool given(const CLI::Option* o) { return o != nullptr && o->count() > 0; }

  // File config if given; otherwise the published row for (dataset, decoder,
  // d) when there is one; then explicit flags on top.
  ModelConfig resolve(const std::string& dataset_hint) const {
    ModelConfig cfg;
    const std::string ds = given(o_dataset) ? canonical_dataset_name(dataset) : dataset_hint;
    if (given(o_config)) {
      cfg = load_config(config_path);
    } else {
      const DecoderKind dec = given(o_decoder) ? parse_decoder_kind(decoder) : cfg.decoder;
      const std::size_t d = given(o_dim) ? dim : cfg.dim;
      if (!ds.empty() && has_preset(ds, dec, d)) cfg = preset_config(ds, dec, d);
    }
    if (!ds.empty()) cfg.dataset = ds;
    if (given(o_decoder)) cfg.decoder = parse_decoder_kind(decoder);
    if (given(o_decode_from)) cfg.decode_from = parse_decode_from(decode_from);
    if (given(o_dim)) cfg.dim = dim;
    if (given(o_heads)) cfg.heads = heads;
    if (given(o_epochs)) cfg.epochs = epochs;
    if (given(o_seed)) cfg.seed = seed;
    if (given(o_eval_every)) cfg.eval_every = eval_every;
    if (given(o_label_smoothing)) cfg.label_smoothing = label_smoothing;
    if (given(o_multi_label)) cfg.multi_label = multi_label;
    cfg.validate();
    return cfg;
  }
};

void print_stats(std::ostream& out, const Dataset& ds) {
  out << "dataset    " << ds.name << '\n'
      << "entities   " << ds.vocab.entity_count() << '\n'
      << "relations  " << ds.vocab.relation_count() << '\n'
      << "train      " << ds.train.size() << '\n'
      << "valid      " << ds.valid.size() << '\n'
      << "test       " << ds.test.size() << '\n';
  const std::size_t dups = ds.train.duplicates_dropped + ds.valid.duplicates_dropped + ds.test.duplicates_dropped;
  if (dups > 0) out << "duplicates dropped " << dups << '\n';
}

Dataset load_named_dataset(const fs::path& dir) {
  Dataset ds = load_dataset(dir);
  if (ds.name.empty()) ds.name = dataset_name_from_dir(dir);
  return ds;
}

void write_store(const fs::path& path, const TripleStore& store) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& t : store.triples) out << t.source << '\t' << t.relation << '\t' << t.target << '\n';
}

int cmd_prepare(const fs::path& dataset_dir, fs::path out_dir, std::ostream& out) {
  const Dataset ds = load_named_dataset(dataset_dir);
  print_stats(out, ds);
  if (out_dir.empty()) out_dir = dataset_dir / "processed";
  fs::create_directories(out_dir);
  {
    std::ofstream e(out_dir / "entities.tsv");
    ds.vocab.write_entities(e);
    std::ofstream r(out_dir / "relations.tsv");
    ds.vocab.write_relations(r);
  }
  const TripleStore train = add_reciprocals(ds.train, ds.vocab);
  const TripleStore valid = add_reciprocals(ds.valid, ds.vocab);
  const TripleStore test = add_reciprocals(ds.test, ds.vocab);
  write_store(out_dir / "train.ids.tsv", train);
  write_store(out_dir / "valid.ids.tsv", valid);
  write_store(out_dir / "test.ids.tsv", test);

  const FilterIndex filter = build_filter_index(train, valid, test);
  std::vector<std::pair<std::pair<int, int>, const std::vector<int>*>> keys;
  filter.for_each([&](int s, int r, const std::vector<int>& targets) { keys.push_back({{s, r}, &targets}); });
  std::sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::ofstream f(out_dir / "filter.tsv");
  for (const auto& [key, targets] : keys) {
    f << key.first << '\t' << key.second;
    for (int t : *targets) f << '\t' << t;
    f << '\n';
  }
  out << "wrote " << out_dir.string() << '\n';
  return kOk;
}

void write_run_manifest(const fs::path& out_dir, const ModelConfig& cfg, const fs::path& dataset_dir,
                        std::uint64_t vocab_hash) {
  ordered_json m;
  m["config"] = ordered_json::parse(config_to_json(cfg));
  m["config_hash"] = hex64(config_hash(cfg));
  m["dataset_dir"] = fs::absolute(dataset_dir).string();
  m["dataset_hash"] = hex64(vocab_hash);
  ordered_json sums;
  for (const char* split : {"train.txt", "valid.txt", "test.txt"}) sums[split] = hex64(file_checksum(dataset_dir / split));
  m["dataset_checksums"] = sums;
  m["build"] = KGE_BUILD_ID;
  m["started_at"] = now_iso8601();
  m["outputs"] = {{"metrics", (out_dir / "metrics.csv").string()},
                  {"best_checkpoint", (out_dir / "best").string()},
                  {"final_checkpoint", (out_dir / "final").string()}};
  const fs::path path = out_dir / "run_manifest.json";
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << m.dump(2) << '\n';
}

int cmd_train(const ConfigFlags& flags, const fs::path& dataset_dir, fs::path out_dir, const std::string& resume,
              std::ostream& out) {
  const Dataset ds = load_named_dataset(dataset_dir);
  const ModelConfig cfg = flags.resolve(ds.name);
  if (out_dir.empty()) {
    out_dir = fs::path("runs") / (cfg.dataset + "-" + to_string(cfg.decoder) + "-d" + std::to_string(cfg.dim));
  }
  const PreparedData data = prepare_data(ds);
  fs::create_directories(out_dir);
  save_config(cfg, out_dir / "config.json");
  write_run_manifest(out_dir, cfg, dataset_dir, data.vocab_hash);

  FitOptions options;
  options.out_dir = out_dir;
  options.eval_seed = cfg.seed;
  options.log = &out;
  if (!resume.empty()) options.resume_from = fs::path(resume);

  const auto start = std::chrono::steady_clock::now();
  const FitResult result = fit(cfg, data, options);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::ofstream summary(out_dir / "run_summary.json");
  summary << ordered_json{{"epochs_run", result.epochs_run},
                          {"best_epoch", result.best_epoch},
                          {"best_valid_mrr", result.best_valid_mrr},
                          {"seconds", seconds},
                          {"finished_at", now_iso8601()}}
                 .dump(2)
          << '\n';
  out << "trained " << result.epochs_run << " epochs in " << std::setprecision(4) << seconds << "s";
  if (result.best_epoch > 0) out << "; best valid MRR " << result.best_valid_mrr << " at epoch " << result.best_epoch;
  out << "\ncheckpoints in " << out_dir.string() << '\n';
  return kOk;
}

TiePolicy parse_ties(const std::string& s) {
  if (s == "optimistic") return TiePolicy::kOptimistic;
  if (s == "pessimistic") return TiePolicy::kPessimistic;
  return TiePolicy::kRandom;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& dataset_dir, const std::string& split, std::uint64_t seed,
             const std::string& ties, const fs::path& report_path, std::ostream& out, std::ostream& err) {
  if (!fs::exists(checkpoint / "manifest.json")) throw IoError("no checkpoint at " + checkpoint.string());
  const Dataset ds = load_named_dataset(dataset_dir);
  const std::uint64_t vocab_hash = ds.vocab.fingerprint();
  const CheckpointInfo info = read_checkpoint_info(checkpoint);
  if (info.dataset_hash != vocab_hash) {
    throw ContractError("checkpoint dataset hash " + hex64(info.dataset_hash) + " does not match dataset " +
                        dataset_dir.string() + " hash " + hex64(vocab_hash));
  }
  LoadedCheckpoint loaded = load_checkpoint(checkpoint);
  const PreparedData data = prepare_data(ds);
  const TripleStore& store = split == "train" ? data.train_raw : split == "valid" ? data.valid_raw : data.test_raw;

  EvalOptions options;
  options.batch_size = loaded.info.config.eval_batch_size;
  options.ties = parse_ties(ties);
  const EvalReport report =
      evaluate(make_model_scorer(loaded.trainer->model()), store, data.relation_count, data.filter, seed, options);
  out << split << " (" << store.size() << " triples, epoch " << loaded.info.epoch << ")\n" << format_report(report);
  if (!report_path.empty()) {
    std::ofstream csv(report_path);
    if (!csv) throw IoError("cannot write " + report_path.string());
    write_report_csv(csv, report);
  }
  if (report.has_nan()) {
    err << "error: evaluation produced NaN metrics\n";
    return kNanMetric;
  }
  return kOk;
}

int cmd_params(const ConfigFlags& flags, const fs::path& dataset_dir, std::ostream& out) {
  std::string name;
  std::size_t entities = 0;
  std::size_t relations = 0;
  if (!dataset_dir.empty()) {
    const Dataset ds = load_named_dataset(dataset_dir);
    name = ds.name;
    entities = ds.vocab.entity_count();
    relations = ds.vocab.relation_count();
  }
  const ModelConfig cfg = flags.resolve(name.empty() ? canonical_dataset_name(flags.dataset) : name);
  const KnownDataset* known = find_known(cfg.dataset);
  if (dataset_dir.empty()) {
    if (known == nullptr) throw ParameterError("unknown dataset '" + cfg.dataset + "'; pass --dataset-dir");
    entities = known->entities;
    relations = known->relations;
  }
  const std::int64_t nfp = count_nonembedding_params(encoder_config(cfg), cfg.decoder, cfg.tucker_source_norm);
  const std::int64_t efp = count_embedding_params(entities, relations, cfg.dim);

  const bool reported = known != nullptr && cfg.decoder == DecoderKind::kTwoMult && cfg.dim == 100;
  out << cfg.dataset << " " << to_string(cfg.decoder) << " d=" << cfg.dim << " heads=" << cfg.heads
      << " |V|=" << entities << " |R|=" << relations << '\n';
  out << std::left << std::setw(6) << "" << std::right << std::setw(12) << "count" << std::setw(10) << "rounded"
      << std::setw(10) << "reported" << '\n';
  const auto line = [&](const char* label, std::int64_t n, double rep) {
    out << std::left << std::setw(6) << label << std::right << std::setw(12) << n << std::setw(10) << millions(n);
    if (reported) {
      std::ostringstream r;
      r << std::fixed << std::setprecision(2) << rep << "M";
      out << std::setw(10) << r.str();
    } else {
      out << std::setw(10) << "-";
    }
    out << '\n';
  };
  line("NFP", nfp, reported ? known->reported_nfp : 0.0);
  line("EFP", efp, reported ? known->reported_efp : 0.0);
  return kOk;
}

int cmd_ablate_heads(const ConfigFlags& flags, const fs::path& dataset_dir, std::vector<std::size_t> heads_list,
                     std::size_t budget, const fs::path& out_dir, std::ostream& out) {
  if (heads_list.empty()) throw ParameterError("head list is empty");
  const Dataset ds = load_named_dataset(dataset_dir);
  const ModelConfig base = flags.resolve(ds.name);
  const PreparedData data = prepare_data(ds);
  const fs::path dir = out_dir.empty() ? fs::path("runs") / "ablate-heads" : out_dir;
  fs::create_directories(dir);
  const fs::path csv_path = dir / "ablate_heads.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot write " + csv_path.string());
  csv << "heads,nfp,mrr,budget_epochs\n";

  for (std::size_t h : heads_list) {
    ModelConfig cfg = base;
    cfg.heads = h;
    if (budget > 0) cfg.epochs = budget;
    cfg.validate();
    const std::int64_t nfp = count_nonembedding_params(encoder_config(cfg), cfg.decoder, cfg.tucker_source_norm);
    Trainer trainer(cfg, data.entity_count, data.relation_count);
    FitOptions options;
    options.eval_seed = cfg.seed;
    fit(trainer, data, options);
    const EvalReport report = evaluate(make_model_scorer(trainer.model()), data.valid_raw, data.relation_count,
                                       data.filter, cfg.seed, EvalOptions{cfg.eval_batch_size, 0, TiePolicy::kRandom});
    csv << h << ',' << nfp << ',' << std::setprecision(6) << report.overall.mrr << ',' << cfg.epochs << '\n';
    csv.flush();
    out << "heads " << h << "  NFP " << nfp << "  valid MRR " << report.overall.mrr << "  (" << cfg.epochs
        << " epochs)\n";
  }
  out << "wrote " << csv_path.string() << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Knowledge-graph embeddings with a many-headed self-attention encoder", "kge"};
  app.require_subcommand(1);

  fs::path dataset_dir;
  fs::path out_dir;

  auto* prepare = app.add_subcommand("prepare", "Load a dataset, print statistics, write id-mapped artifacts");
  prepare->add_option("--dataset-dir", dataset_dir, "Directory with train.txt, valid.txt, test.txt")->required();
  prepare->add_option("--out-dir", out_dir, "Output directory (default <dataset-dir>/processed)");

  ConfigFlags train_flags;
  std::string resume;
  auto* train = app.add_subcommand("train", "Train a model");
  train_flags.attach(train, true);
  train->add_option("--dataset-dir", dataset_dir, "Dataset directory")->required();
  train->add_option("--out-dir", out_dir, "Run directory");
  train->add_option("--resume", resume, "Checkpoint directory to continue from")->check(CLI::ExistingDirectory);

  fs::path checkpoint;
  std::string split = "test";
  std::uint64_t eval_seed = 1;
  std::string ties = "random";
  fs::path report_path;
  auto* eval = app.add_subcommand("eval", "Filtered link-prediction evaluation of a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  eval->add_option("--dataset-dir", dataset_dir, "Dataset directory")->required();
  eval->add_option("--split", split, "Split to rank")->check(CLI::IsMember({"train", "valid", "test"}));
  eval->add_option("--seed", eval_seed, "Tie-breaking seed");
  eval->add_option("--ties", ties, "Tie placement (diagnostic)")
      ->check(CLI::IsMember({"random", "optimistic", "pessimistic"}));
  eval->add_option("--report", report_path, "Write the report as CSV");

  ConfigFlags params_flags;
  auto* params = app.add_subcommand("params", "Print nonembedding and embedding parameter counts");
  params_flags.attach(params, false);
  params->add_option("--dataset-dir", dataset_dir, "Dataset directory (default: known dataset sizes)");

  ConfigFlags ablate_flags;
  std::vector<std::size_t> heads_list{4, 8, 16, 32, 64, 128};
  std::size_t budget = 0;
  auto* ablate = app.add_subcommand("ablate-heads", "Train one model per head count and report NFP and MRR");
  ablate_flags.attach(ablate, true);
  ablate->add_option("--dataset-dir", dataset_dir, "Dataset directory")->required();
  ablate->add_option("--out-dir", out_dir, "Output directory");
  ablate->add_option("--head-list", heads_list, "Head counts, comma separated")->delimiter(',');
  ablate->add_option("--budget-epochs", budget, "Shared epoch budget per model (0: config epochs)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*prepare) return cmd_prepare(dataset_dir, out_dir, out);
    if (*train) return cmd_train(train_flags, dataset_dir, out_dir, resume, out);
    if (*eval) return cmd_eval(checkpoint, dataset_dir, split, eval_seed, ties, report_path, out, err);
    if (*params) return cmd_params(params_flags, dataset_dir, out);
    if (*ablate) return cmd_ablate_heads(ablate_flags, dataset_dir, heads_list, budget, out_dir, out);
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

}  // namespace kge::cli

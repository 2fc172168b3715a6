// Acceptance suite. Prints one PASS/FAIL line per criterion.
//
//   kge_acceptance core      criteria 2, 3, 4, 5, 6, 7a, 8, 10 (no data needed)
//   kge_acceptance data      criteria 1 and 7b (FB15k-237 / WN18RR under KGE_DATA_DIR)
//   kge_acceptance nightly   criterion 9 (hours; needs KGE_DATA_DIR)
//
// Exit status: 0 all pass, 1 any failure, 77 when the data a group needs is
// not available.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "kge/config.h"
#include "kge/decoders.h"
#include "kge/encoder.h"
#include "kge/evaluation.h"
#include "kge/kg_data.h"
#include "kge/model.h"
#include "kge/ops.h"
#include "kge/training.h"
#include "support/gradcheck.h"
#include "support/toy_kg.h"

namespace {

using namespace kge;
namespace fs = std::filesystem;

constexpr int kSkip = 77;

// Pinned tolerances and budgets.
constexpr double kStatsBudgetSeconds = 30.0;
constexpr double kNfpHeadlineRelTol = 0.05;
constexpr double kNfpCurveRelTol = 0.10;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradBudgetSeconds = 120.0;
constexpr double kDecoderAbsTol = 1e-4;
constexpr int kDecoderInstances = 200;
constexpr double kDecoderBudgetSeconds = 60.0;
constexpr int kTieTrials = 100000;
constexpr double kChiSquareCritical = 13.277;  // df = 4, alpha = 0.01
constexpr int kEnumerationInstances = 100;
constexpr int kEnumerationDraws = 5000;
constexpr double kEnumerationFreqTol = 0.03;
constexpr double kRankingBudgetSeconds = 60.0;
constexpr double kLn2Tol = 1e-6;
constexpr double kInitLossRelTol = 0.20;
constexpr std::size_t kMemorizeEpochs = 200;
constexpr double kMemorizeBudgetSeconds = 120.0;
constexpr std::size_t kConvergenceEpochs = 100;
constexpr double kConvergenceMrr = 0.33;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Line {
  std::string id;
  bool pass;
  std::string detail;
};

std::vector<Line> g_lines;

void report(const std::string& id, bool pass, const std::string& detail) {
  g_lines.push_back({id, pass, detail});
  std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << id << "  " << detail << std::endl;
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------- criterion 2

void criterion_2() {
  const std::int64_t fb = count_embedding_params(14541, 237, 100);
  const std::int64_t wn = count_embedding_params(40943, 11, 100);
  const auto round3 = [](std::int64_t n) { return std::round(static_cast<double>(n) / 1e4) / 100.0; };
  const bool pass = fb == 1501500 && wn == 4096500 && round3(fb) == 1.50 && round3(wn) == 4.10;
  report("2", pass, fmt("EFP FB15k-237 %lld (1.50M), WN18RR %lld (4.10M)", static_cast<long long>(fb),
                        static_cast<long long>(wn)));
}

// ---------------------------------------------------------------- criterion 3

void criterion_3() {
  EncoderConfig c;  // d=100, h=64, d_k=32, d_v=50, d_h=2048
  std::map<std::size_t, std::int64_t> nfp;
  for (std::size_t h : {4, 8, 16, 32, 64, 128}) {
    c.heads = h;
    nfp[h] = count_nonembedding_params(c, DecoderKind::kTwoMult);
  }
  const double rel64 = std::abs(nfp[64] / 1.50e6 - 1.0);
  const double rel4 = std::abs(nfp[4] / 0.5e6 - 1.0);
  const double rel128 = std::abs(nfp[128] / 2.58e6 - 1.0);
  // Exactly affine: NFP(h) - NFP(4) = b (h - 4) with the same b for every h.
  const std::int64_t b = (nfp[8] - nfp[4]) / 4;
  bool affine = (nfp[8] - nfp[4]) % 4 == 0;
  for (const auto& [h, n] : nfp) affine = affine && n - nfp[4] == b * static_cast<std::int64_t>(h - 4);
  const bool pass = rel64 < kNfpHeadlineRelTol && rel4 < kNfpCurveRelTol && rel128 < kNfpCurveRelTol && affine;
  report("3", pass,
         fmt("NFP h=64 %lld (%.1f%% off 1.50M), h=4 %lld (%.1f%% off 0.5M), h=128 %lld (%.1f%% off 2.58M), "
             "affine slope %lld/head: %s",
             static_cast<long long>(nfp[64]), 100 * rel64, static_cast<long long>(nfp[4]), 100 * rel4,
             static_cast<long long>(nfp[128]), 100 * rel128, static_cast<long long>(b), affine ? "yes" : "no"));
}

// ---------------------------------------------------------------- criterion 4

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = -1, double hi = 1) {
  Rng rng(seed);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

Var probe(Tape<double>& t, Var y) {
  const Shape s = t.shape(y);
  const Var w = t.constant(testing::probe_weights({1, shape_numel(s)}));
  return matmul(t, reshape(t, y, {1, shape_numel(s)}), w, true);
}

void criterion_4() {
  const auto start = Clock::now();
  using testing::gradcheck;
  using V = std::vector<Var>;
  std::vector<std::pair<std::string, double>> errors;
  const auto check = [&](const std::string& name, const testing::ScalarFn& f, std::vector<Tensor<double>> in) {
    errors.emplace_back(name, gradcheck(f, std::move(in)).max_rel_error);
  };
  const auto a = random_tensor({4, 6}, 1), b = random_tensor({4, 6}, 2), w = random_tensor({6, 3}, 3);
  const auto row = random_tensor({1, 6}, 4), pos = random_tensor({1, 6}, 5, 0.5, 1.5);
  check("matmul", [](Tape<double>& t, const V& v) { return probe(t, matmul(t, v[0], v[1])); }, {a, w});
  check("matmul_t", [](Tape<double>& t, const V& v) { return probe(t, matmul(t, v[0], v[1], true)); }, {a, b});
  check("add", [](Tape<double>& t, const V& v) { return probe(t, add(t, v[0], v[1])); }, {a, b});
  check("add_bias", [](Tape<double>& t, const V& v) { return probe(t, add_bias(t, v[0], v[1])); }, {a, row});
  check("scale", [](Tape<double>& t, const V& v) { return probe(t, scale(t, v[0], 1.7)); }, {a});
  check("relu", [](Tape<double>& t, const V& v) { return probe(t, relu(t, v[0])); }, {a});
  check("sigmoid", [](Tape<double>& t, const V& v) { return probe(t, sigmoid(t, v[0])); }, {a});
  check("softmax_rows", [](Tape<double>& t, const V& v) { return probe(t, softmax_rows(t, v[0], 0.8)); }, {a});
  check("dropout",
        [](Tape<double>& t, const V& v) {
          Rng rng(9);
          return probe(t, dropout(t, v[0], 0.25, Mode::kTrain, rng));
        },
        {a});
  for (Mode mode : {Mode::kTrain, Mode::kEval}) {
    check(mode == Mode::kTrain ? "batch_norm(train)" : "batch_norm(eval)",
          [mode](Tape<double>& t, const V& v) {
            BatchNormStats<double> stats(6);
            stats.running_var.fill(1.7);
            return probe(t, batch_norm(t, v[0], v[1], v[2], stats, mode));
          },
          {a, pos, row});
  }
  check("layer_norm", [](Tape<double>& t, const V& v) { return probe(t, layer_norm(t, v[0], v[1], v[2])); },
        {a, pos, row});
  check("concat/split_rows",
        [](Tape<double>& t, const V& v) {
          const Var c = concat_rows(t, v[0], v[1]);
          return probe(t, add(t, split_rows(t, c, 0), scale(t, split_rows(t, c, 1), 2.0)));
        },
        {a, b});
  const std::vector<int> ids{3, 0, 3, 2, 1};
  check("gather_rows", [&ids](Tape<double>& t, const V& v) { return probe(t, gather_rows(t, v[0], ids)); }, {a});
  check("reshape", [](Tape<double>& t, const V& v) { return probe(t, reshape(t, v[0], {3, 8})); }, {a});
  check("sum", [](Tape<double>& t, const V& v) { return sum(t, v[0]); }, {a});
  check("pair_attention_logits",
        [](Tape<double>& t, const V& v) { return probe(t, pair_attention_logits(t, v[0], v[1], 2)); }, {a, b});
  check("pair_attention_mix",
        [](Tape<double>& t, const V& v) { return probe(t, pair_attention_mix(t, v[0], v[1], 2)); },
        {random_tensor({8, 2}, 6, 0, 1), a});
  check("contract_mode2", [](Tape<double>& t, const V& v) { return probe(t, contract_mode2(t, v[0], v[1])); },
        {random_tensor({3, 9}, 7), random_tensor({3, 3}, 8)});
  const std::vector<int> targets{5, 0, 2, 2};
  check("bce_with_logits",
        [&targets](Tape<double>& t, const V& v) {
          return bce_with_logits(t, v[0], std::span<const int>(targets), 0.1);
        },
        {a});
  const std::vector<std::vector<int>> multi{{5, 1}, {0}, {2, 3, 4}, {2}};
  check("bce_with_logits(multi)",
        [&multi](Tape<double>& t, const V& v) { return bce_with_logits(t, v[0], multi, 0.1); }, {a});

  // Full composition: embeddings, encoder, decoder, loss. d=8, h=2, |V|=10.
  for (DecoderKind kind : {DecoderKind::kTwoMult, DecoderKind::kTucker}) {
    ModelConfig cfg;
    cfg.decoder = kind;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.key_dim = 4;
    cfg.value_dim = 4;
    cfg.hidden_dim = 16;
    Model<double> model(cfg, 10, 3);
    const std::vector<int> s{0, 4, 9, 4, 7}, r{0, 1, 2, 3, 5}, t{1, 2, 3, 0, 9};
    const auto f = [&](Tape<double>& tape) {
      Rng rng(11);
      return bce_with_logits(tape, model.score(tape, s, r, Mode::kTrain, rng), std::span<const int>(t), 0.1);
    };
    errors.emplace_back("model(" + to_string(kind) + ")",
                        testing::gradcheck_params(f, model.parameters()).max_rel_error);
  }

  const auto worst = std::max_element(errors.begin(), errors.end(),
                                      [](const auto& x, const auto& y) { return x.second < y.second; });
  const double secs = seconds_since(start);
  const bool pass = worst->second < kGradRelTol && secs < kGradBudgetSeconds;
  report("4", pass,
         fmt("%zu gradchecks at 64-bit, worst %s rel err %.2e (< %.0e), %.1fs", errors.size(), worst->first.c_str(),
             worst->second, kGradRelTol, secs));
}

// ---------------------------------------------------------------- criterion 5

void criterion_5() {
  const auto start = Clock::now();
  Rng gen(2024);
  double worst_twomult = 0, worst_tucker = 0;
  for (int inst = 0; inst < kDecoderInstances; ++inst) {
    const std::size_t d = 1 + gen.below(6), n = 1 + gen.below(10), batch = 1 + gen.below(4);
    const auto rnd = [&](Shape s) {
      Tensor<float> x(std::move(s));
      for (auto& v : x.values()) v = static_cast<float>(gen.uniform(-1, 1));
      return x;
    };
    const auto es = rnd({batch, d}), er = rnd({batch, d}), ent = rnd({n, d}), core = rnd({d, d, d});
    Tape<float> tape;
    tape.set_grad_enabled(false);
    const auto& tm = tape.value(score_twomult(tape, tape.constant(er), tape.constant(ent)));
    const auto& tk = tape.value(
        score_tucker(tape, tape.constant(es), tape.constant(er), tape.constant(core), tape.constant(ent)));
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < n; ++t) {
        double dot = 0, tri = 0;
        for (std::size_t k = 0; k < d; ++k) dot += static_cast<double>(er(b, k)) * ent(t, k);
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t j = 0; j < d; ++j)
            for (std::size_t k = 0; k < d; ++k)
              tri += static_cast<double>(core[(i * d + j) * d + k]) * es(b, i) * er(b, j) * ent(t, k);
        worst_twomult = std::max(worst_twomult, std::abs(tm(b, t) - dot));
        worst_tucker = std::max(worst_tucker, std::abs(tk(b, t) - tri));
      }
    }
  }
  const double secs = seconds_since(start);
  const bool pass = worst_twomult < kDecoderAbsTol && worst_tucker < kDecoderAbsTol && secs < kDecoderBudgetSeconds;
  report("5", pass,
         fmt("%d random instances, max |diff| TwoMult %.2e, Tucker %.2e (< %.0e), %.2fs", kDecoderInstances,
             worst_twomult, worst_tucker, kDecoderAbsTol, secs));
}

// ---------------------------------------------------------------- criterion 6

std::map<std::int64_t, double> enumerate_ranks(const std::vector<double>& s, int target, const std::vector<int>& filter) {
  std::vector<int> tied;
  std::int64_t greater = 0;
  for (int c = 0; c < static_cast<int>(s.size()); ++c) {
    if (c != target && std::find(filter.begin(), filter.end(), c) != filter.end()) continue;
    if (s[c] > s[target]) ++greater;
    if (s[c] == s[target]) tied.push_back(c);
  }
  std::map<std::int64_t, double> dist;
  double total = 0;
  do {
    dist[1 + greater + (std::find(tied.begin(), tied.end(), target) - tied.begin())] += 1;
    total += 1;
  } while (std::next_permutation(tied.begin(), tied.end()));
  for (auto& [k, v] : dist) v /= total;
  return dist;
}

void criterion_6() {
  const auto start = Clock::now();
  // Uniformity on all-tied scores, |V| = 5, true id 3.
  const std::vector<double> tied(5, 0.25);
  Rng rng(6);
  std::vector<int> counts(6, 0);
  bool in_range = true;
  for (int i = 0; i < kTieTrials; ++i) {
    const auto r = rank_query<double>(tied, 3, nullptr, rng);
    if (r < 1 || r > 5) in_range = false;
    else ++counts[r];
  }
  double chi2 = 0;
  const double expected = kTieTrials / 5.0;
  for (int r = 1; r <= 5; ++r) chi2 += (counts[r] - expected) * (counts[r] - expected) / expected;

  // Enumeration oracle for |V| <= 12.
  Rng gen(66);
  int mismatches = 0;
  double worst_freq = 0;
  for (int inst = 0; inst < kEnumerationInstances; ++inst) {
    const std::size_t n = 2 + gen.below(11);
    std::vector<double> s(n);
    for (auto& v : s) v = static_cast<double>(gen.below(4));
    const int target = static_cast<int>(gen.below(n));
    std::vector<int> filter;
    for (int c = 0; c < static_cast<int>(n); ++c)
      if (gen.below(3) == 0) filter.push_back(c);
    const auto exact = enumerate_ranks(s, target, filter);
    Rng local(1000 + inst);
    if (rank_query<double>(s, target, &filter, local, TiePolicy::kOptimistic) != exact.begin()->first) ++mismatches;
    if (rank_query<double>(s, target, &filter, local, TiePolicy::kPessimistic) != exact.rbegin()->first) ++mismatches;
    std::map<std::int64_t, double> seen;
    for (int k = 0; k < kEnumerationDraws; ++k) seen[rank_query<double>(s, target, &filter, local)] += 1.0 / kEnumerationDraws;
    for (const auto& [rank, p] : seen)
      if (!exact.count(rank)) ++mismatches;
    for (const auto& [rank, p] : exact) worst_freq = std::max(worst_freq, std::abs(seen[rank] - p));
  }
  const double secs = seconds_since(start);
  const bool pass = in_range && chi2 < kChiSquareCritical && mismatches == 0 && worst_freq < kEnumerationFreqTol &&
                    secs < kRankingBudgetSeconds;
  report("6", pass,
         fmt("all-tied |V|=5: chi2 %.2f (< %.3f) over %d trials; %d enumeration instances: %d support mismatches, "
             "max freq diff %.3f (< %.2f), %.2fs",
             chi2, kChiSquareCritical, kTieTrials, kEnumerationInstances, mismatches, worst_freq,
             kEnumerationFreqTol, secs));
}

// --------------------------------------------------------------- criterion 7a

void criterion_7a() {
  double worst = 0;
  for (std::size_t n : {2u, 5u, 100u, 14541u}) {
    worst = std::max(worst, std::abs(bce_loss(std::vector<double>(n, 0.0), 1, 0.0) - std::log(2.0)));
    worst = std::max(worst, std::abs(bce_loss(std::vector<double>(n, 0.0), 0, 0.1) - std::log(2.0)));
    Tape<float> tape;
    const Var s = tape.constant(Tensor<float>({4, n}, 0.0f));
    const std::vector<int> targets{0, 1, 0, 1};
    const double f = tape.value(bce_with_logits(tape, s, std::span<const int>(targets), 0.1f))[0];
    worst = std::max(worst, std::abs(f - std::log(2.0)));
  }
  report("7a", worst < kLn2Tol, fmt("all-zero scores: max |loss - ln 2| = %.2e (< %.0e)", worst, kLn2Tol));
}

// ---------------------------------------------------------------- criterion 8

EvalReport train_split_report(Trainer& trainer, const PreparedData& data, std::uint64_t seed, std::size_t threads) {
  return evaluate(make_model_scorer(trainer.model()), data.train_raw, data.relation_count, data.train_targets, seed,
                  {512, threads, TiePolicy::kRandom});
}

ModelConfig toy_config() {
  ModelConfig cfg;
  cfg.dataset = "toy";
  cfg.dim = 16;
  cfg.heads = 4;
  cfg.key_dim = 16;
  cfg.value_dim = 16;
  cfg.hidden_dim = 64;
  cfg.dropout_enc = cfg.dropout_mha = cfg.dropout_pff = cfg.dropout_sdp = 0.0;
  cfg.batch_size = 25;
  cfg.learning_rate = 0.01;
  cfg.decay_rate = 1.0;
  cfg.label_smoothing = 0.0;
  cfg.seed = 1;
  return cfg;
}

void criterion_8() {
  const auto start = Clock::now();
  const PreparedData data = prepare_data(testing::make_toy_dataset(20, 3, 50, 7));
  Trainer trainer(toy_config(), data.entity_count, data.relation_count);
  double mrr = 0;
  std::size_t reached = 0;
  while (trainer.epoch() < kMemorizeEpochs) {
    trainer.train_epoch(data.train);
    if (trainer.epoch() % 10 == 0) {
      mrr = train_split_report(trainer, data, 1, 1).overall.mrr;
      if (mrr == 1.0) {
        reached = trainer.epoch();
        break;
      }
    }
  }
  const double secs = seconds_since(start);
  const bool pass = reached > 0 && secs < kMemorizeBudgetSeconds;
  report("8", pass,
         reached > 0 ? fmt("toy KG (20 entities, 3 relations, 50 triples), d=16, h=4: train MRR 1.0 at epoch %zu, %.1fs",
                           reached, secs)
                     : fmt("toy KG: train MRR %.4f after %zu epochs, %.1fs", mrr, kMemorizeEpochs, secs));
}

// --------------------------------------------------------------- criterion 10

void criterion_10() {
  const PreparedData data = prepare_data(testing::make_toy_dataset(20, 3, 50, 7));
  auto cfg = toy_config();
  cfg.dropout_enc = 0.2;
  cfg.dropout_sdp = 0.1;
  std::vector<double> losses;
  std::vector<std::vector<std::int64_t>> ranks;
  std::vector<std::string> texts;
  bool tie_free = true;
  for (int run = 0; run < 2; ++run) {
    Trainer trainer(cfg, data.entity_count, data.relation_count);
    losses.push_back(trainer.train_epoch(data.train).mean_loss);
    for (int e = 0; e < 4; ++e) trainer.train_epoch(data.train);
    // Different tie seeds must not matter when no score ties the target.
    const auto rep = train_split_report(trainer, data, 100 + run, 1);
    const auto opt = evaluate(make_model_scorer(trainer.model()), data.train_raw, data.relation_count,
                              data.train_targets, 0, {512, 1, TiePolicy::kOptimistic});
    const auto pes = evaluate(make_model_scorer(trainer.model()), data.train_raw, data.relation_count,
                              data.train_targets, 0, {512, 1, TiePolicy::kPessimistic});
    tie_free = tie_free && opt.ranks == pes.ranks;
    ranks.push_back(rep.ranks);
    texts.push_back(format_report(rep));
  }
  const bool pass = losses[0] == losses[1] && ranks[0] == ranks[1] && texts[0] == texts[1] && tie_free;
  report("10", pass,
         fmt("epoch-1 losses %.17g / %.17g (bit-identical: %s); reports identical: %s; scores tie-free: %s", losses[0],
             losses[1], losses[0] == losses[1] ? "yes" : "no", ranks[0] == ranks[1] ? "yes" : "no",
             tie_free ? "yes" : "no"));
}

// ------------------------------------------------------------ dataset groups

std::optional<fs::path> data_root() {
  const char* env = std::getenv("KGE_DATA_DIR");
  if (env == nullptr || *env == '\0') return std::nullopt;
  return fs::path(env);
}

bool has_dataset(const fs::path& dir) {
  return fs::exists(dir / "train.txt") && fs::exists(dir / "valid.txt") && fs::exists(dir / "test.txt");
}

void criterion_1(const fs::path& root) {
  struct Expected {
    const char* name;
    std::size_t v, r, train, valid, test;
  };
  const Expected rows[] = {{"FB15k-237", 14541, 237, 272115, 17535, 20466}, {"WN18RR", 40943, 11, 86835, 3034, 3134}};
  for (const auto& e : rows) {
    const auto start = Clock::now();
    const Dataset ds = load_dataset(root / e.name);
    const double secs = seconds_since(start);
    const bool pass = ds.vocab.entity_count() == e.v && ds.vocab.relation_count() == e.r && ds.train.size() == e.train &&
                      ds.valid.size() == e.valid && ds.test.size() == e.test && secs < kStatsBudgetSeconds;
    report(std::string("1 (") + e.name + ")", pass,
           fmt("|V| %zu/%zu, |R| %zu/%zu, train %zu/%zu, valid %zu/%zu, test %zu/%zu, %.1fs", ds.vocab.entity_count(),
               e.v, ds.vocab.relation_count(), e.r, ds.train.size(), e.train, ds.valid.size(), e.valid,
               ds.test.size(), e.test, secs));
  }
}

void criterion_7b(const fs::path& root) {
  const PreparedData data = prepare_data(load_dataset(root / "FB15k-237"));
  const ModelConfig cfg = preset_config("FB15k-237", DecoderKind::kTwoMult, 100);
  Model<float> model(cfg, data.entity_count, data.relation_count);
  Rng rng(derive_seed(cfg.seed, 7));
  // Mean loss of the initialized model over the first few training batches.
  const auto batches = batch_queries(data.train, cfg.batch_size, cfg.seed, 0);
  double total = 0;
  std::size_t rows = 0;
  for (std::size_t b = 0; b < std::min<std::size_t>(4, batches.size()); ++b) {
    Tape<float> tape;
    tape.set_grad_enabled(false);
    const Var s = model.score(tape, batches[b].sources, batches[b].relations, Mode::kTrain, rng);
    const Var loss = bce_with_logits(tape, s, std::span<const int>(batches[b].targets),
                                     static_cast<float>(cfg.label_smoothing));
    total += tape.value(loss)[0] * static_cast<double>(batches[b].size());
    rows += batches[b].size();
  }
  const double loss = total / static_cast<double>(rows);
  const double rel = std::abs(loss / std::log(2.0) - 1.0);
  report("7b", rel < kInitLossRelTol,
         fmt("initialized FB15k-237 loss %.6f, %.1f%% from ln 2 (< %.0f%%)", loss, 100 * rel, 100 * kInitLossRelTol));
}

void criterion_9(const fs::path& root) {
  const auto start = Clock::now();
  const PreparedData data = prepare_data(load_dataset(root / "FB15k-237"));
  ModelConfig cfg = preset_config("FB15k-237", DecoderKind::kTwoMult, 100);
  cfg.epochs = kConvergenceEpochs;
  cfg.eval_every = 10;
  FitOptions options;
  options.log = &std::cout;
  options.eval_seed = cfg.seed;
  if (const char* out = std::getenv("KGE_NIGHTLY_OUT")) options.out_dir = out;
  const FitResult result = fit(cfg, data, options);
  const double hours = seconds_since(start) / 3600.0;
  report("9", result.best_valid_mrr >= kConvergenceMrr,
         fmt("FB15k-237 TwoMult d=100: best valid MRR %.4f at epoch %zu (>= %.2f by epoch %zu), %.2fh",
             result.best_valid_mrr, result.best_epoch, kConvergenceMrr, kConvergenceEpochs, hours));
}

int summarize() {
  std::size_t failed = 0;
  for (const auto& l : g_lines) failed += l.pass ? 0 : 1;
  std::cout << (failed == 0 ? "ALL PASS" : "FAILURES") << "  " << g_lines.size() - failed << "/" << g_lines.size()
            << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string group = argc > 1 ? argv[1] : "core";
  try {
    if (group == "core") {
      criterion_2();
      criterion_3();
      criterion_4();
      criterion_5();
      criterion_6();
      criterion_7a();
      criterion_8();
      criterion_10();
      return summarize();
    }
    if (group == "data" || group == "nightly") {
      const auto root = data_root();
      if (!root || !has_dataset(*root / "FB15k-237") || (group == "data" && !has_dataset(*root / "WN18RR"))) {
        std::cout << "SKIP  criteria " << (group == "data" ? "1, 7b" : "9")
                  << "  need KGE_DATA_DIR with FB15k-237/ and WN18RR/ (train.txt, valid.txt, test.txt)" << std::endl;
        return kSkip;
      }
      if (group == "nightly") {
        const char* enabled = std::getenv("KGE_RUN_NIGHTLY");
        if (enabled == nullptr || std::string(enabled) != "1") {
          std::cout << "SKIP  criterion 9  set KGE_RUN_NIGHTLY=1 to run the multi-hour convergence check" << std::endl;
          return kSkip;
        }
        criterion_9(*root);
      } else {
        criterion_1(*root);
        criterion_7b(*root);
      }
      return summarize();
    }
  } catch (const std::exception& e) {
    std::cout << "FAIL  error: " << e.what() << std::endl;
    return 1;
  }
  std::cerr << "usage: kge_acceptance [core|data|nightly]\n";
  return 2;
}

#ifndef KGE_EVALUATION_H_
#define KGE_EVALUATION_H_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "kge/kg_data.h"
#include "kge/model.h"
#include "kge/rng.h"
#include "kge/tensor.h"

namespace kge {

// Where the true target goes among candidates with an equal score.
// kRandom is the evaluation protocol; the other two are diagnostics.
enum class TiePolicy { kRandom, kOptimistic, kPessimistic };

// Filtered rank (>= 1) of true_target. Candidates listed in filter (other
// known-true targets) are removed, except the true target itself. Ties are
// broken by placing the true target uniformly at random among the tied
// candidates: rank = 1 + #greater + U, U uniform on {0, ..., #tied}.
template <typename T>
std::int64_t rank_query(std::span<const T> scores, int true_target, const std::vector<int>* filter, Rng& rng,
                        TiePolicy policy = TiePolicy::kRandom);

struct RankMetrics {
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  std::size_t count = 0;

  static RankMetrics from_ranks(std::span<const std::int64_t> ranks);
  bool has_nan() const;
};

struct EvalReport {
  RankMetrics overall;
  RankMetrics left;   // source prediction, via reciprocal queries (t, r⁻¹, ?)
  RankMetrics right;  // target prediction, queries (s, r, ?)
  // 2i: right rank of triple i, 2i + 1: left rank. 0 marks a query whose
  // scores contained NaN; any such entry turns the metrics into NaN.
  std::vector<std::int64_t> ranks;

  bool has_nan() const { return overall.has_nan() || left.has_nan() || right.has_nan(); }
};

// Fills out with [B x |V|] scores for the given queries. Must be safe to
// call concurrently.
using ScoreFn = std::function<void(std::span<const int> sources, std::span<const int> relations, Tensor<float>& out)>;

// Eval-mode scorer over a trained model; the model must outlive it and
// must not be trained while the scorer is in use.
ScoreFn make_model_scorer(Model<float>& model);

struct EvalOptions {
  std::size_t batch_size = 512;
  // 0: KGE_THREADS if set, else the hardware concurrency.
  std::size_t threads = 0;
  TiePolicy ties = TiePolicy::kRandom;
};

// Both directions for every triple of split (original relation ids). The
// filter must be built from reciprocal-augmented stores. Per-query random
// streams depend only on (seed, query index), so results do not depend on
// the thread count.
EvalReport evaluate(const ScoreFn& scorer, const TripleStore& split, std::size_t relation_count,
                    const FilterIndex& filter, std::uint64_t seed, const EvalOptions& options = {});

std::size_t resolve_thread_count(std::size_t requested);

void write_report_csv(std::ostream& os, const EvalReport& report);
std::string format_report(const EvalReport& report);

}  // namespace kge

#endif  // KGE_EVALUATION_H_

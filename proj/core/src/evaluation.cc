#include "kge/evaluation.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "kge/error.h"

namespace kge {

template <typename T>
std::int64_t rank_query(std::span<const T> scores, int true_target, const std::vector<int>* filter, Rng& rng,
                        TiePolicy policy) {
  if (true_target < 0 || static_cast<std::size_t>(true_target) >= scores.size()) {
    throw ContractError("rank_query: true target " + std::to_string(true_target) + " outside [0, " +
                        std::to_string(scores.size()) + ")");
  }
  const T target_score = scores[static_cast<std::size_t>(true_target)];
  if (std::isnan(target_score)) throw NumericError("rank_query: true target score is NaN");
  std::int64_t greater = 0;
  std::int64_t tied = 0;
  for (const T s : scores) {
    if (s > target_score) {
      ++greater;
    } else if (s == target_score) {
      ++tied;
    }
  }
  --tied;  // the true target itself
  if (filter) {
    for (int c : *filter) {
      if (c == true_target) continue;
      const T s = scores[static_cast<std::size_t>(c)];
      if (s > target_score) {
        --greater;
      } else if (s == target_score) {
        --tied;
      }
    }
  }
  std::int64_t offset = 0;
  switch (policy) {
    case TiePolicy::kRandom:
      offset = tied > 0 ? static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(tied) + 1)) : 0;
      break;
    case TiePolicy::kOptimistic:
      break;
    case TiePolicy::kPessimistic:
      offset = tied;
      break;
  }
  return 1 + greater + offset;
}

template std::int64_t rank_query<float>(std::span<const float>, int, const std::vector<int>*, Rng&, TiePolicy);
template std::int64_t rank_query<double>(std::span<const double>, int, const std::vector<int>*, Rng&, TiePolicy);

RankMetrics RankMetrics::from_ranks(std::span<const std::int64_t> ranks) {
  RankMetrics m;
  m.count = ranks.size();
  if (ranks.empty()) {
    m.mrr = m.hits1 = m.hits3 = m.hits10 = std::nan("");
    return m;
  }
  if (std::any_of(ranks.begin(), ranks.end(), [](std::int64_t r) { return r < 1; })) {
    m.mrr = m.hits1 = m.hits3 = m.hits10 = std::nan("");
    return m;
  }
  double rr = 0;
  std::size_t h1 = 0, h3 = 0, h10 = 0;
  for (std::int64_t r : ranks) {
    rr += 1.0 / static_cast<double>(r);
    h1 += r <= 1;
    h3 += r <= 3;
    h10 += r <= 10;
  }
  const double n = static_cast<double>(ranks.size());
  m.mrr = rr / n;
  m.hits1 = static_cast<double>(h1) / n;
  m.hits3 = static_cast<double>(h3) / n;
  m.hits10 = static_cast<double>(h10) / n;
  return m;
}

bool RankMetrics::has_nan() const {
  return std::isnan(mrr) || std::isnan(hits1) || std::isnan(hits3) || std::isnan(hits10);
}

ScoreFn make_model_scorer(Model<float>& model) {
  return [&model](std::span<const int> sources, std::span<const int> relations, Tensor<float>& out) {
    Tape<float> tape;
    tape.set_grad_enabled(false);
    Rng unused(0);
    const Var scores = model.score(tape, sources, relations, Mode::kEval, unused);
    out = tape.value(scores);
  };
}

std::size_t resolve_thread_count(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("KGE_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

EvalReport evaluate(const ScoreFn& scorer, const TripleStore& split, std::size_t relation_count,
                    const FilterIndex& filter, std::uint64_t seed, const EvalOptions& options) {
  if (split.has_reciprocals) throw ContractError("evaluate: pass the split without reciprocal triples");
  const std::size_t nq = split.size() * 2;
  struct Query {
    int source, relation, target;
  };
  std::vector<Query> queries(nq);
  for (std::size_t i = 0; i < split.size(); ++i) {
    const Triple& t = split.triples[i];
    queries[2 * i] = {t.source, t.relation, t.target};
    queries[2 * i + 1] = {t.target, inverse_relation(t.relation, relation_count), t.source};
  }
  for (const Query& q : queries) {
    if (!filter.find(q.source, q.relation)) {
      throw ContractError("evaluate: filter index has no entry for query (" + std::to_string(q.source) + ", " +
                          std::to_string(q.relation) + ")");
    }
  }

  EvalReport report;
  report.ranks.assign(nq, 0);
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
  const std::size_t nbatches = (nq + batch - 1) / batch;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  const auto worker = [&] {
    try {
      Tensor<float> scores;
      std::vector<int> sources, relations;
      for (std::size_t b = next++; b < nbatches; b = next++) {
        const std::size_t begin = b * batch, end = std::min(nq, begin + batch);
        sources.clear();
        relations.clear();
        for (std::size_t q = begin; q < end; ++q) {
          sources.push_back(queries[q].source);
          relations.push_back(queries[q].relation);
        }
        scorer(sources, relations, scores);
        if (scores.rank() != 2 || scores.rows() != end - begin) {
          throw ShapeError("evaluate: scorer returned " + shape_string(scores.shape()));
        }
        for (std::size_t q = begin; q < end; ++q) {
          const auto row = scores.row_span(q - begin);
          if (std::any_of(row.begin(), row.end(), [](float v) { return std::isnan(v); })) {
            report.ranks[q] = 0;  // poisons the metrics below
            continue;
          }
          Rng rng(derive_seed(seed, q));
          report.ranks[q] = rank_query<float>(scores.row_span(q - begin), queries[q].target,
                                              filter.find(queries[q].source, queries[q].relation), rng, options.ties);
        }
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = nbatches;
    }
  };

  const std::size_t threads = std::min(resolve_thread_count(options.threads), std::max<std::size_t>(1, nbatches));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<std::int64_t> left, right;
  left.reserve(split.size());
  right.reserve(split.size());
  for (std::size_t i = 0; i < split.size(); ++i) {
    right.push_back(report.ranks[2 * i]);
    left.push_back(report.ranks[2 * i + 1]);
  }
  report.overall = RankMetrics::from_ranks(report.ranks);
  report.left = RankMetrics::from_ranks(left);
  report.right = RankMetrics::from_ranks(right);
  return report;
}

void write_report_csv(std::ostream& os, const EvalReport& report) {
  os << "direction,count,mrr,hits1,hits3,hits10\n";
  const auto row = [&os](const char* name, const RankMetrics& m) {
    os << name << ',' << m.count << ',' << std::setprecision(6) << m.mrr << ',' << m.hits1 << ',' << m.hits3 << ','
       << m.hits10 << '\n';
  };
  row("both", report.overall);
  row("left", report.left);
  row("right", report.right);
}

std::string format_report(const EvalReport& report) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "direction" << std::right << std::setw(10) << "count" << std::setw(10) << "MRR"
     << std::setw(10) << "Hits@1" << std::setw(10) << "Hits@3" << std::setw(10) << "Hits@10" << '\n';
  const auto row = [&os](const char* name, const RankMetrics& m) {
    os << std::left << std::setw(10) << name << std::right << std::setw(10) << m.count << std::fixed
       << std::setprecision(4) << std::setw(10) << m.mrr << std::setw(10) << m.hits1 << std::setw(10) << m.hits3
       << std::setw(10) << m.hits10 << '\n';
  };
  row("both", report.overall);
  row("left", report.left);
  row("right", report.right);
  return os.str();
}

}  // namespace kge

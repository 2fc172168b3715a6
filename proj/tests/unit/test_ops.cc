#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "kge/error.h"
#include "kge/ops.h"
#include "support/gradcheck.h"

namespace kge {
namespace {

using testing::gradcheck;
using testing::probe_weights;
using testing::ScalarFn;

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// sum(w ⊙ f(x)) with fixed probe weights w.
Var probe(Tape<double>& tape, Var y, unsigned salt = 0) {
  const Var w = tape.constant(probe_weights(tape.shape(y), salt));
  const Shape s = tape.shape(y);
  const Var yf = reshape(tape, y, {1, shape_numel(s)});
  const Var wf = reshape(tape, w, {1, shape_numel(s)});
  return matmul(tape, yf, wf, true);
}

constexpr double kTol = 1e-6;

TEST(Matmul, Examples) {
  Tape<double> tape;
  const Var a = tape.constant(Tensor<double>::matrix({{1, 2}, {3, 4}}));
  const Var b = tape.constant(Tensor<double>::matrix({{1}, {1}}));
  EXPECT_EQ(tape.value(matmul(tape, a, b)), Tensor<double>::matrix({{3}, {7}}));
  const Var eye = tape.constant(Tensor<double>::matrix({{1, 0}, {0, 1}}));
  EXPECT_EQ(tape.value(matmul(tape, eye, a)), tape.value(a));
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  Tape<double> tape;
  const Var a = tape.constant(Tensor<double>({2, 3}));
  const Var b = tape.constant(Tensor<double>({2, 3}));
  try {
    matmul(tape, a, b);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos) << e.what();
  }
}

TEST(Matmul, Gradcheck) {
  for (bool tb : {false, true}) {
    const ScalarFn f = [tb](Tape<double>& t, const std::vector<Var>& v) { return probe(t, matmul(t, v[0], v[1], tb)); };
    auto r = gradcheck(f, {random_tensor({3, 4}, 1), random_tensor(tb ? Shape{5, 4} : Shape{4, 5}, 2)});
    EXPECT_LT(r.max_rel_error, kTol) << "transpose_b=" << tb;
  }
}

TEST(Elementwise, Values) {
  Tape<double> tape;
  const Var x = tape.constant(Tensor<double>::row({-1, 0, 2}));
  EXPECT_EQ(tape.value(relu(tape, x)), Tensor<double>::row({0, 0, 2}));
  EXPECT_EQ(tape.value(sigmoid(tape, x))[1], 0.5);
  EXPECT_EQ(tape.value(scale(tape, x, 3.0)), Tensor<double>::row({-3, 0, 6}));
}

TEST(Elementwise, Gradchecks) {
  const auto x = random_tensor({3, 4}, 3);
  const auto y = random_tensor({3, 4}, 4);
  const auto b = random_tensor({1, 4}, 5);
  EXPECT_LT(gradcheck([](Tape<double>& t, const std::vector<Var>& v) { return probe(t, add(t, v[0], v[1])); }, {x, y})
                .max_rel_error,
            kTol);
  EXPECT_LT(
      gradcheck([](Tape<double>& t, const std::vector<Var>& v) { return probe(t, add_bias(t, v[0], v[1])); }, {x, b})
          .max_rel_error,
      kTol);
  EXPECT_LT(gradcheck([](Tape<double>& t, const std::vector<Var>& v) { return probe(t, scale(t, v[0], -2.5)); }, {x})
                .max_rel_error,
            kTol);
  EXPECT_LT(gradcheck([](Tape<double>& t, const std::vector<Var>& v) { return probe(t, relu(t, v[0])); }, {x})
                .max_rel_error,
            kTol);
  EXPECT_LT(gradcheck([](Tape<double>& t, const std::vector<Var>& v) { return probe(t, sigmoid(t, v[0])); }, {x})
                .max_rel_error,
            kTol);
}

TEST(Softmax, ExamplesAndStochasticRows) {
  Tape<double> tape;
  const Var x = tape.constant(Tensor<double>::matrix({{0, 0}, {1000, 0}}));
  const auto& p = tape.value(softmax_rows(tape, x));
  EXPECT_DOUBLE_EQ(p(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(p(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(p(1, 0), 1.0);
  EXPECT_LT(p(1, 1), 1e-300);
  const Var r = tape.constant(random_tensor({6, 5}, 9, -5, 5));
  const auto& q = tape.value(softmax_rows(tape, r, 0.3));
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0;
    for (double v : q.row_span(i)) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Softmax, Gradcheck) {
  auto r = gradcheck([](Tape<double>& t, const std::vector<Var>& v) { return probe(t, softmax_rows(t, v[0], 0.7)); },
                     {random_tensor({4, 3}, 11, -2, 2)});
  EXPECT_LT(r.max_rel_error, kTol);
}

TEST(Dropout, IdentityCases) {
  Tape<double> tape;
  Rng rng(1);
  const Var x = tape.constant(random_tensor({3, 3}, 12));
  EXPECT_EQ(tape.value(dropout(tape, x, 0.0, Mode::kTrain, rng)), tape.value(x));
  EXPECT_EQ(tape.value(dropout(tape, x, 0.7, Mode::kEval, rng)), tape.value(x));
  EXPECT_THROW(dropout(tape, x, 1.0, Mode::kTrain, rng), ParameterError);
  EXPECT_THROW(dropout(tape, x, -0.1, Mode::kTrain, rng), ParameterError);
}

TEST(Dropout, PreservesExpectation) {
  Tape<float> tape;
  tape.set_grad_enabled(false);
  Rng rng(2024);
  const Var x = tape.constant(Tensor<float>({1000, 1000}, 1.0f));
  const auto& y = tape.value(dropout(tape, x, 0.5, Mode::kTrain, rng));
  const double mean = std::accumulate(y.values().begin(), y.values().end(), 0.0) / static_cast<double>(y.size());
  EXPECT_NEAR(mean, 1.0, 0.01);
  std::size_t zeros = 0;
  for (float v : y.values()) {
    if (v == 0.0f) ++zeros;
    else EXPECT_EQ(v, 2.0f);
  }
  EXPECT_NEAR(static_cast<double>(zeros) / 1e6, 0.5, 0.01);
}

TEST(Dropout, Gradcheck) {
  auto r = gradcheck(
      [](Tape<double>& t, const std::vector<Var>& v) {
        Rng rng(5);
        return probe(t, dropout(t, v[0], 0.3, Mode::kTrain, rng));
      },
      {random_tensor({4, 5}, 13)});
  EXPECT_LT(r.max_rel_error, kTol);
}

TEST(BatchNorm, TrainNormalizesAndUpdatesStats) {
  Tape<double> tape;
  BatchNormStats<double> stats(3);
  const Var x = tape.constant(random_tensor({8, 3}, 14, -3, 5));
  const Var g = tape.constant(Tensor<double>({1, 3}, 1.0));
  const Var b = tape.constant(Tensor<double>({1, 3}, 0.0));
  const auto& y = tape.value(batch_norm(tape, x, g, b, stats, Mode::kTrain));
  const auto& xv = tape.value(x);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0, var = 0, xmean = 0, xvar = 0;
    for (std::size_t r = 0; r < 8; ++r) mean += y(r, c) / 8, xmean += xv(r, c) / 8;
    for (std::size_t r = 0; r < 8; ++r) {
      var += (y(r, c) - mean) * (y(r, c) - mean) / 8;
      xvar += (xv(r, c) - xmean) * (xv(r, c) - xmean) / 7;
    }
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(var, 1.0, 1e-4);
    EXPECT_NEAR(stats.running_mean[c], 0.1 * xmean, 1e-12);
    EXPECT_NEAR(stats.running_var[c], 0.9 + 0.1 * xvar, 1e-12);
  }
}

TEST(BatchNorm, ConstantColumnGivesBeta) {
  Tape<double> tape;
  BatchNormStats<double> stats(2);
  const Var x = tape.constant(Tensor<double>::matrix({{3, 1}, {3, 2}, {3, 4}}));
  const Var g = tape.constant(Tensor<double>::row({2, 1}));
  const Var b = tape.constant(Tensor<double>::row({0.25, 0}));
  const auto& y = tape.value(batch_norm(tape, x, g, b, stats, Mode::kTrain));
  for (std::size_t r = 0; r < 3; ++r) EXPECT_NEAR(y(r, 0), 0.25, 1e-12);
}

TEST(BatchNorm, EvalUsesRunningStatsAndSingleRowTrainThrows) {
  Tape<double> tape;
  BatchNormStats<double> stats(1);
  stats.running_mean[0] = 2.0;
  stats.running_var[0] = 4.0;
  const Var x = tape.constant(Tensor<double>::matrix({{6}}));
  const Var g = tape.constant(Tensor<double>::row({1}));
  const Var b = tape.constant(Tensor<double>::row({0}));
  EXPECT_NEAR(tape.value(batch_norm(tape, x, g, b, stats, Mode::kEval))[0], 4.0 / std::sqrt(4.0 + 1e-5), 1e-12);
  EXPECT_THROW(batch_norm(tape, x, g, b, stats, Mode::kTrain), ContractError);
}

TEST(BatchNorm, Gradcheck) {
  for (Mode mode : {Mode::kTrain, Mode::kEval}) {
    auto r = gradcheck(
        [mode](Tape<double>& t, const std::vector<Var>& v) {
          BatchNormStats<double> stats(3);
          stats.running_mean = Tensor<double>::row({0.1, -0.2, 0.3});
          stats.running_var = Tensor<double>::row({1.5, 0.5, 2.0});
          return probe(t, batch_norm(t, v[0], v[1], v[2], stats, mode));
        },
        {random_tensor({5, 3}, 15, -2, 2), random_tensor({1, 3}, 16, 0.5, 1.5), random_tensor({1, 3}, 17)});
    EXPECT_LT(r.max_rel_error, 1e-5) << "input " << r.worst_input;
  }
}

TEST(LayerNorm, Examples) {
  Tape<double> tape;
  const double s = 1.0 / std::sqrt(1.0 + 1e-5);
  // Zero mean, unit (biased) variance row.
  const Var x = tape.constant(Tensor<double>::row({-1, 1}));
  const Var g = tape.constant(Tensor<double>::row({1, 1}));
  const Var b = tape.constant(Tensor<double>::row({0, 0}));
  const auto& y = tape.value(layer_norm(tape, x, g, b));
  EXPECT_NEAR(y[0], -s, 1e-6);
  EXPECT_NEAR(y[1], s, 1e-6);
  const Var c = tape.constant(Tensor<double>::row({5, 5}));
  const Var beta = tape.constant(Tensor<double>::row({0.5, -1}));
  const auto& z = tape.value(layer_norm(tape, c, g, beta));
  EXPECT_NEAR(z[0], 0.5, 1e-12);
  EXPECT_NEAR(z[1], -1.0, 1e-12);
}

TEST(LayerNorm, Gradcheck) {
  auto r = gradcheck(
      [](Tape<double>& t, const std::vector<Var>& v) { return probe(t, layer_norm(t, v[0], v[1], v[2])); },
      {random_tensor({3, 6}, 18, -2, 2), random_tensor({1, 6}, 19, 0.5, 1.5), random_tensor({1, 6}, 20)});
  EXPECT_LT(r.max_rel_error, 1e-5);
}

TEST(Structural, ConcatSplitRoundTrip) {
  Tape<double> tape;
  const auto a = random_tensor({3, 4}, 21);
  const auto b = random_tensor({3, 4}, 22);
  const Var c = concat_rows(tape, tape.constant(a), tape.constant(b));
  EXPECT_EQ(tape.shape(c), (Shape{6, 4}));
  EXPECT_EQ(tape.value(c)(1, 2), b(0, 2));
  EXPECT_EQ(tape.value(split_rows(tape, c, 0)), a);
  EXPECT_EQ(tape.value(split_rows(tape, c, 1)), b);
}

TEST(Structural, Gradchecks) {
  const auto a = random_tensor({3, 4}, 23);
  const auto b = random_tensor({3, 4}, 24);
  EXPECT_LT(gradcheck(
                [](Tape<double>& t, const std::vector<Var>& v) {
                  const Var c = concat_rows(t, v[0], v[1]);
                  return probe(t, add(t, split_rows(t, c, 1), scale(t, split_rows(t, c, 0), 0.5)));
                },
                {a, b})
                .max_rel_error,
            kTol);
  const std::vector<int> ids{2, 0, 2, 1};
  EXPECT_LT(gradcheck([&](Tape<double>& t, const std::vector<Var>& v) { return probe(t, gather_rows(t, v[0], ids)); },
                      {a})
                .max_rel_error,
            kTol);
  EXPECT_LT(gradcheck([](Tape<double>& t, const std::vector<Var>& v) { return probe(t, reshape(t, v[0], {2, 6})); },
                      {a})
                .max_rel_error,
            kTol);
  EXPECT_LT(gradcheck([](Tape<double>& t, const std::vector<Var>& v) { return sum(t, v[0]); }, {a}).max_rel_error, kTol);
}

TEST(GatherRows, ScatterAddsRepeatedIds) {
  Tape<double> tape;
  const Var table = tape.variable(Tensor<double>({3, 2}, 0.0));
  const std::vector<int> ids{1, 1, 2};
  tape.backward(sum(tape, gather_rows(tape, table, ids)));
  EXPECT_EQ(tape.grad(table), Tensor<double>::matrix({{0, 0}, {2, 2}, {1, 1}}));
}

TEST(PairAttention, LogitsAndMixMatchLoops) {
  const std::size_t batch = 2, heads = 3, width = 2;
  const auto q = random_tensor({2 * batch, heads * width}, 25);
  const auto k = random_tensor({2 * batch, heads * width}, 26);
  Tape<double> tape;
  const auto& logits = tape.value(pair_attention_logits(tape, tape.constant(q), tape.constant(k), heads));
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < heads; ++i)
      for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t c = 0; c < 2; ++c) {
          double dot = 0;
          for (std::size_t w = 0; w < width; ++w) dot += q(2 * b + a, i * width + w) * k(2 * b + c, i * width + w);
          EXPECT_NEAR(logits((b * heads + i) * 2 + a, c), dot, 1e-12);
        }
  const auto probs = random_tensor({batch * heads * 2, 2}, 27, 0, 1);
  const auto& mixed = tape.value(pair_attention_mix(tape, tape.constant(probs), tape.constant(k), heads));
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < heads; ++i)
      for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t w = 0; w < width; ++w) {
          const double expect = probs((b * heads + i) * 2 + a, 0) * k(2 * b, i * width + w) +
                                probs((b * heads + i) * 2 + a, 1) * k(2 * b + 1, i * width + w);
          EXPECT_NEAR(mixed(2 * b + a, i * width + w), expect, 1e-12);
        }
}

TEST(PairAttention, Gradchecks) {
  const auto q = random_tensor({4, 6}, 28);
  const auto k = random_tensor({4, 6}, 29);
  const auto p = random_tensor({12, 2}, 30, 0, 1);
  EXPECT_LT(gradcheck([](Tape<double>& t, const std::vector<Var>& v) {
              return probe(t, pair_attention_logits(t, v[0], v[1], 3));
            },
                      {q, k})
                .max_rel_error,
            kTol);
  EXPECT_LT(gradcheck([](Tape<double>& t, const std::vector<Var>& v) {
              return probe(t, pair_attention_mix(t, v[0], v[1], 3));
            },
                      {p, k})
                .max_rel_error,
            kTol);
}

TEST(ContractMode2, MatchesLoopAndGradcheck) {
  const std::size_t batch = 2, d = 3;
  const auto m = random_tensor({batch, d * d}, 31);
  const auto r = random_tensor({batch, d}, 32);
  Tape<double> tape;
  const auto& out = tape.value(contract_mode2(tape, tape.constant(m), tape.constant(r)));
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t k = 0; k < d; ++k) {
      double s = 0;
      for (std::size_t j = 0; j < d; ++j) s += m(b, j * d + k) * r(b, j);
      EXPECT_NEAR(out(b, k), s, 1e-12);
    }
  EXPECT_LT(gradcheck([](Tape<double>& t, const std::vector<Var>& v) { return probe(t, contract_mode2(t, v[0], v[1])); },
                      {m, r})
                .max_rel_error,
            kTol);
}

// Direct per-term oracle of the smoothed BCE, averaged over candidates and rows.
double bce_oracle(const Tensor<double>& s, const std::vector<std::vector<int>>& positives, double ls) {
  const std::size_t n = s.cols();
  double total = 0;
  for (std::size_t r = 0; r < s.rows(); ++r) {
    double row = 0;
    for (std::size_t c = 0; c < n; ++c) {
      double y = std::find(positives[r].begin(), positives[r].end(), static_cast<int>(c)) != positives[r].end() ? 1 : 0;
      y = y * (1 - ls) + ls / static_cast<double>(n);
      const double p = 1.0 / (1.0 + std::exp(-s(r, c)));
      row -= y * std::log(p) + (1 - y) * std::log(1 - p);
    }
    total += row / static_cast<double>(n);
  }
  return total / static_cast<double>(s.rows());
}

TEST(Bce, ZeroScoresGiveLn2) {
  for (std::size_t n : {2u, 7u, 100u}) {
    Tape<double> tape;
    const Var s = tape.constant(Tensor<double>({3, n}, 0.0));
    const std::vector<int> targets{0, 1, 1};
    EXPECT_NEAR(tape.value(bce_with_logits(tape, s, std::span<const int>(targets), 0.0))[0], std::log(2.0), 1e-12);
    EXPECT_NEAR(tape.value(bce_with_logits(tape, s, std::span<const int>(targets), 0.1))[0], std::log(2.0), 1e-12);
  }
}

TEST(Bce, SaturationGoesToZero) {
  Tape<double> tape;
  const Var s = tape.constant(Tensor<double>::matrix({{-800, 800, -800}}));
  const std::vector<int> targets{1};
  const double loss = tape.value(bce_with_logits(tape, s, std::span<const int>(targets), 0.0))[0];
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_LT(loss, 1e-12);
}

TEST(Bce, MatchesTermwiseOracle) {
  const auto s = random_tensor({4, 6}, 33, -3, 3);
  const std::vector<int> targets{0, 5, 2, 2};
  Tape<double> tape;
  const Var v = tape.constant(s);
  EXPECT_NEAR(tape.value(bce_with_logits(tape, v, std::span<const int>(targets), 0.1))[0],
              bce_oracle(s, {{0}, {5}, {2}, {2}}, 0.1), 1e-12);
  const std::vector<std::vector<int>> multi{{0, 3}, {5}, {1, 2, 4}, {2}};
  EXPECT_NEAR(tape.value(bce_with_logits(tape, v, multi, 0.1))[0], bce_oracle(s, multi, 0.1), 1e-12);
}

TEST(Bce, Gradchecks) {
  const auto s = random_tensor({3, 5}, 34, -2, 2);
  const std::vector<int> targets{4, 0, 2};
  EXPECT_LT(gradcheck([&](Tape<double>& t, const std::vector<Var>& v) {
              return bce_with_logits(t, v[0], std::span<const int>(targets), 0.1);
            },
                      {s})
                .max_rel_error,
            kTol);
  const std::vector<std::vector<int>> multi{{0, 4}, {1}, {2, 3}};
  EXPECT_LT(
      gradcheck([&](Tape<double>& t, const std::vector<Var>& v) { return bce_with_logits(t, v[0], multi, 0.2); }, {s})
          .max_rel_error,
      kTol);
}

TEST(Composition, MatmulSoftmaxBceGradcheck) {
  const std::vector<int> targets{0, 2, 1};
  auto r = gradcheck(
      [&](Tape<double>& t, const std::vector<Var>& v) {
        const Var p = softmax_rows(t, matmul(t, v[0], v[1]));
        return bce_with_logits(t, p, std::span<const int>(targets), 0.0);
      },
      {random_tensor({3, 3}, 35), random_tensor({3, 3}, 36)});
  EXPECT_LT(r.max_rel_error, 1e-5);
}

}  // namespace
}  // namespace kge

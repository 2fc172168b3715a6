#include "kge/ops.h"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "kge/error.h"

namespace kge {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
ConstMapMat<T> as_matrix(const Tensor<T>& t) {
  return ConstMapMat<T>(t.data(), t.rows(), t.cols());
}
template <typename T>
MapMat<T> as_matrix(Tensor<T>& t) {
  return MapMat<T>(t.data(), t.rows(), t.cols());
}

void require_rank2(const Shape& s, const char* op) {
  if (s.size() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(s));
}

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shapes " + shape_string(a) + " and " + shape_string(b) + " differ");
}

template <typename T>
Var emit(Tape<T>& tape, Tensor<T> value, std::initializer_list<Var> inputs, typename Tape<T>::BackwardFn fn) {
#ifndef NDEBUG
  value.check_finite("op output");
#endif
  return tape.record(std::move(value), inputs, std::move(fn));
}

template <typename T>
using ConstArr = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;
template <typename T>
using Arr = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;

template <typename T>
T stable_sigmoid(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b, bool transpose_b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  require_rank2(av.shape(), "matmul");
  require_rank2(bv.shape(), "matmul");
  const std::size_t inner_b = transpose_b ? bv.cols() : bv.rows();
  if (av.cols() != inner_b) {
    throw ShapeError("matmul: inner dimensions of " + shape_string(av.shape()) + " and " +
                     shape_string(bv.shape()) + (transpose_b ? "ᵀ" : "") + " disagree");
  }
  const std::size_t n = transpose_b ? bv.rows() : bv.cols();
  Tensor<T> out({av.rows(), n});
  if (transpose_b) {
    as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv).transpose();
  } else {
    as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv);
  }
  return emit(tape, std::move(out), {a, b}, [a, b, transpose_b](Tape<T>& t, const Tensor<T>& g) {
    const auto gm = as_matrix(g);
    if (Tensor<T>* ga = t.grad_sink(a)) {
      const auto bm = as_matrix(t.value(b));
      if (transpose_b) {
        as_matrix(*ga).noalias() += gm * bm;
      } else {
        as_matrix(*ga).noalias() += gm * bm.transpose();
      }
    }
    if (Tensor<T>* gb = t.grad_sink(b)) {
      const auto am = as_matrix(t.value(a));
      if (transpose_b) {
        as_matrix(*gb).noalias() += gm.transpose() * am;
      } else {
        as_matrix(*gb).noalias() += am.transpose() * gm;
      }
    }
  });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  require_same(av.shape(), bv.shape(), "add");
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return emit(tape, std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    for (Var v : {a, b}) {
      if (Tensor<T>* gv = t.grad_sink(v)) {
        for (std::size_t i = 0; i < g.size(); ++i) (*gv)[i] += g[i];
      }
    }
  });
}

template <typename T>
Var add_bias(Tape<T>& tape, Var x, Var bias) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& bv = tape.value(bias);
  require_rank2(xv.shape(), "add_bias");
  if (bv.size() != xv.cols()) {
    throw ShapeError("add_bias: bias " + shape_string(bv.shape()) + " does not fit " + shape_string(xv.shape()));
  }
  Tensor<T> out = xv;
  const std::size_t m = xv.rows(), n = xv.cols();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out(r, c) += bv[c];
  return emit(tape, std::move(out), {x, bias}, [x, bias, m, n](Tape<T>& t, const Tensor<T>& g) {
    if (Tensor<T>* gx = t.grad_sink(x)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
    }
    if (Tensor<T>* gb = t.grad_sink(bias)) {
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) (*gb)[c] += g(r, c);
    }
  });
}

template <typename T>
Var scale(Tape<T>& tape, Var x, T factor) {
  Tensor<T> out = tape.value(x);
  for (auto& v : out.values()) v *= factor;
  return emit(tape, std::move(out), {x}, [x, factor](Tape<T>& t, const Tensor<T>& g) {
    if (Tensor<T>* gx = t.grad_sink(x)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += factor * g[i];
    }
  });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  Tensor<T> out = tape.value(x);
  for (auto& v : out.values()) v = v > T(0) ? v : T(0);
  return emit(tape, std::move(out), {x}, [x](Tape<T>& t, const Tensor<T>& g) {
    if (Tensor<T>* gx = t.grad_sink(x)) {
      const Tensor<T>& xv = t.value(x);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (xv[i] > T(0)) (*gx)[i] += g[i];
      }
    }
  });
}

template <typename T>
Var sigmoid(Tape<T>& tape, Var x) {
  Tensor<T> out = tape.value(x);
  for (auto& v : out.values()) v = stable_sigmoid(v);
  Tensor<T> saved = out;
  return emit(tape, std::move(out), {x}, [x, y = std::move(saved)](Tape<T>& t, const Tensor<T>& g) {
    if (Tensor<T>* gx = t.grad_sink(x)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * y[i] * (T(1) - y[i]);
    }
  });
}

template <typename T>
Var softmax_rows(Tape<T>& tape, Var x, T scale) {
  const Tensor<T>& xv = tape.value(x);
  require_rank2(xv.shape(), "softmax_rows");
  const std::size_t m = xv.rows(), n = xv.cols();
  if (n == 0) throw ShapeError("softmax_rows: empty rows");
  Tensor<T> out({m, n});
  for (std::size_t r = 0; r < m; ++r) {
    T mx = scale * xv(r, 0);
    for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, scale * xv(r, c));
    T total = 0;
    for (std::size_t c = 0; c < n; ++c) {
      out(r, c) = std::exp(scale * xv(r, c) - mx);
      total += out(r, c);
    }
    for (std::size_t c = 0; c < n; ++c) out(r, c) /= total;
  }
  Tensor<T> saved = out;
  return emit(tape, std::move(out), {x}, [x, scale, m, n, y = std::move(saved)](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>* gx = t.grad_sink(x);
    if (!gx) return;
    for (std::size_t r = 0; r < m; ++r) {
      T dot = 0;
      for (std::size_t c = 0; c < n; ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < n; ++c) (*gx)(r, c) += scale * y(r, c) * (g(r, c) - dot);
    }
  });
}

template <typename T>
Var dropout(Tape<T>& tape, Var x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ParameterError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::kEval || rate == 0.0) return x;
  const Tensor<T>& xv = tape.value(x);
  const T keep_scale = T(1) / T(1.0 - rate);
  Tensor<T> mask(xv.shape());
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    mask[i] = rng.uniform() >= rate ? keep_scale : T(0);
    out[i] = xv[i] * mask[i];
  }
  return emit(tape, std::move(out), {x}, [x, mask = std::move(mask)](Tape<T>& t, const Tensor<T>& g) {
    if (Tensor<T>* gx = t.grad_sink(x)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * mask[i];
    }
  });
}

template <typename T>
Var batch_norm(Tape<T>& tape, Var x, Var gamma, Var beta, BatchNormStats<T>& stats, Mode mode) {
  const Tensor<T>& xv = tape.value(x);
  require_rank2(xv.shape(), "batch_norm");
  const std::size_t m = xv.rows(), n = xv.cols();
  const Tensor<T>& gv = tape.value(gamma);
  const Tensor<T>& bv = tape.value(beta);
  if (gv.size() != n || bv.size() != n || stats.running_mean.size() != n) {
    throw ShapeError("batch_norm: parameters do not fit input " + shape_string(xv.shape()));
  }
  Tensor<T> xhat({m, n});
  Tensor<T> inv_std({1, n});
  if (mode == Mode::kTrain) {
    if (m < 2) throw ContractError("batch_norm in train mode needs at least 2 rows, got " + std::to_string(m));
    for (std::size_t c = 0; c < n; ++c) {
      T mean = 0;
      for (std::size_t r = 0; r < m; ++r) mean += xv(r, c);
      mean /= T(m);
      T var = 0;
      for (std::size_t r = 0; r < m; ++r) {
        const T d = xv(r, c) - mean;
        var += d * d;
      }
      var /= T(m);
      inv_std[c] = T(1) / std::sqrt(var + stats.eps);
      for (std::size_t r = 0; r < m; ++r) xhat(r, c) = (xv(r, c) - mean) * inv_std[c];
      const T unbiased = var * T(m) / T(m - 1);
      stats.running_mean[c] = (T(1) - stats.momentum) * stats.running_mean[c] + stats.momentum * mean;
      stats.running_var[c] = (T(1) - stats.momentum) * stats.running_var[c] + stats.momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < n; ++c) {
      inv_std[c] = T(1) / std::sqrt(stats.running_var[c] + stats.eps);
      for (std::size_t r = 0; r < m; ++r) xhat(r, c) = (xv(r, c) - stats.running_mean[c]) * inv_std[c];
    }
  }
  Tensor<T> out({m, n});
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out(r, c) = gv[c] * xhat(r, c) + bv[c];

  const bool train = mode == Mode::kTrain;
  return emit(tape, std::move(out), {x, gamma, beta},
              [x, gamma, beta, m, n, train, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                  Tape<T>& t, const Tensor<T>& g) {
                const Tensor<T>& gv = t.value(gamma);
                if (Tensor<T>* gg = t.grad_sink(gamma)) {
                  for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t c = 0; c < n; ++c) (*gg)[c] += g(r, c) * xhat(r, c);
                }
                if (Tensor<T>* gb = t.grad_sink(beta)) {
                  for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t c = 0; c < n; ++c) (*gb)[c] += g(r, c);
                }
                Tensor<T>* gx = t.grad_sink(x);
                if (!gx) return;
                for (std::size_t c = 0; c < n; ++c) {
                  if (!train) {
                    for (std::size_t r = 0; r < m; ++r) (*gx)(r, c) += g(r, c) * gv[c] * inv_std[c];
                    continue;
                  }
                  T sum_g = 0, sum_gx = 0;
                  for (std::size_t r = 0; r < m; ++r) {
                    sum_g += g(r, c);
                    sum_gx += g(r, c) * xhat(r, c);
                  }
                  const T k = gv[c] * inv_std[c] / T(m);
                  for (std::size_t r = 0; r < m; ++r) {
                    (*gx)(r, c) += k * (T(m) * g(r, c) - sum_g - xhat(r, c) * sum_gx);
                  }
                }
              });
}

template <typename T>
Var layer_norm(Tape<T>& tape, Var x, Var gamma, Var beta, T eps) {
  const Tensor<T>& xv = tape.value(x);
  require_rank2(xv.shape(), "layer_norm");
  const std::size_t m = xv.rows(), n = xv.cols();
  const Tensor<T>& gv = tape.value(gamma);
  const Tensor<T>& bv = tape.value(beta);
  if (gv.size() != n || bv.size() != n) {
    throw ShapeError("layer_norm: parameters do not fit input " + shape_string(xv.shape()));
  }
  Tensor<T> xhat({m, n});
  Tensor<T> inv_std({m, 1});
  Tensor<T> out({m, n});
  for (std::size_t r = 0; r < m; ++r) {
    T mean = 0;
    for (std::size_t c = 0; c < n; ++c) mean += xv(r, c);
    mean /= T(n);
    T var = 0;
    for (std::size_t c = 0; c < n; ++c) {
      const T d = xv(r, c) - mean;
      var += d * d;
    }
    var /= T(n);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat(r, c) = (xv(r, c) - mean) * inv_std[r];
      out(r, c) = gv[c] * xhat(r, c) + bv[c];
    }
  }
  return emit(tape, std::move(out), {x, gamma, beta},
              [x, gamma, beta, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                  Tape<T>& t, const Tensor<T>& g) {
                const Tensor<T>& gv = t.value(gamma);
                if (Tensor<T>* gg = t.grad_sink(gamma)) {
                  for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t c = 0; c < n; ++c) (*gg)[c] += g(r, c) * xhat(r, c);
                }
                if (Tensor<T>* gb = t.grad_sink(beta)) {
                  for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t c = 0; c < n; ++c) (*gb)[c] += g(r, c);
                }
                Tensor<T>* gx = t.grad_sink(x);
                if (!gx) return;
                for (std::size_t r = 0; r < m; ++r) {
                  T mean_dy = 0, mean_dy_xhat = 0;
                  for (std::size_t c = 0; c < n; ++c) {
                    const T dy = g(r, c) * gv[c];
                    mean_dy += dy;
                    mean_dy_xhat += dy * xhat(r, c);
                  }
                  mean_dy /= T(n);
                  mean_dy_xhat /= T(n);
                  for (std::size_t c = 0; c < n; ++c) {
                    const T dy = g(r, c) * gv[c];
                    (*gx)(r, c) += inv_std[r] * (dy - mean_dy - xhat(r, c) * mean_dy_xhat);
                  }
                }
              });
}

template <typename T>
Var concat_rows(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  require_rank2(av.shape(), "concat_rows");
  require_same(av.shape(), bv.shape(), "concat_rows");
  const std::size_t m = av.rows(), n = av.cols();
  Tensor<T> out({2 * m, n});
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(av.data() + r * n, n, out.data() + (2 * r) * n);
    std::copy_n(bv.data() + r * n, n, out.data() + (2 * r + 1) * n);
  }
  return emit(tape, std::move(out), {a, b}, [a, b, m, n](Tape<T>& t, const Tensor<T>& g) {
    for (std::size_t part = 0; part < 2; ++part) {
      Tensor<T>* gv = t.grad_sink(part == 0 ? a : b);
      if (!gv) continue;
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) (*gv)(r, c) += g(2 * r + part, c);
    }
  });
}

template <typename T>
Var split_rows(Tape<T>& tape, Var x, std::size_t part) {
  const Tensor<T>& xv = tape.value(x);
  require_rank2(xv.shape(), "split_rows");
  if (xv.rows() % 2 != 0 || part > 1) {
    throw ShapeError("split_rows: cannot take part " + std::to_string(part) + " of " + shape_string(xv.shape()));
  }
  const std::size_t m = xv.rows() / 2, n = xv.cols();
  Tensor<T> out({m, n});
  for (std::size_t r = 0; r < m; ++r) std::copy_n(xv.data() + (2 * r + part) * n, n, out.data() + r * n);
  return emit(tape, std::move(out), {x}, [x, part, m, n](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>* gx = t.grad_sink(x);
    if (!gx) return;
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) (*gx)(2 * r + part, c) += g(r, c);
  });
}

template <typename T>
Var gather_rows(Tape<T>& tape, Var table, std::span<const int> ids) {
  const Tensor<T>& tv = tape.value(table);
  require_rank2(tv.shape(), "gather_rows");
  const std::size_t n = tv.cols();
  Tensor<T> out({ids.size(), n});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= tv.rows()) {
      throw ContractError("gather_rows: id " + std::to_string(ids[r]) + " outside table of " +
                          std::to_string(tv.rows()) + " rows");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[r]) * n, n, out.data() + r * n);
  }
  std::vector<int> saved(ids.begin(), ids.end());
  return emit(tape, std::move(out), {table}, [table, n, ids = std::move(saved)](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>* gt = t.grad_sink(table);
    if (!gt) return;
    for (std::size_t r = 0; r < ids.size(); ++r) {
      T* dst = gt->data() + static_cast<std::size_t>(ids[r]) * n;
      const T* src = g.data() + r * n;
      for (std::size_t c = 0; c < n; ++c) dst[c] += src[c];
    }
  });
}

template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape shape) {
  Tensor<T> out = tape.value(x);
  out.reshape(std::move(shape));
  return emit(tape, std::move(out), {x}, [x](Tape<T>& t, const Tensor<T>& g) {
    if (Tensor<T>* gx = t.grad_sink(x)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
    }
  });
}

template <typename T>
Var sum(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  T total = 0;
  for (T v : xv.values()) total += v;
  return emit(tape, Tensor<T>({1, 1}, total), {x}, [x](Tape<T>& t, const Tensor<T>& g) {
    if (Tensor<T>* gx = t.grad_sink(x)) {
      for (auto& v : gx->values()) v += g[0];
    }
  });
}

template <typename T>
Var pair_attention_logits(Tape<T>& tape, Var q, Var k, std::size_t heads) {
  const Tensor<T>& qv = tape.value(q);
  const Tensor<T>& kv = tape.value(k);
  require_rank2(qv.shape(), "pair_attention_logits");
  require_same(qv.shape(), kv.shape(), "pair_attention_logits");
  if (heads == 0 || qv.cols() % heads != 0 || qv.rows() % 2 != 0) {
    throw ShapeError("pair_attention_logits: " + shape_string(qv.shape()) + " is not pairs of " +
                     std::to_string(heads) + " heads");
  }
  const std::size_t batch = qv.rows() / 2, width = qv.cols() / heads, cols = qv.cols();
  Tensor<T> out({batch * heads * 2, 2});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t c = 0; c < 2; ++c) {
          const T* qa = qv.data() + (2 * b + a) * cols + h * width;
          const T* kc = kv.data() + (2 * b + c) * cols + h * width;
          T dot = 0;
          for (std::size_t x = 0; x < width; ++x) dot += qa[x] * kc[x];
          out((b * heads + h) * 2 + a, c) = dot;
        }
  return emit(tape, std::move(out), {q, k}, [q, k, batch, heads, width, cols](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>* gq = t.grad_sink(q);
    Tensor<T>* gk = t.grad_sink(k);
    const Tensor<T>& qv = t.value(q);
    const Tensor<T>& kv = t.value(k);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t a = 0; a < 2; ++a)
          for (std::size_t c = 0; c < 2; ++c) {
            const T w = g((b * heads + h) * 2 + a, c);
            const std::size_t qo = (2 * b + a) * cols + h * width;
            const std::size_t ko = (2 * b + c) * cols + h * width;
            if (gq) {
              for (std::size_t x = 0; x < width; ++x) (*gq)[qo + x] += w * kv[ko + x];
            }
            if (gk) {
              for (std::size_t x = 0; x < width; ++x) (*gk)[ko + x] += w * qv[qo + x];
            }
          }
  });
}

template <typename T>
Var pair_attention_mix(Tape<T>& tape, Var probs, Var v, std::size_t heads) {
  const Tensor<T>& pv = tape.value(probs);
  const Tensor<T>& vv = tape.value(v);
  require_rank2(vv.shape(), "pair_attention_mix");
  if (heads == 0 || vv.cols() % heads != 0 || vv.rows() % 2 != 0 ||
      pv.shape() != Shape{vv.rows() * heads, 2}) {
    throw ShapeError("pair_attention_mix: weights " + shape_string(pv.shape()) + " do not fit values " +
                     shape_string(vv.shape()) + " with " + std::to_string(heads) + " heads");
  }
  const std::size_t batch = vv.rows() / 2, width = vv.cols() / heads, cols = vv.cols();
  Tensor<T> out(vv.shape());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t a = 0; a < 2; ++a) {
        T* dst = out.data() + (2 * b + a) * cols + h * width;
        for (std::size_t c = 0; c < 2; ++c) {
          const T w = pv((b * heads + h) * 2 + a, c);
          const T* src = vv.data() + (2 * b + c) * cols + h * width;
          for (std::size_t x = 0; x < width; ++x) dst[x] += w * src[x];
        }
      }
  return emit(tape, std::move(out), {probs, v},
              [probs, v, batch, heads, width, cols](Tape<T>& t, const Tensor<T>& g) {
                Tensor<T>* gp = t.grad_sink(probs);
                Tensor<T>* gv = t.grad_sink(v);
                const Tensor<T>& pv = t.value(probs);
                const Tensor<T>& vv = t.value(v);
                for (std::size_t b = 0; b < batch; ++b)
                  for (std::size_t h = 0; h < heads; ++h)
                    for (std::size_t a = 0; a < 2; ++a) {
                      const std::size_t go = (2 * b + a) * cols + h * width;
                      const std::size_t row = (b * heads + h) * 2 + a;
                      for (std::size_t c = 0; c < 2; ++c) {
                        const std::size_t vo = (2 * b + c) * cols + h * width;
                        if (gp) {
                          T dot = 0;
                          for (std::size_t x = 0; x < width; ++x) dot += g[go + x] * vv[vo + x];
                          (*gp)(row, c) += dot;
                        }
                        if (gv) {
                          const T w = pv(row, c);
                          for (std::size_t x = 0; x < width; ++x) (*gv)[vo + x] += w * g[go + x];
                        }
                      }
                    }
              });
}

template <typename T>
Var contract_mode2(Tape<T>& tape, Var m, Var r) {
  const Tensor<T>& mv = tape.value(m);
  const Tensor<T>& rv = tape.value(r);
  require_rank2(mv.shape(), "contract_mode2");
  require_rank2(rv.shape(), "contract_mode2");
  const std::size_t batch = rv.rows(), d = rv.cols();
  if (mv.rows() != batch || mv.cols() != d * d) {
    throw ShapeError("contract_mode2: " + shape_string(mv.shape()) + " does not fit " + shape_string(rv.shape()));
  }
  Tensor<T> out({batch, d});
  for (std::size_t b = 0; b < batch; ++b) {
    const T* mb = mv.data() + b * d * d;
    T* ob = out.data() + b * d;
    for (std::size_t j = 0; j < d; ++j) {
      const T w = rv(b, j);
      const T* row = mb + j * d;
      for (std::size_t k = 0; k < d; ++k) ob[k] += w * row[k];
    }
  }
  return emit(tape, std::move(out), {m, r}, [m, r, batch, d](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>* gm = t.grad_sink(m);
    Tensor<T>* gr = t.grad_sink(r);
    const Tensor<T>& mv = t.value(m);
    const Tensor<T>& rv = t.value(r);
    for (std::size_t b = 0; b < batch; ++b) {
      const T* gb = g.data() + b * d;
      for (std::size_t j = 0; j < d; ++j) {
        const std::size_t off = b * d * d + j * d;
        if (gm) {
          const T w = rv(b, j);
          for (std::size_t k = 0; k < d; ++k) (*gm)[off + k] += w * gb[k];
        }
        if (gr) {
          T dot = 0;
          for (std::size_t k = 0; k < d; ++k) dot += gb[k] * mv[off + k];
          (*gr)(b, j) += dot;
        }
      }
    }
  });
}

namespace {

// Shared body of both BCE variants; positives_of(row) yields the row's
// positive column ids.
template <typename T, typename Positives>
Var bce_impl(Tape<T>& tape, Var scores, std::size_t rows, T smoothing, Positives positives_of) {
  const Tensor<T>& sv = tape.value(scores);
  require_rank2(sv.shape(), "bce_with_logits");
  if (sv.rows() != rows) {
    throw ShapeError("bce_with_logits: " + std::to_string(rows) + " label rows for scores " + shape_string(sv.shape()));
  }
  if (!(smoothing >= T(0) && smoothing < T(1))) throw ParameterError("label smoothing must be in [0, 1)");
  const std::size_t n = sv.cols();
  if (n < 2) throw ContractError("bce_with_logits needs at least 2 candidates");
  const T off = smoothing / T(n);
  const T on = (T(1) - smoothing) + off;
  // Per-row label lists kept for backward.
  std::vector<std::vector<int>> labels(rows);
  double total = 0;
  Eigen::Array<T, Eigen::Dynamic, 1> terms(static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < rows; ++r) {
    labels[r] = positives_of(r);
    const T* x = sv.data() + r * n;
    // Softplus as max(v, 0) + log(1 + exp(-|v|)). The log argument lies in
    // (1, 2], so plain log loses nothing next to log1p and Eigen vectorizes it.
    const ConstArr<T> v(x, static_cast<Eigen::Index>(n));
    terms = v.max(T(0)) - v * off + (T(1) + (-v.abs()).exp()).log();
    double row_sum = terms.template cast<double>().sum();
    for (int c : labels[r]) {
      if (c < 0 || static_cast<std::size_t>(c) >= n) throw ContractError("bce_with_logits: target out of range");
      row_sum -= static_cast<double>(x[c]) * (on - off);
    }
    total += row_sum / static_cast<double>(n);
  }
  const T loss = static_cast<T>(total / static_cast<double>(rows));
  return emit(tape, Tensor<T>({1, 1}, loss), {scores},
              [scores, rows, n, on, off, labels = std::move(labels)](Tape<T>& t, const Tensor<T>& g) {
                Tensor<T>* gs = t.grad_sink(scores);
                if (!gs) return;
                const Tensor<T>& sv = t.value(scores);
                const T w = g[0] / (T(rows) * T(n));
                for (std::size_t r = 0; r < rows; ++r) {
                  Arr<T> dst(gs->data() + r * n, static_cast<Eigen::Index>(n));
                  const ConstArr<T> x(sv.data() + r * n, static_cast<Eigen::Index>(n));
                  const auto e = (-x.abs()).exp().eval();
                  dst += w * ((x >= T(0)).select(T(1) / (T(1) + e), e / (T(1) + e)) - off);
                  for (int c : labels[r]) dst[c] -= w * (on - off);
                }
              });
}

}  // namespace

template <typename T>
Var bce_with_logits(Tape<T>& tape, Var scores, std::span<const int> targets, T smoothing) {
  return bce_impl(tape, scores, targets.size(), smoothing,
                  [&](std::size_t r) { return std::vector<int>{targets[r]}; });
}

template <typename T>
Var bce_with_logits(Tape<T>& tape, Var scores, const std::vector<std::vector<int>>& positives, T smoothing) {
  return bce_impl(tape, scores, positives.size(), smoothing, [&](std::size_t r) { return positives[r]; });
}

#define KGE_INSTANTIATE_OPS(T)                                                                       \
  template Var matmul<T>(Tape<T>&, Var, Var, bool);                                                  \
  template Var add<T>(Tape<T>&, Var, Var);                                                           \
  template Var add_bias<T>(Tape<T>&, Var, Var);                                                      \
  template Var scale<T>(Tape<T>&, Var, T);                                                           \
  template Var relu<T>(Tape<T>&, Var);                                                               \
  template Var sigmoid<T>(Tape<T>&, Var);                                                            \
  template Var softmax_rows<T>(Tape<T>&, Var, T);                                                    \
  template Var dropout<T>(Tape<T>&, Var, double, Mode, Rng&);                                        \
  template Var batch_norm<T>(Tape<T>&, Var, Var, Var, BatchNormStats<T>&, Mode);                     \
  template Var layer_norm<T>(Tape<T>&, Var, Var, Var, T);                                            \
  template Var concat_rows<T>(Tape<T>&, Var, Var);                                                   \
  template Var split_rows<T>(Tape<T>&, Var, std::size_t);                                            \
  template Var gather_rows<T>(Tape<T>&, Var, std::span<const int>);                                  \
  template Var reshape<T>(Tape<T>&, Var, Shape);                                                     \
  template Var sum<T>(Tape<T>&, Var);                                                                \
  template Var pair_attention_logits<T>(Tape<T>&, Var, Var, std::size_t);                            \
  template Var pair_attention_mix<T>(Tape<T>&, Var, Var, std::size_t);                               \
  template Var contract_mode2<T>(Tape<T>&, Var, Var);                                                \
  template Var bce_with_logits<T>(Tape<T>&, Var, std::span<const int>, T);                           \
  template Var bce_with_logits<T>(Tape<T>&, Var, const std::vector<std::vector<int>>&, T);

KGE_INSTANTIATE_OPS(float)
KGE_INSTANTIATE_OPS(double)

#undef KGE_INSTANTIATE_OPS

}  // namespace kge

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "nlb/parallel.hpp"
#include "nlb/rng.hpp"
#include "nlb/tensor.hpp"

namespace nlb {

// Plain value-level matmul, row-parallel. Each output element is computed by
// exactly one worker in a fixed k-order, so threading never changes bits.
template <class R>
Tensor<R> matmul_values(const Tensor<R>& a, const Tensor<R>& b,
                        bool transpose_a = false, bool transpose_b = false) {
  const std::int64_t m = transpose_a ? a.cols : a.rows;
  const std::int64_t k = transpose_a ? a.rows : a.cols;
  const std::int64_t kb = transpose_b ? b.cols : b.rows;
  const std::int64_t n = transpose_b ? b.rows : b.cols;
  if (k != kb) {
    throw std::invalid_argument("matmul shape mismatch: " + a.shape_str() +
                                " vs " + b.shape_str());
  }
  Tensor<R> out(m, n);
  parallel_for(m, [&](std::int64_t i) {
    R* out_row = out.data() + i * n;
    if (!transpose_a && !transpose_b) {
      const R* a_row = a.data() + i * k;
      for (std::int64_t p = 0; p < k; ++p) {
        const R av = a_row[p];
        if (av == R(0)) continue;
        const R* b_row = b.data() + p * n;
        for (std::int64_t j = 0; j < n; ++j) out_row[j] += av * b_row[j];
      }
    } else {
      for (std::int64_t j = 0; j < n; ++j) {
        R acc(0);
        for (std::int64_t p = 0; p < k; ++p) {
          const R av = transpose_a ? a.at(p, i) : a.at(i, p);
          const R bv = transpose_b ? b.at(j, p) : b.at(p, j);
          acc += av * bv;
        }
        out_row[j] = acc;
      }
    }
  });
  return out;
}

// Reverse-mode tape over dense tensors. The op set is exactly the closure
// needed by the encoder, the recurrent cell, time encoding and the loss
// heads. Backward replays the record in reverse execution order and
// accumulates into each input's grad once per use.
template <class R>
class Tape {
 public:
  struct Var {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
  };

  Var input(Tensor<R> t, bool needs_grad = false) {
    return push(std::move(t), needs_grad, {});
  }

  const Tensor<R>& value(Var v) const { return nodes_[check(v)].value; }
  const Tensor<R>& grad(Var v) const {
    const NodeRec& n = nodes_[check(v)];
    if (!n.needs_grad) throw std::logic_error("grad of a no-grad node");
    return n.grad;
  }
  std::int64_t rows(Var v) const { return value(v).rows; }
  std::int64_t cols(Var v) const { return value(v).cols; }
  std::size_t size() const { return nodes_.size(); }

  // ---- ops ----

  Var matmul(Var a, Var b) {
    Tensor<R> out = matmul_values(value(a), value(b));
    return push(std::move(out), needs(a) || needs(b), [this, a, b](const Tensor<R>& g) {
      if (needs(a)) accumulate(a, matmul_values(g, value(b), false, true));
      if (needs(b)) accumulate(b, matmul_values(value(a), g, true, false));
    });
  }

  // Same-shape addition, or row-broadcast when b is 1xN.
  Var add(Var a, Var b) {
    const Tensor<R>& ta = value(a);
    const Tensor<R>& tb = value(b);
    const bool bias = tb.rows == 1 && ta.cols == tb.cols && ta.rows != 1;
    if (!bias && !ta.same_shape(tb)) {
      throw std::invalid_argument("add shape mismatch: " + ta.shape_str() +
                                  " vs " + tb.shape_str());
    }
    Tensor<R> out = ta;
    if (bias) {
      for (std::int64_t i = 0; i < ta.rows; ++i) {
        for (std::int64_t j = 0; j < ta.cols; ++j) out.at(i, j) += tb[j];
      }
    } else {
      for (std::int64_t i = 0; i < ta.size(); ++i) out[i] += tb[i];
    }
    return push(std::move(out), needs(a) || needs(b),
                [this, a, b, bias](const Tensor<R>& g) {
                  if (needs(a)) accumulate(a, g);
                  if (!needs(b)) return;
                  if (!bias) {
                    accumulate(b, g);
                  } else {
                    Tensor<R> colsum(1, g.cols);
                    for (std::int64_t i = 0; i < g.rows; ++i) {
                      for (std::int64_t j = 0; j < g.cols; ++j) {
                        colsum[j] += g.at(i, j);
                      }
                    }
                    accumulate(b, colsum);
                  }
                });
  }

  Var mul(Var a, Var b) {
    const Tensor<R>& ta = value(a);
    const Tensor<R>& tb = value(b);
    if (!ta.same_shape(tb)) {
      throw std::invalid_argument("mul shape mismatch: " + ta.shape_str() +
                                  " vs " + tb.shape_str());
    }
    Tensor<R> out = ta;
    for (std::int64_t i = 0; i < ta.size(); ++i) out[i] *= tb[i];
    return push(std::move(out), needs(a) || needs(b),
                [this, a, b](const Tensor<R>& g) {
                  if (needs(a)) {
                    Tensor<R> da = g;
                    const Tensor<R>& tb2 = value(b);
                    for (std::int64_t i = 0; i < da.size(); ++i) da[i] *= tb2[i];
                    accumulate(a, da);
                  }
                  if (needs(b)) {
                    Tensor<R> db = g;
                    const Tensor<R>& ta2 = value(a);
                    for (std::int64_t i = 0; i < db.size(); ++i) db[i] *= ta2[i];
                    accumulate(b, db);
                  }
                });
  }

  // y = scale * x + shift, elementwise with scalar coefficients.
  Var affine(Var a, R scale, R shift) {
    Tensor<R> out = value(a);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = scale * out[i] + shift;
    return push(std::move(out), needs(a), [this, a, scale](const Tensor<R>& g) {
      if (!needs(a)) return;
      Tensor<R> da = g;
      for (std::int64_t i = 0; i < da.size(); ++i) da[i] *= scale;
      accumulate(a, da);
    });
  }

  Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat of nothing");
    std::int64_t r = value(parts[0]).rows;
    std::int64_t total = 0;
    bool any_grad = false;
    for (Var p : parts) {
      if (value(p).rows != r) {
        throw std::invalid_argument("concat_cols row mismatch: " +
                                    value(parts[0]).shape_str() + " vs " +
                                    value(p).shape_str());
      }
      total += value(p).cols;
      any_grad = any_grad || needs(p);
    }
    Tensor<R> out(r, total);
    std::int64_t off = 0;
    for (Var p : parts) {
      const Tensor<R>& t = value(p);
      for (std::int64_t i = 0; i < r; ++i) {
        for (std::int64_t j = 0; j < t.cols; ++j) {
          out.at(i, off + j) = t.at(i, j);
        }
      }
      off += t.cols;
    }
    std::vector<Var> saved(parts.begin(), parts.end());
    return push(std::move(out), any_grad, [this, saved](const Tensor<R>& g) {
      std::int64_t off2 = 0;
      for (Var p : saved) {
        const Tensor<R>& t = value(p);
        if (needs(p)) {
          Tensor<R> dp(t.rows, t.cols);
          for (std::int64_t i = 0; i < t.rows; ++i) {
            for (std::int64_t j = 0; j < t.cols; ++j) {
              dp.at(i, j) = g.at(i, off2 + j);
            }
          }
          accumulate(p, dp);
        }
        off2 += t.cols;
      }
    });
  }
  Var concat_cols(std::initializer_list<Var> parts) {
    std::vector<Var> v(parts);
    return concat_cols(std::span<const Var>(v));
  }

  Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat of nothing");
    std::int64_t c = value(parts[0]).cols;
    std::int64_t total = 0;
    bool any_grad = false;
    for (Var p : parts) {
      if (value(p).cols != c) {
        throw std::invalid_argument("concat_rows col mismatch: " +
                                    value(parts[0]).shape_str() + " vs " +
                                    value(p).shape_str());
      }
      total += value(p).rows;
      any_grad = any_grad || needs(p);
    }
    Tensor<R> out(total, c);
    std::int64_t off = 0;
    for (Var p : parts) {
      const Tensor<R>& t = value(p);
      for (std::int64_t i = 0; i < t.size(); ++i) out[off + i] = t[i];
      off += t.size();
    }
    std::vector<Var> saved(parts.begin(), parts.end());
    return push(std::move(out), any_grad, [this, saved](const Tensor<R>& g) {
      std::int64_t off2 = 0;
      for (Var p : saved) {
        const Tensor<R>& t = value(p);
        if (needs(p)) {
          Tensor<R> dp(t.rows, t.cols);
          for (std::int64_t i = 0; i < t.size(); ++i) dp[i] = g[off2 + i];
          accumulate(p, dp);
        }
        off2 += t.size();
      }
    });
  }
  Var concat_rows(std::initializer_list<Var> parts) {
    std::vector<Var> v(parts);
    return concat_rows(std::span<const Var>(v));
  }

  Var relu(Var a) {
    Tensor<R> out = value(a);
    for (std::int64_t i = 0; i < out.size(); ++i) {
      if (out[i] < R(0)) out[i] = R(0);
    }
    return unary(a, std::move(out), [](R x, R y, R g) {
      (void)y;
      return x > R(0) ? g : R(0);
    });
  }

  Var sigmoid(Var a) {
    Tensor<R> out = value(a);
    for (std::int64_t i = 0; i < out.size(); ++i) {
      out[i] = R(1) / (R(1) + std::exp(-out[i]));
    }
    return unary(a, std::move(out), [](R x, R y, R g) {
      (void)x;
      return g * y * (R(1) - y);
    });
  }

  Var tanh_op(Var a) {
    Tensor<R> out = value(a);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
    return unary(a, std::move(out), [](R x, R y, R g) {
      (void)x;
      return g * (R(1) - y * y);
    });
  }

  Var cos_op(Var a) {
    Tensor<R> out = value(a);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::cos(out[i]);
    return unary(a, std::move(out),
                 [](R x, R y, R g) { (void)y; return -g * std::sin(x); });
  }

  Var sin_op(Var a) {
    Tensor<R> out = value(a);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::sin(out[i]);
    return unary(a, std::move(out),
                 [](R x, R y, R g) { (void)y; return g * std::cos(x); });
  }

  // [a0 b0 a1 b1 ...] per row; both inputs m x n.
  Var interleave_cols(Var a, Var b) {
    const Tensor<R>& ta = value(a);
    const Tensor<R>& tb = value(b);
    if (!ta.same_shape(tb)) {
      throw std::invalid_argument("interleave shape mismatch: " +
                                  ta.shape_str() + " vs " + tb.shape_str());
    }
    Tensor<R> out(ta.rows, 2 * ta.cols);
    for (std::int64_t i = 0; i < ta.rows; ++i) {
      for (std::int64_t j = 0; j < ta.cols; ++j) {
        out.at(i, 2 * j) = ta.at(i, j);
        out.at(i, 2 * j + 1) = tb.at(i, j);
      }
    }
    return push(std::move(out), needs(a) || needs(b),
                [this, a, b](const Tensor<R>& g) {
                  const Tensor<R>& ta2 = value(a);
                  if (needs(a)) {
                    Tensor<R> da(ta2.rows, ta2.cols);
                    for (std::int64_t i = 0; i < ta2.rows; ++i)
                      for (std::int64_t j = 0; j < ta2.cols; ++j)
                        da.at(i, j) = g.at(i, 2 * j);
                    accumulate(a, da);
                  }
                  if (needs(b)) {
                    Tensor<R> db(ta2.rows, ta2.cols);
                    for (std::int64_t i = 0; i < ta2.rows; ++i)
                      for (std::int64_t j = 0; j < ta2.cols; ++j)
                        db.at(i, j) = g.at(i, 2 * j + 1);
                    accumulate(b, db);
                  }
                });
  }

  // Row-wise softmax over entries with mask != 0; masked entries are zero in
  // the output, and a fully masked row yields a zero row (not NaN).
  Var masked_softmax_rows(Var logits, std::vector<std::uint8_t> mask) {
    const Tensor<R>& t = value(logits);
    if (static_cast<std::int64_t>(mask.size()) != t.size()) {
      throw std::invalid_argument("mask size mismatch: " + t.shape_str());
    }
    Tensor<R> out(t.rows, t.cols);
    for (std::int64_t i = 0; i < t.rows; ++i) {
      R max_v = R(0);
      bool any = false;
      for (std::int64_t j = 0; j < t.cols; ++j) {
        if (mask[i * t.cols + j] && (!any || t.at(i, j) > max_v)) {
          max_v = t.at(i, j);
          any = true;
        }
      }
      if (!any) continue;
      R denom(0);
      for (std::int64_t j = 0; j < t.cols; ++j) {
        if (mask[i * t.cols + j]) {
          out.at(i, j) = std::exp(t.at(i, j) - max_v);
          denom += out.at(i, j);
        }
      }
      for (std::int64_t j = 0; j < t.cols; ++j) out.at(i, j) /= denom;
    }
    return push(std::move(out), needs(logits),
                [this, logits, m = std::move(mask)](const Tensor<R>& g) {
                  if (!needs(logits)) return;
                  const Tensor<R>& y = nodes_[last_out_].value;
                  Tensor<R> dx(y.rows, y.cols);
                  for (std::int64_t i = 0; i < y.rows; ++i) {
                    R dot(0);
                    for (std::int64_t j = 0; j < y.cols; ++j) {
                      dot += g.at(i, j) * y.at(i, j);
                    }
                    for (std::int64_t j = 0; j < y.cols; ++j) {
                      if (m[i * y.cols + j]) {
                        dx.at(i, j) = y.at(i, j) * (g.at(i, j) - dot);
                      }
                    }
                  }
                  accumulate(logits, dx);
                });
  }

  Var softmax_rows(Var logits) {
    const Tensor<R>& t = value(logits);
    std::vector<std::uint8_t> mask(t.size(), 1);
    return masked_softmax_rows(logits, std::move(mask));
  }

  // messages is (m*n) x d, weights m x n; out[b] = sum_j w[b,j]*messages[b*n+j].
  Var slot_weighted_sum(Var messages, Var weights) {
    const Tensor<R>& msg = value(messages);
    const Tensor<R>& w = value(weights);
    if (msg.rows != w.rows * w.cols) {
      throw std::invalid_argument("slot_weighted_sum shape mismatch: " +
                                  msg.shape_str() + " vs " + w.shape_str());
    }
    const std::int64_t n = w.cols, d = msg.cols;
    Tensor<R> out(w.rows, d);
    for (std::int64_t b = 0; b < w.rows; ++b) {
      for (std::int64_t j = 0; j < n; ++j) {
        const R wv = w.at(b, j);
        if (wv == R(0)) continue;
        const R* src = msg.data() + (b * n + j) * d;
        R* dst = out.data() + b * d;
        for (std::int64_t k = 0; k < d; ++k) dst[k] += wv * src[k];
      }
    }
    return push(std::move(out), needs(messages) || needs(weights),
                [this, messages, weights, n, d](const Tensor<R>& g) {
                  const Tensor<R>& msg2 = value(messages);
                  const Tensor<R>& w2 = value(weights);
                  if (needs(messages)) {
                    Tensor<R> dm(msg2.rows, d);
                    for (std::int64_t b = 0; b < w2.rows; ++b) {
                      for (std::int64_t j = 0; j < n; ++j) {
                        const R wv = w2.at(b, j);
                        if (wv == R(0)) continue;
                        const R* gs = g.data() + b * d;
                        R* dst = dm.data() + (b * n + j) * d;
                        for (std::int64_t k = 0; k < d; ++k) dst[k] = wv * gs[k];
                      }
                    }
                    accumulate(messages, dm);
                  }
                  if (needs(weights)) {
                    Tensor<R> dw(w2.rows, n);
                    for (std::int64_t b = 0; b < w2.rows; ++b) {
                      for (std::int64_t j = 0; j < n; ++j) {
                        const R* src = msg2.data() + (b * n + j) * d;
                        const R* gs = g.data() + b * d;
                        R acc(0);
                        for (std::int64_t k = 0; k < d; ++k) acc += src[k] * gs[k];
                        dw.at(b, j) = acc;
                      }
                    }
                    accumulate(weights, dw);
                  }
                });
  }

  // Free relabeling of dimensions; element order is untouched.
  Var reshape(Var a, std::int64_t rows, std::int64_t cols) {
    const Tensor<R>& t = value(a);
    if (rows * cols != t.size()) {
      throw std::invalid_argument("reshape size mismatch: " + t.shape_str() +
                                  " vs (" + std::to_string(rows) + "x" +
                                  std::to_string(cols) + ")");
    }
    Tensor<R> out = t;
    out.rows = rows;
    out.cols = cols;
    return push(std::move(out), needs(a), [this, a](const Tensor<R>& g) {
      if (!needs(a)) return;
      Tensor<R> da = g;
      da.rows = value(a).rows;
      da.cols = value(a).cols;
      accumulate(a, da);
    });
  }

  Var gather_rows(Var m, std::vector<std::int64_t> idx) {
    const Tensor<R>& t = value(m);
    Tensor<R> out(static_cast<std::int64_t>(idx.size()), t.cols);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] < 0 || idx[i] >= t.rows) {
        throw std::out_of_range("gather_rows index out of range");
      }
      for (std::int64_t j = 0; j < t.cols; ++j) {
        out.at(i, j) = t.at(idx[i], j);
      }
    }
    return push(std::move(out), needs(m),
                [this, m, ix = std::move(idx)](const Tensor<R>& g) {
                  if (!needs(m)) return;
                  Tensor<R> dm(value(m).rows, value(m).cols);
                  for (std::size_t i = 0; i < ix.size(); ++i) {
                    for (std::int64_t j = 0; j < g.cols; ++j) {
                      dm.at(ix[i], j) += g.at(i, j);
                    }
                  }
                  accumulate(m, dm);
                });
  }

  // Functional row update: out = m with out[idx[i]] = rows[i]. With duplicate
  // indices the later write wins, and only the winning write receives grad.
  Var scatter_rows(Var m, std::vector<std::int64_t> idx, Var rows_in) {
    const Tensor<R>& t = value(m);
    const Tensor<R>& r = value(rows_in);
    if (r.rows != static_cast<std::int64_t>(idx.size()) || r.cols != t.cols) {
      throw std::invalid_argument("scatter_rows shape mismatch: " +
                                  t.shape_str() + " vs " + r.shape_str());
    }
    Tensor<R> out = t;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] < 0 || idx[i] >= t.rows) {
        throw std::out_of_range("scatter_rows index out of range");
      }
      for (std::int64_t j = 0; j < t.cols; ++j) out.at(idx[i], j) = r.at(i, j);
    }
    return push(std::move(out), needs(m) || needs(rows_in),
                [this, m, rows_in, ix = std::move(idx)](const Tensor<R>& g) {
                  // Winner per target row: the last write.
                  std::vector<std::int64_t> winner(ix.size());
                  std::vector<std::int64_t> last_writer;
                  if (needs(m) || needs(rows_in)) {
                    last_writer.assign(value(m).rows, -1);
                    for (std::size_t i = 0; i < ix.size(); ++i) {
                      last_writer[ix[i]] = static_cast<std::int64_t>(i);
                    }
                  }
                  if (needs(rows_in)) {
                    Tensor<R> dr(value(rows_in).rows, value(rows_in).cols);
                    for (std::size_t i = 0; i < ix.size(); ++i) {
                      if (last_writer[ix[i]] != static_cast<std::int64_t>(i)) {
                        continue;
                      }
                      for (std::int64_t j = 0; j < g.cols; ++j) {
                        dr.at(i, j) = g.at(ix[i], j);
                      }
                    }
                    accumulate(rows_in, dr);
                  }
                  if (needs(m)) {
                    Tensor<R> dm = g;
                    for (std::size_t i = 0; i < ix.size(); ++i) {
                      for (std::int64_t j = 0; j < g.cols; ++j) {
                        dm.at(ix[i], j) = R(0);
                      }
                    }
                    accumulate(m, dm);
                  }
                });
  }

  // Inverted dropout: kept entries are scaled by 1/(1-p) at train time so
  // inference needs no rescale. The mask is a pure function of `key`.
  Var dropout(Var a, double p, std::uint64_t key, bool train) {
    if (!train || p <= 0.0) return a;
    if (p >= 1.0) throw std::invalid_argument("dropout p must be < 1");
    const Tensor<R>& t = value(a);
    std::vector<std::uint8_t> keep(t.size());
    const R scale = R(1.0 / (1.0 - p));
    Tensor<R> out = t;
    for (std::int64_t i = 0; i < t.size(); ++i) {
      keep[i] = counter_u01(key, static_cast<std::uint64_t>(i)) >= p;
      out[i] = keep[i] ? out[i] * scale : R(0);
    }
    return push(std::move(out), needs(a),
                [this, a, k = std::move(keep), scale](const Tensor<R>& g) {
                  if (!needs(a)) return;
                  Tensor<R> da = g;
                  for (std::int64_t i = 0; i < da.size(); ++i) {
                    da[i] = k[i] ? da[i] * scale : R(0);
                  }
                  accumulate(a, da);
                });
  }

  Var reduce_sum(Var a) {
    const Tensor<R>& t = value(a);
    R acc(0);
    for (std::int64_t i = 0; i < t.size(); ++i) acc += t[i];
    return push(Tensor<R>::scalar(acc), needs(a), [this, a](const Tensor<R>& g) {
      if (!needs(a)) return;
      accumulate(a, Tensor<R>::filled(value(a).rows, value(a).cols, g[0]));
    });
  }

  Var reduce_mean(Var a) {
    const Tensor<R>& t = value(a);
    R acc(0);
    for (std::int64_t i = 0; i < t.size(); ++i) acc += t[i];
    const R inv = R(1) / static_cast<R>(t.size());
    return push(Tensor<R>::scalar(acc * inv), needs(a),
                [this, a, inv](const Tensor<R>& g) {
                  if (!needs(a)) return;
                  accumulate(a, Tensor<R>::filled(value(a).rows, value(a).cols,
                                                  g[0] * inv));
                });
  }

  // Mean binary cross-entropy over logits, stable for large |z|.
  Var bce_with_logits(Var logits, Tensor<R> targets) {
    const Tensor<R>& z = value(logits);
    if (!z.same_shape(targets)) {
      throw std::invalid_argument("bce shape mismatch: " + z.shape_str() +
                                  " vs " + targets.shape_str());
    }
    R loss(0);
    for (std::int64_t i = 0; i < z.size(); ++i) {
      const R zv = z[i];
      loss += std::max(zv, R(0)) - zv * targets[i] +
              std::log1p(std::exp(-std::abs(zv)));
    }
    loss /= static_cast<R>(z.size());
    return push(Tensor<R>::scalar(loss), needs(logits),
                [this, logits, y = std::move(targets)](const Tensor<R>& g) {
                  if (!needs(logits)) return;
                  const Tensor<R>& z2 = value(logits);
                  Tensor<R> dz(z2.rows, z2.cols);
                  const R inv = g[0] / static_cast<R>(z2.size());
                  for (std::int64_t i = 0; i < z2.size(); ++i) {
                    const R s = R(1) / (R(1) + std::exp(-z2[i]));
                    dz[i] = (s - y[i]) * inv;
                  }
                  accumulate(logits, dz);
                });
  }

  // Mean softmax cross-entropy with integer class labels.
  Var softmax_ce(Var logits, std::vector<int> labels) {
    const Tensor<R>& z = value(logits);
    if (static_cast<std::int64_t>(labels.size()) != z.rows) {
      throw std::invalid_argument("softmax_ce label count mismatch: " +
                                  z.shape_str());
    }
    Tensor<R> probs(z.rows, z.cols);
    R loss(0);
    for (std::int64_t i = 0; i < z.rows; ++i) {
      if (labels[i] < 0 || labels[i] >= z.cols) {
        throw std::out_of_range("class label out of range");
      }
      R max_v = z.at(i, 0);
      for (std::int64_t j = 1; j < z.cols; ++j) max_v = std::max(max_v, z.at(i, j));
      R denom(0);
      for (std::int64_t j = 0; j < z.cols; ++j) {
        probs.at(i, j) = std::exp(z.at(i, j) - max_v);
        denom += probs.at(i, j);
      }
      for (std::int64_t j = 0; j < z.cols; ++j) probs.at(i, j) /= denom;
      loss -= std::log(std::max(probs.at(i, labels[i]),
                                std::numeric_limits<R>::min()));
    }
    loss /= static_cast<R>(z.rows);
    return push(Tensor<R>::scalar(loss), needs(logits),
                [this, logits, p = std::move(probs),
                 lab = std::move(labels)](const Tensor<R>& g) {
                  if (!needs(logits)) return;
                  Tensor<R> dz = p;
                  for (std::int64_t i = 0; i < dz.rows; ++i) {
                    dz.at(i, lab[i]) -= R(1);
                  }
                  const R inv = g[0] / static_cast<R>(dz.rows);
                  for (std::int64_t i = 0; i < dz.size(); ++i) dz[i] *= inv;
                  accumulate(logits, dz);
                });
  }

  // ---- engine ----

  void backward(Var loss) {
    const Tensor<R>& lv = value(loss);
    if (lv.rows != 1 || lv.cols != 1) {
      throw std::invalid_argument("backward needs a scalar, got " +
                                  lv.shape_str());
    }
    for (NodeRec& n : nodes_) {
      if (n.needs_grad) n.grad = Tensor<R>(n.value.rows, n.value.cols);
    }
    NodeRec& top = nodes_[check(loss)];
    if (!top.needs_grad) throw std::logic_error("loss does not require grad");
    top.grad[0] = R(1);
    for (std::int32_t id = loss.id; id >= 0; --id) {
      NodeRec& n = nodes_[id];
      if (n.needs_grad && n.backward) {
        last_out_ = id;
        n.backward(n.grad);
      }
    }
  }

  bool has_nonfinite(Var v) const {
    for (const R& x : value(v).v) {
      if (!std::isfinite(static_cast<double>(x))) return true;
    }
    return false;
  }

 private:
  struct NodeRec {
    Tensor<R> value;
    Tensor<R> grad;
    bool needs_grad = false;
    std::function<void(const Tensor<R>&)> backward;
  };

  bool needs(Var v) const { return nodes_[check(v)].needs_grad; }

  void accumulate(Var v, const Tensor<R>& g) {
    Tensor<R>& dst = nodes_[check(v)].grad;
    for (std::int64_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
  }

  std::int32_t check(Var v) const {
    if (!v.valid() || v.id >= static_cast<std::int32_t>(nodes_.size())) {
      throw std::logic_error("invalid tape var");
    }
    return v.id;
  }

  Var push(Tensor<R> value, bool needs_grad,
           std::function<void(const Tensor<R>&)> backward) {
    nodes_.push_back({std::move(value), {}, needs_grad, std::move(backward)});
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  template <class Fn>
  Var unary(Var a, Tensor<R> out, Fn&& df) {
    return push(std::move(out), needs(a),
                [this, a, fn = std::forward<Fn>(df)](const Tensor<R>& g) {
                  if (!needs(a)) return;
                  const Tensor<R>& x = value(a);
                  const Tensor<R>& y = nodes_[last_out_].value;
                  Tensor<R> da(x.rows, x.cols);
                  for (std::int64_t i = 0; i < x.size(); ++i) {
                    da[i] = fn(x[i], y[i], g[i]);
                  }
                  accumulate(a, da);
                });
  }

  std::vector<NodeRec> nodes_;
  std::int32_t last_out_ = -1;
};

}  // namespace nlb

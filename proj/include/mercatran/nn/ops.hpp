// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

// Differentiable primitives recorded on a Tape. Every op validates shapes,
// computes its value eagerly and registers the vector-Jacobian product.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "mercatran/nn/tape.hpp"
#include "mercatran/rng.hpp"

namespace mercatran::nn {

namespace detail {

inline void CheckShape(bool ok, const char* op, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kShapeMismatch, std::string(op) + ": " + what);
}

template <typename Scalar>
bool Needs(const Var<Scalar>& v) {
  return v.tape->requires_grad(v);
}

template <typename Scalar, typename... Vars>
bool AnyNeeds(const Var<Scalar>& first, const Vars&... rest) {
  return (Needs(first) || ... || Needs(rest));
}

}  // namespace detail

// Kernels on plain matrices ------------------------------------------------------

// Row-wise softmax with max subtraction. -inf entries get probability 0.
template <typename Scalar>
Matrix<Scalar> SoftmaxRowsKernel(const Matrix<Scalar>& x) {
  Matrix<Scalar> y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Scalar m = x.row(i).maxCoeff();
    y.row(i) = (x.row(i).array() - m).exp();
    y.row(i) /= y.row(i).sum();
  }
  return y;
}

// Throws Error(kNaNInput) on non-finite input.
template <typename Scalar>
Matrix<Scalar> SoftmaxRows(const Matrix<Scalar>& x) {
  if (!x.allFinite()) throw Error(ErrorCode::kNaNInput, "softmax_rows input is not finite");
  return SoftmaxRowsKernel(x);
}

template <typename Scalar>
Matrix<Scalar> LayerNormRows(const Matrix<Scalar>& x, const Matrix<Scalar>& gamma, const Matrix<Scalar>& beta,
                             Scalar eps = Scalar(1e-5)) {
  detail::CheckShape(gamma.rows() == 1 && gamma.cols() == x.cols() && beta.rows() == 1 && beta.cols() == x.cols(),
                     "layer_norm", "gamma/beta must be [1, d]");
  Matrix<Scalar> y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Scalar mean = x.row(i).mean();
    const auto centered = (x.row(i).array() - mean).eval();
    const Scalar var = centered.square().mean();
    const Scalar r = Scalar(1) / std::sqrt(var + eps);
    y.row(i) = (centered * r * gamma.array() + beta.array()).matrix();
  }
  return y;
}

// softmax(Q K^T / sqrt(dk) + mask) V for one head. With `causal`, query i
// sees keys 0..i only.
template <typename Scalar>
Matrix<Scalar> ScaledDotAttention(const Matrix<Scalar>& q, const Matrix<Scalar>& k, const Matrix<Scalar>& v,
                                  bool causal = false) {
  detail::CheckShape(q.cols() == k.cols(), "attention", "Q and K widths differ");
  detail::CheckShape(k.rows() == v.rows(), "attention", "K and V lengths differ");
  detail::CheckShape(!causal || q.rows() <= k.rows(), "attention", "causal mask needs |Q| <= |K|");
  Matrix<Scalar> s = (q * k.transpose()) * (Scalar(1) / std::sqrt(static_cast<Scalar>(q.cols())));
  if (causal) {
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      for (Eigen::Index j = i + 1; j < s.cols(); ++j) s(i, j) = -std::numeric_limits<Scalar>::infinity();
    }
  }
  return SoftmaxRowsKernel(s) * v;
}

// Tape ops -------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> MatMul(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::CheckShape(a.cols() == b.rows(), "matmul", "inner dimensions differ");
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->Push(a.value() * b.value(), detail::AnyNeeds(a, b), [ia, ib](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    if (t.requires_grad(ia)) t.grad(ia).noalias() += g * t.value(ib).transpose();
    if (t.requires_grad(ib)) t.grad(ib).noalias() += t.value(ia).transpose() * g;
  });
}

// a * b^T
template <typename Scalar>
Var<Scalar> MatMulNT(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::CheckShape(a.cols() == b.cols(), "matmul_nt", "widths differ");
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->Push(a.value() * b.value().transpose(), detail::AnyNeeds(a, b),
                      [ia, ib](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                        if (t.requires_grad(ia)) t.grad(ia).noalias() += g * t.value(ib);
                        if (t.requires_grad(ib)) t.grad(ib).noalias() += g.transpose() * t.value(ia);
                      });
}

template <typename Scalar>
Var<Scalar> Add(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::CheckShape(a.rows() == b.rows() && a.cols() == b.cols(), "add", "shapes differ");
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->Push(a.value() + b.value(), detail::AnyNeeds(a, b), [ia, ib](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    if (t.requires_grad(ia)) t.grad(ia) += g;
    if (t.requires_grad(ib)) t.grad(ib) += g;
  });
}

// Elementwise product.
template <typename Scalar>
Var<Scalar> Mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::CheckShape(a.rows() == b.rows() && a.cols() == b.cols(), "mul", "shapes differ");
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->Push(a.value().cwiseProduct(b.value()), detail::AnyNeeds(a, b),
                      [ia, ib](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                        if (t.requires_grad(ia)) t.grad(ia) += g.cwiseProduct(t.value(ib));
                        if (t.requires_grad(ib)) t.grad(ib) += g.cwiseProduct(t.value(ia));
                      });
}

template <typename Scalar>
Var<Scalar> Scale(const Var<Scalar>& a, Scalar s) {
  const std::size_t ia = a.id;
  return a.tape->Push(a.value() * s, detail::Needs(a), [ia, s](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.grad(ia) += g * s;
  });
}

// x + 1 * bias, bias is [1, cols].
template <typename Scalar>
Var<Scalar> AddRowBias(const Var<Scalar>& x, const Var<Scalar>& bias) {
  detail::CheckShape(bias.rows() == 1 && bias.cols() == x.cols(), "add_bias", "bias must be [1, cols]");
  const std::size_t ix = x.id, ib = bias.id;
  Matrix<Scalar> y = x.value();
  y.rowwise() += bias.value().row(0);
  return x.tape->Push(std::move(y), detail::AnyNeeds(x, bias), [ix, ib](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    if (t.requires_grad(ix)) t.grad(ix) += g;
    if (t.requires_grad(ib)) t.grad(ib) += g.colwise().sum();
  });
}

template <typename Scalar>
Var<Scalar> Transpose(const Var<Scalar>& x) {
  const std::size_t ix = x.id;
  return x.tape->Push(x.value().transpose(), detail::Needs(x), [ix](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.grad(ix) += g.transpose();
  });
}

// Tanh approximation of GELU.
template <typename Scalar>
Var<Scalar> Gelu(const Var<Scalar>& x) {
  constexpr Scalar kC = static_cast<Scalar>(0.7978845608028654);  // sqrt(2/pi)
  constexpr Scalar kA = static_cast<Scalar>(0.044715);
  const std::size_t ix = x.id;
  const Matrix<Scalar>& xv = x.value();
  Matrix<Scalar> y = (Scalar(0.5) * xv.array() * (Scalar(1) + (kC * (xv.array() + kA * xv.array().cube())).tanh())).matrix();
  return x.tape->Push(std::move(y), detail::Needs(x), [ix, kC = kC, kA = kA](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    const auto xa = t.value(ix).array();
    const auto th = (kC * (xa + kA * xa.cube())).tanh().eval();
    const auto d = (Scalar(0.5) * (Scalar(1) + th) +
                    Scalar(0.5) * xa * (Scalar(1) - th.square()) * kC * (Scalar(1) + Scalar(3) * kA * xa.square()))
                       .eval();
    t.grad(ix).array() += g.array() * d;
  });
}

template <typename Scalar>
Var<Scalar> SoftmaxRows(const Var<Scalar>& x) {
  const std::size_t ix = x.id;
  Matrix<Scalar> y = SoftmaxRows(x.value());
  auto saved = std::make_shared<Matrix<Scalar>>(y);
  return x.tape->Push(std::move(y), detail::Needs(x), [ix, saved](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    const Matrix<Scalar>& p = *saved;
    const auto dot = g.cwiseProduct(p).rowwise().sum().eval();
    t.grad(ix).array() += p.array() * (g.colwise() - dot).array();
  });
}

template <typename Scalar>
Var<Scalar> LayerNorm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                      Scalar eps = Scalar(1e-5)) {
  detail::CheckShape(gamma.rows() == 1 && gamma.cols() == x.cols() && beta.rows() == 1 && beta.cols() == x.cols(),
                     "layer_norm", "gamma/beta must be [1, d]");
  const Matrix<Scalar>& xv = x.value();
  const Eigen::Index n = xv.rows(), d = xv.cols();
  auto xhat = std::make_shared<Matrix<Scalar>>(n, d);
  auto rstd = std::make_shared<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar mean = xv.row(i).mean();
    xhat->row(i) = xv.row(i).array() - mean;
    const Scalar var = xhat->row(i).squaredNorm() / static_cast<Scalar>(d);
    (*rstd)(i) = Scalar(1) / std::sqrt(var + eps);
    xhat->row(i) *= (*rstd)(i);
  }
  Matrix<Scalar> y = xhat->array().rowwise() * gamma.value().row(0).array();
  y.rowwise() += beta.value().row(0);
  const std::size_t ix = x.id, ig = gamma.id, ib = beta.id;
  return x.tape->Push(std::move(y), detail::AnyNeeds(x, gamma, beta),
                      [ix, ig, ib, xhat, rstd](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                        if (t.requires_grad(ig)) t.grad(ig) += g.cwiseProduct(*xhat).colwise().sum();
                        if (t.requires_grad(ib)) t.grad(ib) += g.colwise().sum();
                        if (!t.requires_grad(ix)) return;
                        const Matrix<Scalar> dxhat = g.array().rowwise() * t.value(ig).row(0).array();
                        const Scalar inv_d = Scalar(1) / static_cast<Scalar>(g.cols());
                        const auto mean_d = (dxhat.rowwise().sum() * inv_d).eval();
                        const auto mean_dx = (dxhat.cwiseProduct(*xhat).rowwise().sum() * inv_d).eval();
                        Matrix<Scalar> dx = dxhat;
                        dx.colwise() -= mean_d;
                        dx -= (xhat->array().colwise() * mean_dx.array()).matrix();
                        dx = (dx.array().colwise() * rstd->array()).matrix();
                        t.grad(ix) += dx;
                      });
}

// Inverted dropout. A no-op when rate == 0.
template <typename Scalar>
Var<Scalar> Dropout(const Var<Scalar>& x, Scalar rate, CounterRng& rng) {
  if (rate <= Scalar(0)) return x;
  const Scalar keep_scale = Scalar(1) / (Scalar(1) - rate);
  auto mask = std::make_shared<Matrix<Scalar>>(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < mask->size(); ++i) {
    mask->data()[i] = rng.Uniform() < static_cast<double>(rate) ? Scalar(0) : keep_scale;
  }
  const std::size_t ix = x.id;
  return x.tape->Push(x.value().cwiseProduct(*mask), detail::Needs(x), [ix, mask](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.grad(ix) += g.cwiseProduct(*mask);
  });
}

// Each row scaled to unit L2 norm.
template <typename Scalar>
Var<Scalar> L2NormalizeRows(const Var<Scalar>& x) {
  const Matrix<Scalar>& xv = x.value();
  auto norms = std::make_shared<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(xv.rowwise().norm());
  *norms = norms->cwiseMax(std::numeric_limits<Scalar>::min());
  Matrix<Scalar> y = xv.array().colwise() / norms->array();
  auto saved = std::make_shared<Matrix<Scalar>>(y);
  const std::size_t ix = x.id;
  return x.tape->Push(std::move(y), detail::Needs(x), [ix, norms, saved](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    const Matrix<Scalar>& yv = *saved;
    const auto dot = g.cwiseProduct(yv).rowwise().sum().eval();
    Matrix<Scalar> dx = g - (yv.array().colwise() * dot.array()).matrix();
    t.grad(ix) += (dx.array().colwise() / norms->array()).matrix();
  });
}

// out.row(i) = mean of table rows listed in segments[i].
template <typename Scalar>
Var<Scalar> GatherMeanRows(const Var<Scalar>& table, std::vector<std::vector<std::int32_t>> segments) {
  const Matrix<Scalar>& tv = table.value();
  Matrix<Scalar> y = Matrix<Scalar>::Zero(static_cast<Eigen::Index>(segments.size()), tv.cols());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& seg = segments[i];
    if (seg.empty()) throw Error(ErrorCode::kShapeMismatch, "gather_mean: empty segment");
    for (auto id : seg) {
      if (id < 0 || id >= tv.rows()) throw Error(ErrorCode::kTokenOutOfRange, "token id " + std::to_string(id));
      y.row(static_cast<Eigen::Index>(i)) += tv.row(id);
    }
    y.row(static_cast<Eigen::Index>(i)) /= static_cast<Scalar>(seg.size());
  }
  auto saved = std::make_shared<std::vector<std::vector<std::int32_t>>>(std::move(segments));
  const std::size_t it = table.id;
  return table.tape->Push(std::move(y), detail::Needs(table), [it, saved](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    Matrix<Scalar>& gt = t.grad(it);
    for (std::size_t i = 0; i < saved->size(); ++i) {
      const auto& seg = (*saved)[i];
      const Scalar w = Scalar(1) / static_cast<Scalar>(seg.size());
      for (auto id : seg) gt.row(id) += g.row(static_cast<Eigen::Index>(i)) * w;
    }
  });
}

// out.row(i) = x.row(index[i]).
template <typename Scalar>
Var<Scalar> GatherRows(const Var<Scalar>& x, std::vector<Eigen::Index> index) {
  const Matrix<Scalar>& xv = x.value();
  Matrix<Scalar> y(static_cast<Eigen::Index>(index.size()), xv.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    detail::CheckShape(index[i] >= 0 && index[i] < xv.rows(), "gather_rows", "row index out of range");
    y.row(static_cast<Eigen::Index>(i)) = xv.row(index[i]);
  }
  auto saved = std::make_shared<std::vector<Eigen::Index>>(std::move(index));
  const std::size_t ix = x.id;
  return x.tape->Push(std::move(y), detail::Needs(x), [ix, saved](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    Matrix<Scalar>& gx = t.grad(ix);
    for (std::size_t i = 0; i < saved->size(); ++i) gx.row((*saved)[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

template <typename Scalar>
Var<Scalar> ConcatRows(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::CheckShape(a.cols() == b.cols(), "concat_rows", "widths differ");
  Matrix<Scalar> y(a.rows() + b.rows(), a.cols());
  y.topRows(a.rows()) = a.value();
  y.bottomRows(b.rows()) = b.value();
  const std::size_t ia = a.id, ib = b.id;
  const Eigen::Index na = a.rows();
  return a.tape->Push(std::move(y), detail::AnyNeeds(a, b), [ia, ib, na](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    if (t.requires_grad(ia)) t.grad(ia) += g.topRows(na);
    if (t.requires_grad(ib)) t.grad(ib) += g.bottomRows(g.rows() - na);
  });
}

template <typename Scalar>
Var<Scalar> Sum(const Var<Scalar>& x) {
  Matrix<Scalar> y(1, 1);
  y(0, 0) = x.value().sum();
  const std::size_t ix = x.id;
  return x.tape->Push(std::move(y), detail::Needs(x), [ix](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.grad(ix).array() += g(0, 0);
  });
}

template <typename Scalar>
Var<Scalar> Mean(const Var<Scalar>& x) {
  return Scale(Sum(x), Scalar(1) / static_cast<Scalar>(x.value().size()));
}

// mean_i [ logsumexp(L_i) - L_ii ] for a square logit matrix: the
// cross-entropy of each row against its diagonal class.
template <typename Scalar>
Var<Scalar> CrossEntropyDiagonal(const Var<Scalar>& logits) {
  const Matrix<Scalar>& l = logits.value();
  detail::CheckShape(l.rows() == l.cols() && l.rows() > 0, "cross_entropy_diag", "logits must be square");
  auto probs = std::make_shared<Matrix<Scalar>>(SoftmaxRowsKernel(l));
  Scalar total = 0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    const Scalar m = l.row(i).maxCoeff();
    const Scalar lse = m + std::log((l.row(i).array() - m).exp().sum());
    total += lse - l(i, i);
  }
  Matrix<Scalar> y(1, 1);
  y(0, 0) = total / static_cast<Scalar>(l.rows());
  const std::size_t il = logits.id;
  return logits.tape->Push(std::move(y), detail::Needs(logits), [il, probs](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    const Scalar w = g(0, 0) / static_cast<Scalar>(probs->rows());
    Matrix<Scalar>& gl = t.grad(il);
    gl += *probs * w;
    gl.diagonal().array() -= w;
  });
}

// Multi-head attention core over a batch of padded sequences.
//
// Example b owns rows [b * q_stride, b * q_stride + q_len[b]) of Q and rows
// [b * k_stride, b * k_stride + k_len[b]) of K and V. Keys past k_len are
// never attended; query rows past q_len produce zeros. Columns are split
// into `heads` equal slices.
struct AttentionLayout {
  int batch = 0;
  int q_stride = 0;
  int k_stride = 0;
  std::vector<int> q_len;
  std::vector<int> k_len;
  bool causal = false;
};

template <typename Scalar>
Var<Scalar> MultiHeadAttention(const Var<Scalar>& q, const Var<Scalar>& k, const Var<Scalar>& v,
                               const AttentionLayout& layout, int heads) {
  const Eigen::Index d = q.cols();
  detail::CheckShape(k.cols() == d && v.cols() == d, "attention", "Q/K/V widths differ");
  detail::CheckShape(heads > 0 && d % heads == 0, "attention", "width not divisible by heads");
  detail::CheckShape(q.rows() == static_cast<Eigen::Index>(layout.batch) * layout.q_stride &&
                         k.rows() == static_cast<Eigen::Index>(layout.batch) * layout.k_stride && v.rows() == k.rows(),
                     "attention", "row counts disagree with layout");
  detail::CheckShape(static_cast<int>(layout.q_len.size()) == layout.batch &&
                         static_cast<int>(layout.k_len.size()) == layout.batch,
                     "attention", "length vectors disagree with batch");
  const Eigen::Index dh = d / heads;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  const Matrix<Scalar>& qv = q.value();
  const Matrix<Scalar>& kv = k.value();
  const Matrix<Scalar>& vv = v.value();

  Matrix<Scalar> out = Matrix<Scalar>::Zero(qv.rows(), d);
  auto probs = std::make_shared<std::vector<Matrix<Scalar>>>();
  probs->reserve(static_cast<std::size_t>(layout.batch * heads));
  for (int b = 0; b < layout.batch; ++b) {
    const Eigen::Index q0 = static_cast<Eigen::Index>(b) * layout.q_stride;
    const Eigen::Index k0 = static_cast<Eigen::Index>(b) * layout.k_stride;
    const Eigen::Index ql = layout.q_len[static_cast<std::size_t>(b)];
    const Eigen::Index kl = layout.k_len[static_cast<std::size_t>(b)];
    detail::CheckShape(ql >= 0 && ql <= layout.q_stride && kl >= 1 && kl <= layout.k_stride, "attention",
                       "sequence length outside stride");
    detail::CheckShape(!layout.causal || ql <= kl, "attention", "causal mask needs q_len <= k_len");
    for (int h = 0; h < heads; ++h) {
      const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dh;
      Matrix<Scalar> s = (qv.block(q0, c0, ql, dh) * kv.block(k0, c0, kl, dh).transpose()) * scale;
      if (layout.causal) {
        for (Eigen::Index i = 0; i < ql; ++i) {
          for (Eigen::Index j = i + 1; j < kl; ++j) s(i, j) = -std::numeric_limits<Scalar>::infinity();
        }
      }
      Matrix<Scalar> p = SoftmaxRowsKernel(s);
      out.block(q0, c0, ql, dh).noalias() = p * vv.block(k0, c0, kl, dh);
      probs->push_back(std::move(p));
    }
  }

  const std::size_t iq = q.id, ik = k.id, iv = v.id;
  return q.tape->Push(
      std::move(out), detail::AnyNeeds(q, k, v),
      [iq, ik, iv, layout, heads, dh, scale, probs](Tape<Scalar>& t, const Matrix<Scalar>& g) {
        const bool need_q = t.requires_grad(iq), need_k = t.requires_grad(ik), need_v = t.requires_grad(iv);
        const Matrix<Scalar>& qv = t.value(iq);
        const Matrix<Scalar>& kv = t.value(ik);
        const Matrix<Scalar>& vv = t.value(iv);
        std::size_t slot = 0;
        for (int b = 0; b < layout.batch; ++b) {
          const Eigen::Index q0 = static_cast<Eigen::Index>(b) * layout.q_stride;
          const Eigen::Index k0 = static_cast<Eigen::Index>(b) * layout.k_stride;
          const Eigen::Index ql = layout.q_len[static_cast<std::size_t>(b)];
          const Eigen::Index kl = layout.k_len[static_cast<std::size_t>(b)];
          for (int h = 0; h < heads; ++h, ++slot) {
            const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dh;
            const Matrix<Scalar>& p = (*probs)[slot];
            const Matrix<Scalar> go = g.block(q0, c0, ql, dh);
            if (need_v) t.grad(iv).block(k0, c0, kl, dh).noalias() += p.transpose() * go;
            if (!need_q && !need_k) continue;
            const Matrix<Scalar> dp = go * vv.block(k0, c0, kl, dh).transpose();
            const auto rowdot = dp.cwiseProduct(p).rowwise().sum().eval();
            const Matrix<Scalar> ds = (p.array() * (dp.colwise() - rowdot).array()).matrix() * scale;
            if (need_q) t.grad(iq).block(q0, c0, ql, dh).noalias() += ds * kv.block(k0, c0, kl, dh);
            if (need_k) t.grad(ik).block(k0, c0, kl, dh).noalias() += ds.transpose() * qv.block(q0, c0, ql, dh);
          }
        }
      });
}

}  // namespace mercatran::nn

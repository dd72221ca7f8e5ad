// Copyright 2026 The CauScale Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Attention cores over x[R, C, d] with d = heads * head_dim. Both attend along
// C. The tied core sums logits over the R slices so that one map per head,
// H x C x C, serves every slice:
//
//   A[h, i, j] = scale * sum_r sum_t Q[r, i, h, t] K[r, j, h, t]
//   O[r, i, h] = sum_j softmax_j(A[h, i, :]) V[r, j, h]
//
// The vanilla core keeps a separate map per slice (R x H x C x C) and exists
// for cost comparisons.

#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "causcale/autodiff.hpp"
#include "causcale/counters.hpp"

namespace causcale {

using ad::Var;

namespace detail {

/// Copies head h of x[R, C, d] into a C x (R * dh) row-major block.
inline void gather_head(const Tensor& x, std::size_t R, std::size_t C, std::size_t d, std::size_t dh, std::size_t h,
                        std::vector<double>& out) {
  out.resize(C * R * dh);
  const double* src = x.ptr();
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c)
      std::copy_n(src + (r * C + c) * d + h * dh, dh, out.data() + c * R * dh + r * dh);
}

inline void scatter_add_head(double* dst, std::size_t R, std::size_t C, std::size_t d, std::size_t dh, std::size_t h,
                             const double* block) {
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) {
      double* o = dst + (r * C + c) * d + h * dh;
      const double* s = block + c * R * dh + r * dh;
      for (std::size_t t = 0; t < dh; ++t) o[t] += s[t];
    }
}

inline void softmax_rows(ad::RowMat& a) {
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    auto row = a.row(i);
    const double mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
}

/// dA = P * (dP - rowsum(dP * P)), in place on dP.
inline void softmax_rows_backward(const ad::RowMat& p, ad::RowMat& dp) {
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double dot = p.row(i).dot(dp.row(i));
    dp.row(i) = p.row(i).array() * (dp.row(i).array() - dot);
  }
}

inline void check_qkv(const Var& q, const Var& k, const Var& v, std::size_t heads) {
  if (q.rank() != 3 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw DimensionError("attention: Q " + shape_str(q.shape()) + ", K " + shape_str(k.shape()) + ", V " +
                         shape_str(v.shape()) + " must be equal [R, C, d]");
  }
  if (heads == 0 || q.dim(2) % heads != 0) {
    throw DimensionError("attention: d = " + std::to_string(q.dim(2)) + " is not divisible by H = " +
                         std::to_string(heads));
  }
}

}  // namespace detail

inline Var tied_attention_core(const Var& q, const Var& k, const Var& v, std::size_t heads, double scale,
                               AttentionAxis axis) {
  detail::check_qkv(q, k, v, heads);
  const std::size_t R = q.dim(0), C = q.dim(1), d = q.dim(2), dh = d / heads;
  const auto Ci = static_cast<Eigen::Index>(C);
  const auto RDi = static_cast<Eigen::Index>(R * dh);

  auto maps = std::make_shared<std::vector<ad::RowMat>>(heads);
  Tensor out(q.shape());
  std::vector<double> qh, kh, vh;
  ad::RowMat oh(Ci, RDi);
  for (std::size_t h = 0; h < heads; ++h) {
    detail::gather_head(q.value(), R, C, d, dh, h, qh);
    detail::gather_head(k.value(), R, C, d, dh, h, kh);
    detail::gather_head(v.value(), R, C, d, dh, h, vh);
    ad::ConstMatMap Q(qh.data(), Ci, RDi), K(kh.data(), Ci, RDi), V(vh.data(), Ci, RDi);
    ad::RowMat& P = (*maps)[h];
    P.noalias() = scale * (Q * K.transpose());
    detail::softmax_rows(P);
    oh.noalias() = P * V;
    detail::scatter_add_head(out.ptr(), R, C, d, dh, h, oh.data());
  }
  if (auto* c = counters()) {
    c->record_attention_map(static_cast<std::uint64_t>(heads) * C * C);
    c->add_attention(axis, 4ULL * C * C * R * d);
  }

  return ad::detail::make_op("tied_attention", std::move(out), {q, k, v}, [=](ad::Node& self) {
    std::vector<double> qb, kb, vb, gb;
    ad::RowMat dq, dk, dv, dp;
    const bool gq = ad::detail::wants_grad(self, 0), gk = ad::detail::wants_grad(self, 1),
               gv = ad::detail::wants_grad(self, 2);
    for (std::size_t h = 0; h < heads; ++h) {
      detail::gather_head(self.parents[0]->value, R, C, d, dh, h, qb);
      detail::gather_head(self.parents[1]->value, R, C, d, dh, h, kb);
      detail::gather_head(self.parents[2]->value, R, C, d, dh, h, vb);
      detail::gather_head(self.grad, R, C, d, dh, h, gb);
      ad::ConstMatMap Q(qb.data(), Ci, RDi), K(kb.data(), Ci, RDi), V(vb.data(), Ci, RDi), dO(gb.data(), Ci, RDi);
      const ad::RowMat& P = (*maps)[h];
      if (gv) {
        dv.noalias() = P.transpose() * dO;
        detail::scatter_add_head(self.parents[2]->grad_buffer().ptr(), R, C, d, dh, h, dv.data());
      }
      if (!gq && !gk) continue;
      dp.noalias() = dO * V.transpose();
      detail::softmax_rows_backward(P, dp);
      if (gq) {
        dq.noalias() = scale * (dp * K);
        detail::scatter_add_head(self.parents[0]->grad_buffer().ptr(), R, C, d, dh, h, dq.data());
      }
      if (gk) {
        dk.noalias() = scale * (dp.transpose() * Q);
        detail::scatter_add_head(self.parents[1]->grad_buffer().ptr(), R, C, d, dh, h, dk.data());
      }
    }
  });
}

/// Per-slice attention maps; each slice r attends independently.
inline Var vanilla_attention_core(const Var& q, const Var& k, const Var& v, std::size_t heads, double scale,
                                  AttentionAxis axis) {
  detail::check_qkv(q, k, v, heads);
  const std::size_t R = q.dim(0), C = q.dim(1), d = q.dim(2), dh = d / heads;
  const auto Ci = static_cast<Eigen::Index>(C);
  const auto Di = static_cast<Eigen::Index>(dh);
  const auto stride = Eigen::OuterStride<>(static_cast<Eigen::Index>(d));
  using StridedConst = Eigen::Map<const ad::RowMat, 0, Eigen::OuterStride<>>;
  using Strided = Eigen::Map<ad::RowMat, 0, Eigen::OuterStride<>>;

  auto maps = std::make_shared<std::vector<ad::RowMat>>(R * heads);
  Tensor out(q.shape());
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = r * C * d + h * dh;
      StridedConst Q(q.value().ptr() + off, Ci, Di, stride), K(k.value().ptr() + off, Ci, Di, stride),
          V(v.value().ptr() + off, Ci, Di, stride);
      ad::RowMat& P = (*maps)[r * heads + h];
      P.noalias() = scale * (Q * K.transpose());
      detail::softmax_rows(P);
      Strided(out.ptr() + off, Ci, Di, stride).noalias() = P * V;
    }
  }
  if (auto* c = counters()) {
    c->record_attention_map(static_cast<std::uint64_t>(R) * heads * C * C);
    c->add_attention(axis, 4ULL * C * C * R * d);
  }

  return ad::detail::make_op("vanilla_attention", std::move(out), {q, k, v}, [=](ad::Node& self) {
    ad::RowMat dp;
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = r * C * d + h * dh;
        StridedConst Q(self.parents[0]->value.ptr() + off, Ci, Di, stride),
            K(self.parents[1]->value.ptr() + off, Ci, Di, stride), V(self.parents[2]->value.ptr() + off, Ci, Di, stride),
            dO(self.grad.ptr() + off, Ci, Di, stride);
        const ad::RowMat& P = (*maps)[r * heads + h];
        if (ad::detail::wants_grad(self, 2)) {
          Strided(self.parents[2]->grad_buffer().ptr() + off, Ci, Di, stride).noalias() += P.transpose() * dO;
        }
        dp.noalias() = dO * V.transpose();
        detail::softmax_rows_backward(P, dp);
        if (ad::detail::wants_grad(self, 0)) {
          Strided(self.parents[0]->grad_buffer().ptr() + off, Ci, Di, stride).noalias() += scale * (dp * K);
        }
        if (ad::detail::wants_grad(self, 1)) {
          Strided(self.parents[1]->grad_buffer().ptr() + off, Ci, Di, stride).noalias() +=
              scale * (dp.transpose() * Q);
        }
      }
    }
  });
}

}  // namespace causcale

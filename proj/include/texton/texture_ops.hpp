#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "texton/ops.hpp"

// Fused kernels for the texture encodings: RBF soft-binned histograms and
// residual encoding with soft assignments. Both have hand-derived backward
// passes; the gradient-check suite exercises them against central
// differences.

namespace texton::ops {

namespace detail {

template <typename S>
using StridedConstMap =
    Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>, 0, Eigen::InnerStride<>>;
template <typename S>
using StridedMap =
    Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>, 0, Eigen::InnerStride<>>;

}  // namespace detail

// Soft histogram: x:[N,R,H,W], centers:[R,B], width_raw:[R,B] -> [N,R*B].
// Each value contributes exp(-((v - mu_b) / w_b)^2) to bin b of its channel,
// with w_b = exp(width_raw_b) kept positive by construction; bin counts are
// averaged over the spatial extent. With `normalize` set, per-position
// memberships are divided by their sum across bins first.
template <typename S>
Tensor<S> rbf_histogram(Tape<S>& tape, const Tensor<S>& x, const Tensor<S>& centers,
                        const Tensor<S>& width_raw, bool normalize) {
  detail::check_rank4("rbf_histogram", x);
  if (centers.rank() != 2 || width_raw.shape() != centers.shape())
    throw ShapeError("rbf_histogram: centers " + shape_str(centers.shape()) +
                     " and widths " + shape_str(width_raw.shape()) +
                     " must both be [channels x bins]");
  const Index n = x.dim(0), r = x.dim(1), hw = x.dim(2) * x.dim(3);
  const Index b = centers.dim(1);
  if (centers.dim(0) != r)
    throw ShapeError("rbf_histogram: input has " + std::to_string(r) +
                     " channels but centers cover " + std::to_string(centers.dim(0)));
  if (hw == 0) throw ShapeError("rbf_histogram: empty spatial extent");

  const S tiny = S(1e-12);  // keeps normalized mode finite far from all centers
  Tensor<S> out = Tensor<S>::zeros({n, r * b});
  ArrayX<S> inv_w2(r * b);
  inv_w2 = (S(-2) * width_raw.value()).exp();  // 1 / w^2
  const S inv_hw = S(1) / static_cast<S>(hw);

  ArrayX<S> memb(b);
  for (Index i = 0; i < n; ++i)
    for (Index ch = 0; ch < r; ++ch) {
      const S* xp = x.value().data() + (i * r + ch) * hw;
      const auto mu = centers.value().segment(ch * b, b);
      const auto iw2 = inv_w2.segment(ch * b, b);
      auto acc = out.value().segment(i * r * b + ch * b, b);
      for (Index p = 0; p < hw; ++p) {
        memb = (-(xp[p] - mu).square() * iw2).exp();
        if (normalize) memb /= memb.sum() + tiny;
        acc += memb;
      }
      acc *= inv_hw;
    }

  if (detail::track(tape, x, centers, width_raw)) {
    out.set_requires_grad(true);
    tape.record([xn = x.node(), cn = centers.node(), wn = width_raw.node(),
                 on = out.node(), inv_w2 = std::move(inv_w2), n, r, b, hw, inv_hw,
                 normalize, tiny] {
      ArrayX<S> memb(b), q(b), dv_coef(b);
      for (Index i = 0; i < n; ++i)
        for (Index ch = 0; ch < r; ++ch) {
          const S* xp = xn->value.data() + (i * r + ch) * hw;
          const auto mu = cn->value.segment(ch * b, b);
          const auto iw2 = inv_w2.segment(ch * b, b);
          const auto g = on->grad.segment(i * r * b + ch * b, b);
          for (Index p = 0; p < hw; ++p) {
            const S v = xp[p];
            memb = (-(v - mu).square() * iw2).exp();
            if (normalize) {
              const S total = memb.sum() + tiny;
              // q = dL/dm for the pre-normalization memberships
              const S mix = (g * memb).sum() / (total * total);
              q = (g / total - mix) * inv_hw;
            } else {
              q = g * inv_hw;
            }
            // dm/dv = m * (-2 (v - mu) / w^2); dm/dmu is its negation and
            // dm/draw = m * 2 (v - mu)^2 / w^2 via w = exp(raw).
            dv_coef = q * memb * S(2) * (v - mu) * iw2;
            if (xn->requires_grad)
              xn->grad[(i * r + ch) * hw + p] -= dv_coef.sum();
            if (cn->requires_grad)
              cn->grad.segment(ch * b, b) += dv_coef;
            if (wn->requires_grad)
              wn->grad.segment(ch * b, b) += dv_coef * (v - mu);
          }
        }
    });
  }
  return out;
}

// Residual encoding: x:[N,C,H,W], codewords:[K,C], smoothing:[K] -> [N,K*C].
// Every spatial descriptor is softly assigned to the codewords with weights
// softmax_k(-s_k * ||v - c_k||^2) and its residuals v - c_k are aggregated
// under those weights.
template <typename S>
Tensor<S> encoding_aggregate(Tape<S>& tape, const Tensor<S>& x,
                             const Tensor<S>& codewords, const Tensor<S>& smoothing) {
  detail::check_rank4("encoding_aggregate", x);
  if (codewords.rank() != 2)
    throw ShapeError("encoding_aggregate: expected rank-2 codewords, got " +
                     shape_str(codewords.shape()));
  const Index n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const Index k = codewords.dim(0);
  if (codewords.dim(1) != c)
    throw ShapeError("encoding_aggregate: input has " + std::to_string(c) +
                     " channels but codewords have " + std::to_string(codewords.dim(1)));
  if (smoothing.numel() != k)
    throw ShapeError("encoding_aggregate: smoothing length " +
                     std::to_string(smoothing.numel()) + " does not match " +
                     std::to_string(k) + " codewords");
  if (hw == 0) throw ShapeError("encoding_aggregate: empty spatial extent");

  Tensor<S> out = Tensor<S>::zeros({n, k * c});
  ArrayX<S> assign(n * hw * k);  // cached soft assignments for backward
  ArrayX<S> d2(k), logit(k), a(k);
  for (Index i = 0; i < n; ++i) {
    const S* xs = x.value().data() + i * c * hw;
    for (Index p = 0; p < hw; ++p) {
      detail::StridedConstMap<S> v(xs + p, c, Eigen::InnerStride<>(hw));
      for (Index kk = 0; kk < k; ++kk)
        d2[kk] = (v - codewords.value().segment(kk * c, c)).square().sum();
      logit = -smoothing.value() * d2;
      a = (logit - logit.maxCoeff()).exp();
      a /= a.sum();
      assign.segment((i * hw + p) * k, k) = a;
      for (Index kk = 0; kk < k; ++kk)
        out.value().segment(i * k * c + kk * c, c) +=
            a[kk] * (v - codewords.value().segment(kk * c, c));
    }
  }

  if (detail::track(tape, x, codewords, smoothing)) {
    out.set_requires_grad(true);
    tape.record([xn = x.node(), cn = codewords.node(), sn = smoothing.node(),
                 on = out.node(), assign = std::move(assign), n, c, hw, k] {
      ArrayX<S> g_a(k), g_l(k), g_d2(k), d2(k), resid(c);
      for (Index i = 0; i < n; ++i) {
        const S* xs = xn->value.data() + i * c * hw;
        for (Index p = 0; p < hw; ++p) {
          detail::StridedConstMap<S> v(xs + p, c, Eigen::InnerStride<>(hw));
          const auto a = assign.segment((i * hw + p) * k, k);
          for (Index kk = 0; kk < k; ++kk) {
            const auto g = on->grad.segment(i * k * c + kk * c, c);
            resid = v - cn->value.segment(kk * c, c);
            d2[kk] = resid.square().sum();
            g_a[kk] = (g * resid).sum();
            // Residual path, direct in v and the codeword.
            if (xn->requires_grad) {
              detail::StridedMap<S> dv(xn->grad.data() + i * c * hw + p, c,
                                       Eigen::InnerStride<>(hw));
              dv += a[kk] * g;
            }
            if (cn->requires_grad)
              cn->grad.segment(kk * c, c) -= a[kk] * g;
          }
          // Assignment path through the softmax and squared distances.
          const S mix = (a * g_a).sum();
          g_l = a * (g_a - mix);
          g_d2 = -sn->value * g_l;
          if (sn->requires_grad) sn->grad -= d2 * g_l;
          for (Index kk = 0; kk < k; ++kk) {
            resid = v - cn->value.segment(kk * c, c);
            if (xn->requires_grad) {
              detail::StridedMap<S> dv(xn->grad.data() + i * c * hw + p, c,
                                       Eigen::InnerStride<>(hw));
              dv += S(2) * g_d2[kk] * resid;
            }
            if (cn->requires_grad)
              cn->grad.segment(kk * c, c) -= S(2) * g_d2[kk] * resid;
          }
        }
      }
    });
  }
  return out;
}

// Forward-only soft assignments, [N, H*W, K]; used by diagnostics and the
// invariant tests.
template <typename S>
Tensor<S> encoding_assignments(const Tensor<S>& x, const Tensor<S>& codewords,
                               const Tensor<S>& smoothing) {
  detail::check_rank4("encoding_assignments", x);
  const Index n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const Index k = codewords.dim(0);
  if (codewords.rank() != 2 || codewords.dim(1) != c || smoothing.numel() != k)
    throw ShapeError("encoding_assignments: inconsistent codeword shapes");
  Tensor<S> out = Tensor<S>::empty({n, hw, k});
  ArrayX<S> d2(k), logit(k), a(k);
  for (Index i = 0; i < n; ++i) {
    const S* xs = x.value().data() + i * c * hw;
    for (Index p = 0; p < hw; ++p) {
      detail::StridedConstMap<S> v(xs + p, c, Eigen::InnerStride<>(hw));
      for (Index kk = 0; kk < k; ++kk)
        d2[kk] = (v - codewords.value().segment(kk * c, c)).square().sum();
      logit = -smoothing.value() * d2;
      a = (logit - logit.maxCoeff()).exp();
      out.value().segment((i * hw + p) * k, k) = a / a.sum();
    }
  }
  return out;
}

}  // namespace texton::ops

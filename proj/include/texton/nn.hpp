#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "texton/ops.hpp"

// Network ops: dense/convolutional GEMM kernels, pooling, resizing,
// normalization and the classification loss.

namespace texton::ops {

namespace detail {

template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatCM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using MapRM = Eigen::Map<MatRM<S>>;
template <typename S>
using CMapRM = Eigen::Map<const MatRM<S>>;

// Gather one sample's receptive fields into a (C*KH*KW) x (Ho*Wo) matrix.
// Row index runs over (c, ky, kx) in the same order as the kernel layout,
// so the convolution reduces to one GEMM per sample.
template <typename S>
void im2col(const S* x, Index c, Index h, Index w, Index kh, Index kw,
            Index stride, Index pad, Index out_h, Index out_w, MatCM<S>& cols) {
  cols.resize(c * kh * kw, out_h * out_w);
  for (Index oy = 0; oy < out_h; ++oy)
    for (Index ox = 0; ox < out_w; ++ox) {
      S* col = cols.data() + (oy * out_w + ox) * cols.rows();
      for (Index ch = 0; ch < c; ++ch)
        for (Index ky = 0; ky < kh; ++ky) {
          const Index iy = oy * stride + ky - pad;
          for (Index kx = 0; kx < kw; ++kx) {
            const Index ix = ox * stride + kx - pad;
            *col++ = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                         ? x[(ch * h + iy) * w + ix]
                         : S(0);
          }
        }
    }
}

// Scatter-add the columns back onto the padded input (adjoint of im2col).
template <typename S>
void col2im_add(const MatCM<S>& cols, Index c, Index h, Index w, Index kh,
                Index kw, Index stride, Index pad, Index out_h, Index out_w,
                S* dx) {
  for (Index oy = 0; oy < out_h; ++oy)
    for (Index ox = 0; ox < out_w; ++ox) {
      const S* col = cols.data() + (oy * out_w + ox) * cols.rows();
      for (Index ch = 0; ch < c; ++ch)
        for (Index ky = 0; ky < kh; ++ky) {
          const Index iy = oy * stride + ky - pad;
          for (Index kx = 0; kx < kw; ++kx) {
            const Index ix = ox * stride + kx - pad;
            if (iy >= 0 && iy < h && ix >= 0 && ix < w)
              dx[(ch * h + iy) * w + ix] += *col;
            ++col;
          }
        }
    }
}

}  // namespace detail

// y = x * w + b with x:[N,D], w:[D,O], b:[O].
template <typename S>
Tensor<S> linear(Tape<S>& tape, const Tensor<S>& x, const Tensor<S>& w,
                 const Tensor<S>& b) {
  if (x.rank() != 2 || w.rank() != 2)
    throw ShapeError("linear: expected rank-2 input and weight, got " +
                     shape_str(x.shape()) + " and " + shape_str(w.shape()));
  const Index n = x.dim(0), d = x.dim(1), o = w.dim(1);
  if (w.dim(0) != d)
    throw ShapeError("linear: input width " + std::to_string(d) +
                     " does not match weight rows " + std::to_string(w.dim(0)));
  if (b.numel() != o)
    throw ShapeError("linear: bias length " + std::to_string(b.numel()) +
                     " does not match output width " + std::to_string(o));
  Tensor<S> out = Tensor<S>::empty({n, o});
  detail::CMapRM<S> xm(x.value().data(), n, d);
  detail::CMapRM<S> wm(w.value().data(), d, o);
  detail::MapRM<S> ym(out.value().data(), n, o);
  ym.noalias() = xm * wm;
  ym.rowwise() += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(
      b.value().data(), o);
  if (detail::track(tape, x, w, b)) {
    out.set_requires_grad(true);
    tape.record([xn = x.node(), wn = w.node(), bn = b.node(), on = out.node(), n,
                 d, o] {
      detail::CMapRM<S> gm(on->grad.data(), n, o);
      if (xn->requires_grad) {
        detail::CMapRM<S> wm(wn->value.data(), d, o);
        detail::MapRM<S>(xn->grad.data(), n, d).noalias() += gm * wm.transpose();
      }
      if (wn->requires_grad) {
        detail::CMapRM<S> xm(xn->value.data(), n, d);
        detail::MapRM<S>(wn->grad.data(), d, o).noalias() += xm.transpose() * gm;
      }
      if (bn->requires_grad)
        Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(bn->grad.data(), o) +=
            gm.colwise().sum();
    });
  }
  return out;
}

// 2-d convolution, x:[N,C,H,W], w:[F,C,KH,KW], b:[F]. im2col plus GEMM;
// the backward pass rebuilds each sample's column matrix instead of
// caching all of them.
template <typename S>
Tensor<S> conv2d(Tape<S>& tape, const Tensor<S>& x, const Tensor<S>& w,
                 const Tensor<S>& b, Index stride, Index pad) {
  detail::check_rank4("conv2d", x);
  detail::check_rank4("conv2d weight", w);
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const Index f = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != c)
    throw ShapeError("conv2d: input has " + std::to_string(c) +
                     " channels but kernel expects " + std::to_string(w.dim(1)));
  if (b.numel() != f)
    throw ShapeError("conv2d: bias length " + std::to_string(b.numel()) +
                     " does not match filter count " + std::to_string(f));
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (pad < 0) throw std::invalid_argument("conv2d: negative padding");
  const Index out_h = (h + 2 * pad - kh) / stride + 1;
  const Index out_w = (wd + 2 * pad - kw) / stride + 1;
  if (kh > h + 2 * pad || kw > wd + 2 * pad || out_h < 1 || out_w < 1)
    throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" +
                     std::to_string(kw) + " exceeds padded input " +
                     shape_str(x.shape()));
  const Index p = out_h * out_w, ckk = c * kh * kw;

  Tensor<S> out = Tensor<S>::empty({n, f, out_h, out_w});
  detail::CMapRM<S> wm(w.value().data(), f, ckk);
  detail::MatCM<S> cols;
  for (Index i = 0; i < n; ++i) {
    detail::im2col(x.value().data() + i * c * h * wd, c, h, wd, kh, kw, stride,
                   pad, out_h, out_w, cols);
    detail::MapRM<S> ym(out.value().data() + i * f * p, f, p);
    ym.noalias() = wm * cols;
    ym.colwise() += Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(
        b.value().data(), f);
  }

  if (detail::track(tape, x, w, b)) {
    out.set_requires_grad(true);
    tape.record([xn = x.node(), wn = w.node(), bn = b.node(), on = out.node(), n,
                 c, h, wd, f, kh, kw, stride, pad, out_h, out_w, p, ckk] {
      detail::MatCM<S> cols;
      for (Index i = 0; i < n; ++i) {
        detail::CMapRM<S> gm(on->grad.data() + i * f * p, f, p);
        if (wn->requires_grad || xn->requires_grad)
          detail::im2col(xn->value.data() + i * c * h * wd, c, h, wd, kh, kw,
                         stride, pad, out_h, out_w, cols);
        if (wn->requires_grad)
          detail::MapRM<S>(wn->grad.data(), f, ckk).noalias() +=
              gm * cols.transpose();
        if (bn->requires_grad)
          Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>(bn->grad.data(), f) +=
              gm.rowwise().sum();
        if (xn->requires_grad) {
          detail::CMapRM<S> wm(wn->value.data(), f, ckk);
          detail::MatCM<S> dcols = wm.transpose() * gm;
          detail::col2im_add(dcols, c, h, wd, kh, kw, stride, pad, out_h, out_w,
                             xn->grad.data() + i * c * h * wd);
        }
      }
    });
  }
  return out;
}

// Grouped 1x1 convolution, x:[N,C,H,W], w:[R,C/groups], b:[R]. Channels and
// filters are split into `groups` contiguous bands that only mix within a
// band.
template <typename S>
Tensor<S> pointwise_conv_grouped(Tape<S>& tape, const Tensor<S>& x,
                                 const Tensor<S>& w, const Tensor<S>& b,
                                 Index groups) {
  detail::check_rank4("pointwise_conv_grouped", x);
  const Index n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (w.rank() != 2)
    throw ShapeError("pointwise_conv_grouped: expected rank-2 weight, got " +
                     shape_str(w.shape()));
  const Index r = w.dim(0);
  if (groups < 1 || c % groups != 0 || r % groups != 0)
    throw ShapeError("pointwise_conv_grouped: groups " + std::to_string(groups) +
                     " must divide channels " + std::to_string(c) +
                     " and filters " + std::to_string(r));
  const Index cg = c / groups, rg = r / groups;
  if (w.dim(1) != cg)
    throw ShapeError("pointwise_conv_grouped: weight width " +
                     std::to_string(w.dim(1)) + " does not match channels per group " +
                     std::to_string(cg));
  if (b.numel() != r)
    throw ShapeError("pointwise_conv_grouped: bias length " +
                     std::to_string(b.numel()) + " does not match filter count " +
                     std::to_string(r));

  Tensor<S> out = Tensor<S>::empty({n, r, x.dim(2), x.dim(3)});
  detail::CMapRM<S> wm(w.value().data(), r, cg);
  for (Index i = 0; i < n; ++i) {
    detail::CMapRM<S> xm(x.value().data() + i * c * hw, c, hw);
    detail::MapRM<S> ym(out.value().data() + i * r * hw, r, hw);
    for (Index g = 0; g < groups; ++g)
      ym.middleRows(g * rg, rg).noalias() =
          wm.middleRows(g * rg, rg) * xm.middleRows(g * cg, cg);
    ym.colwise() += Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(
        b.value().data(), r);
  }

  if (detail::track(tape, x, w, b)) {
    out.set_requires_grad(true);
    tape.record([xn = x.node(), wn = w.node(), bn = b.node(), on = out.node(), n,
                 c, hw, r, cg, rg, groups] {
      detail::CMapRM<S> wm(wn->value.data(), r, cg);
      for (Index i = 0; i < n; ++i) {
        detail::CMapRM<S> gm(on->grad.data() + i * r * hw, r, hw);
        detail::CMapRM<S> xm(xn->value.data() + i * c * hw, c, hw);
        if (wn->requires_grad) {
          detail::MapRM<S> dwm(wn->grad.data(), r, cg);
          for (Index g = 0; g < groups; ++g)
            dwm.middleRows(g * rg, rg).noalias() +=
                gm.middleRows(g * rg, rg) * xm.middleRows(g * cg, cg).transpose();
        }
        if (xn->requires_grad) {
          detail::MapRM<S> dxm(xn->grad.data() + i * c * hw, c, hw);
          for (Index g = 0; g < groups; ++g)
            dxm.middleRows(g * cg, cg).noalias() +=
                wm.middleRows(g * rg, rg).transpose() * gm.middleRows(g * rg, rg);
        }
        if (bn->requires_grad)
          Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>(bn->grad.data(), r) +=
              gm.rowwise().sum();
      }
    });
  }
  return out;
}

// Average pooling without padding; output extent floor((H-k)/s)+1.
template <typename S>
Tensor<S> avg_pool2d(Tape<S>& tape, const Tensor<S>& x, Index k, Index stride) {
  detail::check_rank4("avg_pool2d", x);
  if (k < 1 || stride < 1)
    throw std::invalid_argument("avg_pool2d: kernel and stride must be >= 1");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (k > h || k > w)
    throw ShapeError("avg_pool2d: kernel " + std::to_string(k) +
                     " exceeds input " + shape_str(x.shape()));
  const Index out_h = (h - k) / stride + 1, out_w = (w - k) / stride + 1;
  Tensor<S> out = Tensor<S>::empty({n, c, out_h, out_w});
  const S inv = S(1) / static_cast<S>(k * k);
  for (Index i = 0; i < n * c; ++i) {
    const S* xp = x.value().data() + i * h * w;
    S* yp = out.value().data() + i * out_h * out_w;
    for (Index oy = 0; oy < out_h; ++oy)
      for (Index ox = 0; ox < out_w; ++ox) {
        S acc = 0;
        for (Index ky = 0; ky < k; ++ky)
          for (Index kx = 0; kx < k; ++kx)
            acc += xp[(oy * stride + ky) * w + ox * stride + kx];
        yp[oy * out_w + ox] = acc * inv;
      }
  }
  if (detail::track(tape, x)) {
    out.set_requires_grad(true);
    tape.record([xn = x.node(), on = out.node(), n, c, h, w, k, stride, out_h,
                 out_w, inv] {
      for (Index i = 0; i < n * c; ++i) {
        S* dxp = xn->grad.data() + i * h * w;
        const S* gp = on->grad.data() + i * out_h * out_w;
        for (Index oy = 0; oy < out_h; ++oy)
          for (Index ox = 0; ox < out_w; ++ox) {
            const S g = gp[oy * out_w + ox] * inv;
            for (Index ky = 0; ky < k; ++ky)
              for (Index kx = 0; kx < k; ++kx)
                dxp[(oy * stride + ky) * w + ox * stride + kx] += g;
          }
      }
    });
  }
  return out;
}

namespace detail {

// Shared kernel for non-overlapping cell max/min reductions. Gradient is
// routed to the winning element of each cell (first winner on ties).
template <typename S, typename Better>
Tensor<S> cell_extreme(Tape<S>& tape, const Tensor<S>& x, Index cell,
                       const char* opname, Better better) {
  check_rank4(opname, x);
  if (cell < 1) throw std::invalid_argument(std::string(opname) + ": cell must be >= 1");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % cell != 0 || w % cell != 0)
    throw ShapeError(std::string(opname) + ": cell " + std::to_string(cell) +
                     " does not tile input " + shape_str(x.shape()));
  const Index out_h = h / cell, out_w = w / cell;
  Tensor<S> out = Tensor<S>::empty({n, c, out_h, out_w});
  std::vector<Index> arg(static_cast<std::size_t>(n * c * out_h * out_w));
  for (Index i = 0; i < n * c; ++i) {
    const S* xp = x.value().data() + i * h * w;
    for (Index oy = 0; oy < out_h; ++oy)
      for (Index ox = 0; ox < out_w; ++ox) {
        Index best_idx = (oy * cell) * w + ox * cell;
        S best = xp[best_idx];
        for (Index ky = 0; ky < cell; ++ky)
          for (Index kx = 0; kx < cell; ++kx) {
            const Index idx = (oy * cell + ky) * w + ox * cell + kx;
            if (better(xp[idx], best)) {
              best = xp[idx];
              best_idx = idx;
            }
          }
        const Index o = (oy * out_w + ox);
        out.value()[i * out_h * out_w + o] = best;
        arg[static_cast<std::size_t>(i * out_h * out_w + o)] = i * h * w + best_idx;
      }
  }
  if (track(tape, x)) {
    out.set_requires_grad(true);
    tape.record([xn = x.node(), on = out.node(), arg = std::move(arg)] {
      for (Index i = 0; i < on->grad.size(); ++i)
        xn->grad[arg[static_cast<std::size_t>(i)]] += on->grad[i];
    });
  }
  return out;
}

}  // namespace detail

// Max over non-overlapping cell x cell tiles; cell must divide H and W.
template <typename S>
Tensor<S> cell_max(Tape<S>& tape, const Tensor<S>& x, Index cell) {
  return detail::cell_extreme(tape, x, cell, "cell_max",
                              [](S a, S b) { return a > b; });
}

template <typename S>
Tensor<S> cell_min(Tape<S>& tape, const Tensor<S>& x, Index cell) {
  return detail::cell_extreme(tape, x, cell, "cell_min",
                              [](S a, S b) { return a < b; });
}

namespace detail {

// Half-pixel source coordinate for bilinear resampling, with the sample
// clamped into the valid range.
inline void bilerp_taps(Index out_i, Index in_n, Index out_n, Index& i0,
                        Index& i1, double& t) {
  double src = (static_cast<double>(out_i) + 0.5) *
                   (static_cast<double>(in_n) / static_cast<double>(out_n)) -
               0.5;
  if (src < 0.0) src = 0.0;
  i0 = static_cast<Index>(src);
  if (i0 > in_n - 1) i0 = in_n - 1;
  i1 = std::min<Index>(i0 + 1, in_n - 1);
  t = src - static_cast<double>(i0);
}

}  // namespace detail

// Bilinear resampling to an arbitrary size (half-pixel centers). The map is
// linear in the pixel values, so the backward pass scatters the same four
// tap weights.
template <typename S>
Tensor<S> resize_bilinear(Tape<S>& tape, const Tensor<S>& x, Index out_h,
                          Index out_w) {
  detail::check_rank4("resize_bilinear", x);
  if (out_h < 1 || out_w < 1)
    throw std::invalid_argument("resize_bilinear: output extent must be >= 1");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<S> out = Tensor<S>::empty({n, c, out_h, out_w});
  for (Index i = 0; i < n * c; ++i) {
    const S* xp = x.value().data() + i * h * w;
    S* yp = out.value().data() + i * out_h * out_w;
    for (Index oy = 0; oy < out_h; ++oy) {
      Index y0, y1;
      double ty;
      detail::bilerp_taps(oy, h, out_h, y0, y1, ty);
      for (Index ox = 0; ox < out_w; ++ox) {
        Index x0, x1;
        double tx;
        detail::bilerp_taps(ox, w, out_w, x0, x1, tx);
        const double v = (1 - ty) * ((1 - tx) * xp[y0 * w + x0] + tx * xp[y0 * w + x1]) +
                         ty * ((1 - tx) * xp[y1 * w + x0] + tx * xp[y1 * w + x1]);
        yp[oy * out_w + ox] = static_cast<S>(v);
      }
    }
  }
  if (detail::track(tape, x)) {
    out.set_requires_grad(true);
    tape.record([xn = x.node(), on = out.node(), n, c, h, w, out_h, out_w] {
      for (Index i = 0; i < n * c; ++i) {
        S* dxp = xn->grad.data() + i * h * w;
        const S* gp = on->grad.data() + i * out_h * out_w;
        for (Index oy = 0; oy < out_h; ++oy) {
          Index y0, y1;
          double ty;
          detail::bilerp_taps(oy, h, out_h, y0, y1, ty);
          for (Index ox = 0; ox < out_w; ++ox) {
            Index x0, x1;
            double tx;
            detail::bilerp_taps(ox, w, out_w, x0, x1, tx);
            const S g = gp[oy * out_w + ox];
            dxp[y0 * w + x0] += static_cast<S>((1 - ty) * (1 - tx)) * g;
            dxp[y0 * w + x1] += static_cast<S>((1 - ty) * tx) * g;
            dxp[y1 * w + x0] += static_cast<S>(ty * (1 - tx)) * g;
            dxp[y1 * w + x1] += static_cast<S>(ty * tx) * g;
          }
        }
      }
    });
  }
  return out;
}

// Batch normalization over [N,C] or [N,C,H,W]. Training mode normalizes by
// batch statistics (biased variance) and updates the running buffers with
// the unbiased variance; evaluation mode uses the running buffers. The
// running buffers are plain arrays owned by the calling module, mutated as
// a forward side effect.
template <typename S>
Tensor<S> batch_norm(Tape<S>& tape, const Tensor<S>& x, const Tensor<S>& gamma,
                     const Tensor<S>& beta, ArrayX<S>& running_mean,
                     ArrayX<S>& running_var, bool training, S momentum = S(0.1),
                     S eps = S(1e-5)) {
  if (x.rank() != 2 && x.rank() != 4)
    throw ShapeError("batch_norm: expected rank-2 or rank-4 input, got " +
                     shape_str(x.shape()));
  const Index n = x.dim(0), c = x.dim(1);
  const Index hw = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  const Index m = n * hw;
  if (gamma.numel() != c || beta.numel() != c || running_mean.size() != c ||
      running_var.size() != c)
    throw ShapeError("batch_norm: scale/shift/running buffers must have length " +
                     std::to_string(c));
  if (training && m < 2)
    throw ShapeError("batch_norm: training mode needs at least 2 values per channel");

  ArrayX<S> mean_c(c), invstd_c(c);
  if (training) {
    for (Index ch = 0; ch < c; ++ch) {
      S s = 0, s2 = 0;
      for (Index i = 0; i < n; ++i) {
        auto seg = x.value().segment((i * c + ch) * hw, hw);
        s += seg.sum();
        s2 += seg.square().sum();
      }
      const S mu = s / static_cast<S>(m);
      S var = s2 / static_cast<S>(m) - mu * mu;
      if (var < S(0)) var = S(0);
      mean_c[ch] = mu;
      invstd_c[ch] = S(1) / std::sqrt(var + eps);
      const S unbiased = var * static_cast<S>(m) / static_cast<S>(m - 1);
      running_mean[ch] = (S(1) - momentum) * running_mean[ch] + momentum * mu;
      running_var[ch] = (S(1) - momentum) * running_var[ch] + momentum * unbiased;
    }
  } else {
    for (Index ch = 0; ch < c; ++ch) {
      mean_c[ch] = running_mean[ch];
      invstd_c[ch] = S(1) / std::sqrt(running_var[ch] + eps);
    }
  }

  Tensor<S> out = Tensor<S>::empty(x.shape());
  ArrayX<S> xhat(x.numel());
  for (Index i = 0; i < n; ++i)
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (i * c + ch) * hw;
      xhat.segment(off, hw) = (x.value().segment(off, hw) - mean_c[ch]) * invstd_c[ch];
      out.value().segment(off, hw) =
          xhat.segment(off, hw) * gamma.value()[ch] + beta.value()[ch];
    }

  if (detail::track(tape, x, gamma, beta)) {
    out.set_requires_grad(true);
    tape.record([xn = x.node(), gn = gamma.node(), bn = beta.node(),
                 on = out.node(), xhat = std::move(xhat),
                 invstd = std::move(invstd_c), n, c, hw, m, training] {
      for (Index ch = 0; ch < c; ++ch) {
        S sum_g = 0, sum_gx = 0;
        for (Index i = 0; i < n; ++i) {
          const Index off = (i * c + ch) * hw;
          sum_g += on->grad.segment(off, hw).sum();
          sum_gx += (on->grad.segment(off, hw) * xhat.segment(off, hw)).sum();
        }
        if (gn->requires_grad) gn->grad[ch] += sum_gx;
        if (bn->requires_grad) bn->grad[ch] += sum_g;
        if (xn->requires_grad) {
          const S k = gn->value[ch] * invstd[ch];
          for (Index i = 0; i < n; ++i) {
            const Index off = (i * c + ch) * hw;
            if (training)
              xn->grad.segment(off, hw) +=
                  k * (on->grad.segment(off, hw) - sum_g / static_cast<S>(m) -
                       xhat.segment(off, hw) * (sum_gx / static_cast<S>(m)));
            else
              xn->grad.segment(off, hw) += k * on->grad.segment(off, hw);
          }
        }
      }
    });
  }
  return out;
}

// Scale each row of [N,D] to unit Euclidean norm. Rows with norm below the
// guard are mapped to zero (and pass no gradient) instead of dividing by
// zero.
template <typename S>
Tensor<S> l2_normalize_rows(Tape<S>& tape, const Tensor<S>& x, S guard = S(1e-12)) {
  if (x.rank() != 2)
    throw ShapeError("l2_normalize_rows: expected rank-2 input, got " +
                     shape_str(x.shape()));
  const Index n = x.dim(0), d = x.dim(1);
  Tensor<S> out = Tensor<S>::empty({n, d});
  ArrayX<S> norms(n);
  for (Index i = 0; i < n; ++i) {
    const S nrm = std::sqrt(x.value().segment(i * d, d).square().sum());
    if (nrm < guard) {
      norms[i] = S(0);
      out.value().segment(i * d, d).setZero();
    } else {
      norms[i] = nrm;
      out.value().segment(i * d, d) = x.value().segment(i * d, d) / nrm;
    }
  }
  if (detail::track(tape, x)) {
    out.set_requires_grad(true);
    tape.record([xn = x.node(), on = out.node(), norms = std::move(norms), n, d] {
      for (Index i = 0; i < n; ++i) {
        if (norms[i] == S(0)) continue;
        const auto g = on->grad.segment(i * d, d);
        const auto y = on->value.segment(i * d, d);
        const S gy = (g * y).sum();
        xn->grad.segment(i * d, d) += (g - y * gy) / norms[i];
      }
    });
  }
  return out;
}

// Row-wise softmax over [N,C], stabilized by max subtraction.
template <typename S>
Tensor<S> softmax(Tape<S>& tape, const Tensor<S>& x) {
  if (x.rank() != 2)
    throw ShapeError("softmax: expected rank-2 input, got " + shape_str(x.shape()));
  const Index n = x.dim(0), c = x.dim(1);
  Tensor<S> out = Tensor<S>::empty({n, c});
  for (Index i = 0; i < n; ++i) {
    auto row = x.value().segment(i * c, c);
    ArrayX<S> e = (row - row.maxCoeff()).exp();
    out.value().segment(i * c, c) = e / e.sum();
  }
  if (detail::track(tape, x)) {
    out.set_requires_grad(true);
    tape.record([xn = x.node(), on = out.node(), n, c] {
      for (Index i = 0; i < n; ++i) {
        const auto p = on->value.segment(i * c, c);
        const auto g = on->grad.segment(i * c, c);
        const S gp = (g * p).sum();
        xn->grad.segment(i * c, c) += p * (g - gp);
      }
    });
  }
  return out;
}

// Mean cross-entropy over the batch, fused with softmax. logits:[N,C],
// labels in [0,C). Backward is (softmax - onehot) / N, numerically exact
// even for saturated logits.
template <typename S>
Tensor<S> softmax_cross_entropy(Tape<S>& tape, const Tensor<S>& logits,
                                const std::vector<int>& labels) {
  if (logits.rank() != 2)
    throw ShapeError("softmax_cross_entropy: expected rank-2 logits, got " +
                     shape_str(logits.shape()));
  const Index n = logits.dim(0), c = logits.dim(1);
  if (static_cast<Index>(labels.size()) != n)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(n) + " rows");
  for (int lbl : labels)
    if (lbl < 0 || lbl >= c)
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(lbl) +
                              " outside [0," + std::to_string(c) + ")");
  ArrayX<S> probs(n * c);
  S total = 0;
  for (Index i = 0; i < n; ++i) {
    auto row = logits.value().segment(i * c, c);
    const S mx = row.maxCoeff();
    ArrayX<S> z = row - mx;
    const S lse = std::log(z.exp().sum());
    probs.segment(i * c, c) = (z - lse).exp();
    total += lse - z[labels[static_cast<std::size_t>(i)]];
  }
  Tensor<S> out = Tensor<S>::scalar(total / static_cast<S>(n));
  if (detail::track(tape, logits)) {
    out.set_requires_grad(true);
    tape.record([ln = logits.node(), on = out.node(), probs = std::move(probs),
                 labels, n, c] {
      const S g = on->grad[0] / static_cast<S>(n);
      ln->grad += probs * g;
      for (Index i = 0; i < n; ++i)
        ln->grad[i * c + labels[static_cast<std::size_t>(i)]] -= g;
    });
  }
  return out;
}

// Batched outer product flattened per sample: a:[N,I], b:[N,J] -> [N,I*J].
template <typename S>
Tensor<S> bilinear_outer(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("bilinear_outer: expected rank-2 inputs, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  if (a.dim(0) != b.dim(0))
    throw ShapeError("bilinear_outer: batch mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  const Index n = a.dim(0), di = a.dim(1), dj = b.dim(1);
  Tensor<S> out = Tensor<S>::empty({n, di * dj});
  for (Index s = 0; s < n; ++s)
    for (Index i = 0; i < di; ++i)
      out.value().segment((s * di + i) * dj, dj) =
          a.value()[s * di + i] * b.value().segment(s * dj, dj);
  if (detail::track(tape, a, b)) {
    out.set_requires_grad(true);
    tape.record([an = a.node(), bn = b.node(), on = out.node(), n, di, dj] {
      for (Index s = 0; s < n; ++s)
        for (Index i = 0; i < di; ++i) {
          const auto g = on->grad.segment((s * di + i) * dj, dj);
          if (an->requires_grad)
            an->grad[s * di + i] += (g * bn->value.segment(s * dj, dj)).sum();
          if (bn->requires_grad)
            bn->grad.segment(s * dj, dj) += g * an->value[s * di + i];
        }
    });
  }
  return out;
}

}  // namespace texton::ops

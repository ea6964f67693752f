#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "texton/common.hpp"
#include "texton/tape.hpp"
#include "texton/tensor.hpp"

// Elementwise, reduction and shape ops. Every op validates shapes, computes
// the forward value eagerly, and (when recording and some input requires
// grad) pushes one backward closure onto the tape. Closures capture the
// shared nodes, so intermediate tensors stay alive until the tape is
// cleared.

namespace texton::ops {

namespace detail {

template <typename S>
void check_same_shape(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

template <typename S>
void check_rank4(const char* op, const Tensor<S>& x) {
  if (x.rank() != 4)
    throw ShapeError(std::string(op) + ": expected rank-4 input, got " +
                     shape_str(x.shape()));
}

template <typename S, typename... Ts>
bool track(const Tape<S>& tape, const Ts&... inputs) {
  return tape.recording() && (inputs.requires_grad() || ...);
}

template <typename S>
Tensor<S> make_out(Tape<S>& tape, Shape shape, bool needs_grad) {
  Tensor<S> out = Tensor<S>::empty(std::move(shape));
  if (needs_grad && tape.recording()) out.set_requires_grad(true);
  return out;
}

}  // namespace detail

template <typename S>
Tensor<S> add(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape("add", a, b);
  Tensor<S> out = Tensor<S>::empty(a.shape());
  out.value() = a.value() + b.value();
  if (detail::track(tape, a, b)) {
    out.set_requires_grad(true);
    tape.record([an = a.node(), bn = b.node(), on = out.node()] {
      if (an->requires_grad) an->grad += on->grad;
      if (bn->requires_grad) bn->grad += on->grad;
    });
  }
  return out;
}

template <typename S>
Tensor<S> sub(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape("sub", a, b);
  Tensor<S> out = Tensor<S>::empty(a.shape());
  out.value() = a.value() - b.value();
  if (detail::track(tape, a, b)) {
    out.set_requires_grad(true);
    tape.record([an = a.node(), bn = b.node(), on = out.node()] {
      if (an->requires_grad) an->grad += on->grad;
      if (bn->requires_grad) bn->grad -= on->grad;
    });
  }
  return out;
}

template <typename S>
Tensor<S> mul(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape("mul", a, b);
  Tensor<S> out = Tensor<S>::empty(a.shape());
  out.value() = a.value() * b.value();
  if (detail::track(tape, a, b)) {
    out.set_requires_grad(true);
    tape.record([an = a.node(), bn = b.node(), on = out.node()] {
      if (an->requires_grad) an->grad += on->grad * bn->value;
      if (bn->requires_grad) bn->grad += on->grad * an->value;
    });
  }
  return out;
}

template <typename S>
Tensor<S> div(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape("div", a, b);
  Tensor<S> out = Tensor<S>::empty(a.shape());
  out.value() = a.value() / b.value();
  if (detail::track(tape, a, b)) {
    out.set_requires_grad(true);
    tape.record([an = a.node(), bn = b.node(), on = out.node()] {
      if (an->requires_grad) an->grad += on->grad / bn->value;
      if (bn->requires_grad)
        bn->grad -= on->grad * an->value / (bn->value * bn->value);
    });
  }
  return out;
}

template <typename S>
Tensor<S> add_scalar(Tape<S>& tape, const Tensor<S>& a, S c) {
  Tensor<S> out = Tensor<S>::empty(a.shape());
  out.value() = a.value() + c;
  if (detail::track(tape, a)) {
    out.set_requires_grad(true);
    tape.record([an = a.node(), on = out.node()] { an->grad += on->grad; });
  }
  return out;
}

template <typename S>
Tensor<S> mul_scalar(Tape<S>& tape, const Tensor<S>& a, S c) {
  Tensor<S> out = Tensor<S>::empty(a.shape());
  out.value() = a.value() * c;
  if (detail::track(tape, a)) {
    out.set_requires_grad(true);
    tape.record([an = a.node(), on = out.node(), c] { an->grad += on->grad * c; });
  }
  return out;
}

template <typename S>
Tensor<S> neg(Tape<S>& tape, const Tensor<S>& a) {
  return mul_scalar(tape, a, S(-1));
}

template <typename S>
Tensor<S> relu(Tape<S>& tape, const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::empty(a.shape());
  out.value() = a.value().max(S(0));
  if (detail::track(tape, a)) {
    out.set_requires_grad(true);
    tape.record([an = a.node(), on = out.node()] {
      an->grad += on->grad * (an->value > S(0)).template cast<S>();
    });
  }
  return out;
}

template <typename S>
Tensor<S> exp(Tape<S>& tape, const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::empty(a.shape());
  out.value() = a.value().exp();
  if (detail::track(tape, a)) {
    out.set_requires_grad(true);
    tape.record([an = a.node(), on = out.node()] {
      an->grad += on->grad * on->value;
    });
  }
  return out;
}

// Inputs at or below the floor are clamped before the log and get zero
// gradient there, so a stray non-positive activation cannot poison training
// with NaNs.
template <typename S>
Tensor<S> log(Tape<S>& tape, const Tensor<S>& a, S floor = S(1e-12)) {
  Tensor<S> out = Tensor<S>::empty(a.shape());
  out.value() = a.value().max(floor).log();
  if (detail::track(tape, a)) {
    out.set_requires_grad(true);
    tape.record([an = a.node(), on = out.node(), floor] {
      an->grad += on->grad * (an->value > floor).template cast<S>() / an->value.max(floor);
    });
  }
  return out;
}

template <typename S>
Tensor<S> pow(Tape<S>& tape, const Tensor<S>& a, S exponent) {
  Tensor<S> out = Tensor<S>::empty(a.shape());
  out.value() = a.value().pow(exponent);
  if (detail::track(tape, a)) {
    out.set_requires_grad(true);
    tape.record([an = a.node(), on = out.node(), exponent] {
      an->grad += on->grad * exponent * an->value.pow(exponent - S(1));
    });
  }
  return out;
}

template <typename S>
Tensor<S> clamp(Tape<S>& tape, const Tensor<S>& a, S lo, S hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo must not exceed hi");
  Tensor<S> out = Tensor<S>::empty(a.shape());
  out.value() = a.value().max(lo).min(hi);
  if (detail::track(tape, a)) {
    out.set_requires_grad(true);
    tape.record([an = a.node(), on = out.node(), lo, hi] {
      an->grad += on->grad *
                  ((an->value > lo) && (an->value < hi)).template cast<S>();
    });
  }
  return out;
}

template <typename S>
Tensor<S> sum(Tape<S>& tape, const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::scalar(a.value().sum());
  if (detail::track(tape, a)) {
    out.set_requires_grad(true);
    tape.record([an = a.node(), on = out.node()] { an->grad += on->grad[0]; });
  }
  return out;
}

template <typename S>
Tensor<S> mean(Tape<S>& tape, const Tensor<S>& a) {
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  Tensor<S> out = Tensor<S>::scalar(a.value().mean());
  if (detail::track(tape, a)) {
    out.set_requires_grad(true);
    const S inv = S(1) / static_cast<S>(a.numel());
    tape.record([an = a.node(), on = out.node(), inv] {
      an->grad += on->grad[0] * inv;
    });
  }
  return out;
}

// Same flat data, new shape; the copy keeps backward trivial.
template <typename S>
Tensor<S> reshape(Tape<S>& tape, const Tensor<S>& a, Shape shape) {
  if (numel(shape) != a.numel())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                     shape_str(shape));
  Tensor<S> out = Tensor<S>::empty(std::move(shape));
  out.value() = a.value();
  if (detail::track(tape, a)) {
    out.set_requires_grad(true);
    tape.record([an = a.node(), on = out.node()] { an->grad += on->grad; });
  }
  return out;
}

// Concatenate along `axis`. All inputs must agree on every other dimension.
template <typename S>
Tensor<S> concat(Tape<S>& tape, const std::vector<Tensor<S>>& inputs, Index axis) {
  if (inputs.empty()) throw std::invalid_argument("concat: empty input list");
  const Shape& s0 = inputs[0].shape();
  const Index rank = static_cast<Index>(s0.size());
  if (axis < 0 || axis >= rank)
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s0));
  Index axis_total = 0;
  for (const auto& t : inputs) {
    if (t.rank() != rank)
      throw ShapeError("concat: rank mismatch " + shape_str(t.shape()) + " vs " +
                       shape_str(s0));
    for (Index d = 0; d < rank; ++d)
      if (d != axis && t.dim(d) != s0[static_cast<std::size_t>(d)])
        throw ShapeError("concat: shape mismatch " + shape_str(t.shape()) + " vs " +
                         shape_str(s0) + " outside axis " + std::to_string(axis));
    axis_total += t.dim(axis);
  }
  Shape out_shape = s0;
  out_shape[static_cast<std::size_t>(axis)] = axis_total;

  Index outer = 1, inner = 1;
  for (Index d = 0; d < axis; ++d) outer *= s0[static_cast<std::size_t>(d)];
  for (Index d = axis + 1; d < rank; ++d) inner *= s0[static_cast<std::size_t>(d)];

  bool needs = false;
  for (const auto& t : inputs) needs = needs || t.requires_grad();

  Tensor<S> out = Tensor<S>::empty(out_shape);
  Index offset = 0;  // start of each input's band within the output axis
  std::vector<Index> offsets;
  for (const auto& t : inputs) {
    offsets.push_back(offset);
    const Index band = t.dim(axis) * inner;
    for (Index o = 0; o < outer; ++o)
      out.value().segment(o * axis_total * inner + offset * inner, band) =
          t.value().segment(o * band, band);
    offset += t.dim(axis);
  }

  if (tape.recording() && needs) {
    out.set_requires_grad(true);
    std::vector<std::shared_ptr<typename Tensor<S>::Node>> nodes;
    for (const auto& t : inputs) nodes.push_back(t.node());
    tape.record([nodes, offsets, on = out.node(), outer, inner, axis_total, axis] {
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!nodes[i]->requires_grad) continue;
        const Index band =
            nodes[i]->shape[static_cast<std::size_t>(axis)] * inner;
        for (Index o = 0; o < outer; ++o)
          nodes[i]->grad.segment(o * band, band) +=
              on->grad.segment(o * axis_total * inner + offsets[i] * inner, band);
      }
    });
  }
  return out;
}

// Extract a spatial window from NCHW input.
template <typename S>
Tensor<S> crop2d(Tape<S>& tape, const Tensor<S>& x, Index top, Index left,
                 Index out_h, Index out_w) {
  detail::check_rank4("crop2d", x);
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (top < 0 || left < 0 || out_h < 1 || out_w < 1 || top + out_h > h ||
      left + out_w > w)
    throw ShapeError("crop2d: window " + std::to_string(out_h) + "x" +
                     std::to_string(out_w) + "+" + std::to_string(top) + "+" +
                     std::to_string(left) + " exceeds input " + shape_str(x.shape()));
  Tensor<S> out = Tensor<S>::empty({n, c, out_h, out_w});
  for (Index i = 0; i < n * c; ++i)
    for (Index y = 0; y < out_h; ++y)
      out.value().segment((i * out_h + y) * out_w, out_w) =
          x.value().segment((i * h + top + y) * w + left, out_w);
  if (detail::track(tape, x)) {
    out.set_requires_grad(true);
    tape.record([xn = x.node(), on = out.node(), n, c, h, w, top, left, out_h, out_w] {
      for (Index i = 0; i < n * c; ++i)
        for (Index y = 0; y < out_h; ++y)
          xn->grad.segment((i * h + top + y) * w + left, out_w) +=
              on->grad.segment((i * out_h + y) * out_w, out_w);
    });
  }
  return out;
}

// Append zero-valued channels up to out_c (parameter-free shortcut widening).
template <typename S>
Tensor<S> pad_channels(Tape<S>& tape, const Tensor<S>& x, Index out_c) {
  detail::check_rank4("pad_channels", x);
  const Index n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (out_c < c)
    throw ShapeError("pad_channels: target channels " + std::to_string(out_c) +
                     " below input channels " + std::to_string(c));
  Tensor<S> out = Tensor<S>::zeros({n, out_c, x.dim(2), x.dim(3)});
  for (Index i = 0; i < n; ++i)
    out.value().segment(i * out_c * hw, c * hw) = x.value().segment(i * c * hw, c * hw);
  if (detail::track(tape, x)) {
    out.set_requires_grad(true);
    tape.record([xn = x.node(), on = out.node(), n, c, out_c, hw] {
      for (Index i = 0; i < n; ++i)
        xn->grad.segment(i * c * hw, c * hw) += on->grad.segment(i * out_c * hw, c * hw);
    });
  }
  return out;
}

// NCHW -> NC mean over the spatial extent (global average pooling core).
template <typename S>
Tensor<S> spatial_mean(Tape<S>& tape, const Tensor<S>& x) {
  detail::check_rank4("spatial_mean", x);
  const Index n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (hw == 0) throw ShapeError("spatial_mean: empty spatial extent");
  Tensor<S> out = Tensor<S>::empty({n, c});
  for (Index i = 0; i < n * c; ++i)
    out.value()[i] = x.value().segment(i * hw, hw).mean();
  if (detail::track(tape, x)) {
    out.set_requires_grad(true);
    const S inv = S(1) / static_cast<S>(hw);
    tape.record([xn = x.node(), on = out.node(), n, c, hw, inv] {
      for (Index i = 0; i < n * c; ++i)
        xn->grad.segment(i * hw, hw) += on->grad[i] * inv;
    });
  }
  return out;
}

// NCHW -> N1HW mean across channels.
template <typename S>
Tensor<S> channel_mean(Tape<S>& tape, const Tensor<S>& x) {
  detail::check_rank4("channel_mean", x);
  const Index n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (c == 0) throw ShapeError("channel_mean: zero channels");
  Tensor<S> out = Tensor<S>::zeros({n, 1, x.dim(2), x.dim(3)});
  for (Index i = 0; i < n; ++i)
    for (Index ch = 0; ch < c; ++ch)
      out.value().segment(i * hw, hw) += x.value().segment((i * c + ch) * hw, hw);
  out.value() *= S(1) / static_cast<S>(c);
  if (detail::track(tape, x)) {
    out.set_requires_grad(true);
    const S inv = S(1) / static_cast<S>(c);
    tape.record([xn = x.node(), on = out.node(), n, c, hw, inv] {
      for (Index i = 0; i < n; ++i)
        for (Index ch = 0; ch < c; ++ch)
          xn->grad.segment((i * c + ch) * hw, hw) += on->grad.segment(i * hw, hw) * inv;
    });
  }
  return out;
}

// Integer-factor nearest-neighbour upsampling.
template <typename S>
Tensor<S> up_nearest(Tape<S>& tape, const Tensor<S>& x, Index factor) {
  detail::check_rank4("up_nearest", x);
  if (factor < 1) throw std::invalid_argument("up_nearest: factor must be >= 1");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index h2 = h * factor, w2 = w * factor;
  Tensor<S> out = Tensor<S>::empty({n, c, h2, w2});
  for (Index i = 0; i < n * c; ++i)
    for (Index y = 0; y < h2; ++y)
      for (Index xx = 0; xx < w2; ++xx)
        out.value()[(i * h2 + y) * w2 + xx] =
            x.value()[(i * h + y / factor) * w + xx / factor];
  if (detail::track(tape, x)) {
    out.set_requires_grad(true);
    tape.record([xn = x.node(), on = out.node(), n, c, h, w, h2, w2, factor] {
      for (Index i = 0; i < n * c; ++i)
        for (Index y = 0; y < h2; ++y)
          for (Index xx = 0; xx < w2; ++xx)
            xn->grad[(i * h + y / factor) * w + xx / factor] +=
                on->grad[(i * h2 + y) * w2 + xx];
    });
  }
  return out;
}

}  // namespace texton::ops

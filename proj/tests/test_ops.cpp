#include <doctest.h>

#include <cmath>

#include "texton/gradcheck.hpp"
#include "texton/nn.hpp"
#include "texton/ops.hpp"

using namespace texton;

namespace {

// Runs a gradient check of `f` over the given inputs and asserts it passes.
template <typename F>
void expect_grads_ok(F&& f, std::vector<std::pair<std::string, Tensor<double>>> t,
                     std::uint64_t seed) {
  Rng rng(seed);
  const auto rep = grad_check(std::forward<F>(f), std::move(t), rng);
  INFO("worst coordinate: ", rep.worst);
  CHECK_FALSE(rep.numeric_failure);
  CHECK(rep.max_rel_error <= 1e-4);
}

}  // namespace

TEST_CASE("elementwise arithmetic values and gradients") {
  Tape<double> tape;
  auto a = Tensor<double>::from_data({4}, {1, -2, 3, 0.5});
  auto b = Tensor<double>::from_data({4}, {2, 4, -1, 0.25});
  CHECK(ops::add(tape, a, b).value()[1] == doctest::Approx(2.0));
  CHECK(ops::sub(tape, a, b).value()[2] == doctest::Approx(4.0));
  CHECK(ops::mul(tape, a, b).value()[0] == doctest::Approx(2.0));
  CHECK(ops::div(tape, a, b).value()[3] == doctest::Approx(2.0));
  CHECK(ops::neg(tape, a).value()[0] == doctest::Approx(-1.0));
  CHECK(ops::add_scalar(tape, a, 1.0).value()[1] == doctest::Approx(-1.0));
  CHECK(ops::mul_scalar(tape, a, -2.0).value()[2] == doctest::Approx(-6.0));

  Rng rng(3);
  auto x = Tensor<double>::uniform({6}, rng, 0.3, 2.0);
  auto y = Tensor<double>::uniform({6}, rng, 0.3, 2.0);
  expect_grads_ok(
      [x, y](Tape<double>& t) {
        auto s = ops::div(t, ops::mul(t, x, y), ops::add(t, x, y));
        return ops::sum(t, ops::sub(t, s, ops::neg(t, x)));
      },
      {{"x", x}, {"y", y}}, 11);
}

TEST_CASE("relu, exp, log, pow, clamp match direct formulas") {
  Tape<double> tape;
  auto a = Tensor<double>::from_data({5}, {-2, -0.5, 0, 0.5, 2});
  auto r = ops::relu(tape, a);
  CHECK(r.value()[0] == 0.0);
  CHECK(r.value()[4] == 2.0);

  auto e = ops::exp(tape, a);
  CHECK(e.value()[4] == doctest::Approx(std::exp(2.0)));

  auto p = Tensor<double>::from_data({3}, {1.0, 4.0, 9.0});
  CHECK(ops::pow(tape, p, 0.5).value()[2] == doctest::Approx(3.0));
  CHECK(ops::log(tape, p).value()[1] == doctest::Approx(std::log(4.0)));

  auto c = ops::clamp(tape, a, -1.0, 1.0);
  CHECK(c.value()[0] == -1.0);
  CHECK(c.value()[3] == 0.5);
  CHECK(c.value()[4] == 1.0);

  Rng rng(5);
  auto x = Tensor<double>::uniform({8}, rng, 0.2, 1.8);
  expect_grads_ok(
      [x](Tape<double>& t) {
        auto u = ops::exp(t, ops::log(t, ops::pow(t, x, 1.5)));
        return ops::mean(t, ops::relu(t, ops::clamp(t, u, 0.3, 1.5)));
      },
      {{"x", x}}, 12);
}

TEST_CASE("log floors its argument instead of returning -inf") {
  Tape<double> tape;
  auto z = Tensor<double>::from_data({2}, {0.0, -1.0});
  auto l = ops::log(tape, z);
  CHECK(std::isfinite(l.value()[0]));
  CHECK(l.value()[0] == doctest::Approx(std::log(1e-12)));
}

TEST_CASE("sum and mean reduce to scalars") {
  Tape<double> tape;
  auto a = Tensor<double>::from_data({2, 2}, {1, 2, 3, 4});
  CHECK(ops::sum(tape, a).item() == doctest::Approx(10.0));
  CHECK(ops::mean(tape, a).item() == doctest::Approx(2.5));
}

TEST_CASE("reshape preserves data and concat stitches along both axes") {
  Tape<double> tape;
  auto a = Tensor<double>::from_data({2, 2}, {1, 2, 3, 4});
  auto r = ops::reshape(tape, a, {4});
  CHECK(r.value()[2] == 3.0);

  auto b = Tensor<double>::from_data({2, 3}, {5, 6, 7, 8, 9, 10});
  auto cat1 = ops::concat(tape, {a, b}, 1);  // [2,5]
  CHECK(cat1.dim(1) == 5);
  // row 0 is [1 2 | 5 6 7], row 1 is [3 4 | 8 9 10]
  CHECK(cat1.value()[2] == 5.0);
  CHECK(cat1.value()[5] == 3.0);
  CHECK(cat1.value()[9] == 10.0);

  auto c = Tensor<double>::from_data({1, 2}, {-1, -2});
  auto cat0 = ops::concat(tape, {a, c}, 0);  // [3,2]
  CHECK(cat0.dim(0) == 3);
  CHECK(cat0.value()[4] == -1.0);

  CHECK_THROWS_AS(ops::concat(tape, std::vector<Tensor<double>>{}, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(ops::concat(tape, {a, b}, 0), ShapeError);

  Rng rng(6);
  auto x = Tensor<double>::uniform({2, 3}, rng, -1, 1);
  auto y = Tensor<double>::uniform({2, 2}, rng, -1, 1);
  expect_grads_ok(
      [x, y](Tape<double>& t) {
        auto cat = ops::concat(t, {x, y}, 1);
        return ops::sum(t, ops::mul(t, cat, cat));
      },
      {{"x", x}, {"y", y}}, 13);
}

TEST_CASE("crop2d, pad_channels, spatial/channel means, up_nearest") {
  Tape<double> tape;
  // x: one sample, one channel, 3x4 ramp
  auto x = Tensor<double>::from_data({1, 1, 3, 4},
                                     {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
  auto crop = ops::crop2d(tape, x, 1, 1, 2, 2);
  CHECK(crop.dim(2) == 2);
  CHECK(crop.value()[0] == 5.0);
  CHECK(crop.value()[3] == 10.0);

  auto pad = ops::pad_channels(tape, x, 3);
  CHECK(pad.dim(1) == 3);
  CHECK(pad.value()[0] == 0.0);
  CHECK(pad.value()[12] == 0.0);  // first padded channel
  CHECK(pad.value().segment(12, 24).abs().maxCoeff() == 0.0);

  auto sm = ops::spatial_mean(tape, x);
  CHECK(sm.dim(1) == 1);
  CHECK(sm.value()[0] == doctest::Approx(5.5));

  auto two = Tensor<double>::from_data({1, 2, 1, 2}, {1, 2, 3, 4});
  auto cm = ops::channel_mean(tape, two);
  CHECK(cm.dim(1) == 1);
  CHECK(cm.value()[0] == doctest::Approx(2.0));
  CHECK(cm.value()[1] == doctest::Approx(3.0));

  auto up = ops::up_nearest(tape, two, 2);
  CHECK(up.dim(2) == 2);
  CHECK(up.dim(3) == 4);
  CHECK(up.value()[0] == 1.0);
  CHECK(up.value()[1] == 1.0);
  CHECK(up.value()[2] == 2.0);
  CHECK(up.value()[4] == 1.0);

  Rng rng(7);
  auto g = Tensor<double>::uniform({2, 3, 4, 4}, rng, -1, 1);
  expect_grads_ok(
      [g](Tape<double>& t) {
        auto h = ops::crop2d(t, g, 1, 0, 3, 4);
        h = ops::pad_channels(t, h, 5);
        auto u = ops::up_nearest(t, h, 2);
        return ops::sum(t, ops::mul(t, ops::spatial_mean(t, u),
                                    ops::spatial_mean(t, u)));
      },
      {{"g", g}}, 14);
}

TEST_CASE("conv2d matches a direct quadruple-loop oracle") {
  Rng rng(21);
  const Index n = 2, c = 3, h = 5, w = 6, f = 4, k = 3, stride = 2, pad = 1;
  auto x = Tensor<double>::uniform({n, c, h, w}, rng, -1, 1);
  auto wt = Tensor<double>::uniform({f, c, k, k}, rng, -1, 1);
  auto b = Tensor<double>::uniform({f}, rng, -1, 1);

  Tape<double> tape;
  auto y = ops::conv2d(tape, x, wt, b, stride, pad);
  const Index oh = (h + 2 * pad - k) / stride + 1;
  const Index ow = (w + 2 * pad - k) / stride + 1;
  REQUIRE(y.dim(2) == oh);
  REQUIRE(y.dim(3) == ow);

  // Independent direct convolution.
  for (Index ni = 0; ni < n; ++ni)
    for (Index fi = 0; fi < f; ++fi)
      for (Index oy = 0; oy < oh; ++oy)
        for (Index ox = 0; ox < ow; ++ox) {
          double acc = b.value()[fi];
          for (Index ci = 0; ci < c; ++ci)
            for (Index ky = 0; ky < k; ++ky)
              for (Index kx = 0; kx < k; ++kx) {
                const Index iy = oy * stride + ky - pad;
                const Index ix = ox * stride + kx - pad;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += x.value()[((ni * c + ci) * h + iy) * w + ix] *
                       wt.value()[((fi * c + ci) * k + ky) * k + kx];
              }
          const double got = y.value()[((ni * f + fi) * oh + oy) * ow + ox];
          CHECK(got == doctest::Approx(acc).epsilon(1e-12));
        }

  expect_grads_ok(
      [x, wt, b](Tape<double>& t) {
        auto out = ops::conv2d(t, x, wt, b, 2, 1);
        return ops::sum(t, ops::mul(t, out, out));
      },
      {{"x", x}, {"w", wt}, {"b", b}}, 15);
}

TEST_CASE("grouped pointwise convolution keeps channel bands separate") {
  Rng rng(22);
  const Index n = 2, c = 4, h = 2, w = 2, r = 2, groups = 2;
  auto x = Tensor<double>::uniform({n, c, h, w}, rng, -1, 1);
  auto wt = Tensor<double>::uniform({r, c / groups}, rng, -1, 1);
  auto b = Tensor<double>::uniform({r}, rng, -1, 1);

  Tape<double> tape;
  auto y = ops::pointwise_conv_grouped(tape, x, wt, b, groups);
  REQUIRE(y.dim(1) == r);

  // Output channel 0 reads input channels {0,1}; channel 1 reads {2,3}.
  for (Index ni = 0; ni < n; ++ni)
    for (Index ri = 0; ri < r; ++ri)
      for (Index p = 0; p < h * w; ++p) {
        double acc = b.value()[ri];
        for (Index j = 0; j < c / groups; ++j) {
          const Index ci = ri * (c / groups) + j;
          acc += x.value()[(ni * c + ci) * h * w + p] * wt.value()[ri * (c / groups) + j];
        }
        CHECK(y.value()[(ni * r + ri) * h * w + p] ==
              doctest::Approx(acc).epsilon(1e-12));
      }

  expect_grads_ok(
      [x, wt, b](Tape<double>& t) {
        auto out = ops::pointwise_conv_grouped(t, x, wt, b, 2);
        return ops::sum(t, ops::mul(t, out, out));
      },
      {{"x", x}, {"w", wt}, {"b", b}}, 16);
}

TEST_CASE("avg_pool2d and the cell extrema match loop oracles") {
  Rng rng(23);
  auto x = Tensor<double>::uniform({1, 2, 4, 4}, rng, -1, 1);
  Tape<double> tape;

  auto avg = ops::avg_pool2d(tape, x, 2, 2);
  auto mx = ops::cell_max(tape, x, 2);
  auto mn = ops::cell_min(tape, x, 2);
  REQUIRE(avg.dim(2) == 2);
  for (Index ci = 0; ci < 2; ++ci)
    for (Index oy = 0; oy < 2; ++oy)
      for (Index ox = 0; ox < 2; ++ox) {
        double s = 0, hi = -1e30, lo = 1e30;
        for (Index dy = 0; dy < 2; ++dy)
          for (Index dx = 0; dx < 2; ++dx) {
            const double v = x.value()[(ci * 4 + oy * 2 + dy) * 4 + ox * 2 + dx];
            s += v;
            hi = std::max(hi, v);
            lo = std::min(lo, v);
          }
        const Index o = (ci * 2 + oy) * 2 + ox;
        CHECK(avg.value()[o] == doctest::Approx(s / 4));
        CHECK(mx.value()[o] == doctest::Approx(hi));
        CHECK(mn.value()[o] == doctest::Approx(lo));
      }

  CHECK_THROWS_AS(ops::cell_max(tape, x, 3), ShapeError);

  expect_grads_ok(
      [x](Tape<double>& t) {
        auto a = ops::avg_pool2d(t, x, 2, 1);
        auto m = ops::sub(t, ops::cell_max(t, x, 2), ops::cell_min(t, x, 2));
        return ops::add(t, ops::sum(t, ops::mul(t, a, a)),
                        ops::sum(t, ops::mul(t, m, m)));
      },
      {{"x", x}}, 17);
}

TEST_CASE("resize_bilinear uses half-pixel sampling and is exact on ramps") {
  Tape<double> tape;
  // A linear ramp must be reproduced exactly by bilinear interpolation at
  // interior points; borders clamp.
  auto x = Tensor<double>::from_data({1, 1, 2, 2}, {0, 1, 2, 3});
  auto same = ops::resize_bilinear(tape, x, 2, 2);
  for (Index i = 0; i < 4; ++i) CHECK(same.value()[i] == doctest::Approx(x.value()[i]));

  auto up = ops::resize_bilinear(tape, x, 4, 4);
  // src coordinate for out index i is (i + 0.5) / 2 - 0.5: {-0.25, 0.25, 0.75, 1.25}
  // clamped to [0, 1]; interior weights are exact quarters.
  CHECK(up.value()[0] == doctest::Approx(0.0));
  CHECK(up.value()[1] == doctest::Approx(0.25));
  CHECK(up.value()[2] == doctest::Approx(0.75));
  CHECK(up.value()[3] == doctest::Approx(1.0));
  CHECK(up.value()[1 * 4 + 0] == doctest::Approx(0.5));
  CHECK(up.value()[3 * 4 + 3] == doctest::Approx(3.0));

  Rng rng(24);
  auto g = Tensor<double>::uniform({2, 2, 3, 5}, rng, -1, 1);
  expect_grads_ok(
      [g](Tape<double>& t) {
        auto u = ops::resize_bilinear(t, g, 7, 4);
        return ops::sum(t, ops::mul(t, u, u));
      },
      {{"g", g}}, 18);
}

TEST_CASE("gradient checker flags a deliberately corrupted backward") {
  // Local op with a subtly wrong adjoint: y = 2x forward, but backward
  // claims dy/dx = 1.9. The checker must reject it, proving the comparison
  // is not vacuous.
  auto bad_double = [](Tape<double>& tape, const Tensor<double>& x) {
    Tensor<double> out = Tensor<double>::empty(x.shape());
    out.value() = x.value() * 2.0;
    if (tape.recording() && x.requires_grad()) {
      out.set_requires_grad(true);
      tape.record([xn = x.node(), on = out.node()] {
        if (xn->requires_grad) xn->grad += on->grad * 1.9;
      });
    }
    return out;
  };

  auto x = Tensor<double>::from_data({3}, {0.5, -1.0, 2.0});
  Rng rng(31);
  const auto rep = grad_check(
      [&bad_double, x](Tape<double>& t) { return ops::sum(t, bad_double(t, x)); },
      {{"x", x}}, rng);
  CHECK(rep.max_rel_error > 1e-2);
}

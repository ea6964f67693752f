#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "texton/rng.hpp"
#include "texton/tape.hpp"
#include "texton/tensor.hpp"

namespace texton {

struct GradCheckOptions {
  double h = 1e-5;             // central-difference step
  double tol = 1e-4;           // max relative error accepted
  double atol = 1e-7;          // absolute slack for near-zero gradients
  Index coords_per_tensor = 100;  // random coordinates probed per target
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  Index coords_checked = 0;
  bool numeric_failure = false;  // non-finite loss or gradient encountered
  std::string worst;             // where the largest error occurred

  bool passed(double tol) const { return !numeric_failure && max_rel_error <= tol; }
};

// Compares tape gradients against central differences at random coordinates
// of each named target tensor. `f` must rebuild the same graph on every
// call (it is invoked once recording and 2 x coords times forward-only) and
// must not consume outside randomness. Non-finite values are reported in
// the result instead of thrown, so a broken op yields a readable failure.
template <typename F>
GradCheckReport grad_check(F&& f,
                           std::vector<std::pair<std::string, Tensor<double>>> targets,
                           Rng& rng, GradCheckOptions opt = {}) {
  GradCheckReport rep;

  for (auto& [name, t] : targets) {
    t.set_requires_grad(true);
    t.zero_grad();
  }

  Tape<double> tape;
  std::vector<ArrayX<double>> analytic;
  {
    Tensor<double> loss = f(tape);
    if (!std::isfinite(loss.item())) {
      rep.numeric_failure = true;
      rep.worst = "loss is not finite";
      return rep;
    }
    tape.backward(loss);
    for (auto& [name, t] : targets) analytic.push_back(t.grad());
    tape.clear();
  }

  tape.set_recording(false);
  auto eval_loss = [&] { return f(tape).item(); };

  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    auto& [name, t] = targets[ti];
    const Index n = t.numel();
    std::vector<Index> coords;
    if (n <= opt.coords_per_tensor) {
      coords.resize(static_cast<std::size_t>(n));
      for (Index i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
    } else {
      std::vector<Index> all(static_cast<std::size_t>(n));
      for (Index i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
      for (Index i = 0; i < opt.coords_per_tensor; ++i) {
        const Index j = i + static_cast<Index>(rng.uniform_int(
                                static_cast<std::uint64_t>(n - i)));
        std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
        coords.push_back(all[static_cast<std::size_t>(i)]);
      }
    }

    for (Index idx : coords) {
      const double orig = t.value()[idx];
      t.value()[idx] = orig + opt.h;
      const double lp = eval_loss();
      t.value()[idx] = orig - opt.h;
      const double lm = eval_loss();
      t.value()[idx] = orig;

      const double numeric = (lp - lm) / (2.0 * opt.h);
      const double a = analytic[ti][idx];
      ++rep.coords_checked;
      if (!std::isfinite(numeric) || !std::isfinite(a)) {
        rep.numeric_failure = true;
        rep.worst = name + "[" + std::to_string(idx) + "]: non-finite gradient";
        continue;
      }
      // A zero analytic gradient (a bias ahead of batch norm, say) leaves
      // only cancellation noise in the central difference; inside the
      // absolute slack the coordinate counts as matching.
      if (std::abs(a - numeric) <= opt.atol) continue;
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst = name + "[" + std::to_string(idx) + "]: analytic=" +
                    std::to_string(a) + " numeric=" + std::to_string(numeric);
      }
    }
  }
  return rep;
}

}  // namespace texton

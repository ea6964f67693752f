#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "texton/backbone.hpp"
#include "texton/gradcheck.hpp"
#include "texton/te_layers.hpp"

// Named finite-difference checks for every trainable layer, at miniature
// sizes and in double precision. The same list backs the `gradcheck` CLI
// subcommand and the verification tests, so a broken backward shows up in
// both places with the same name attached.

namespace texton {

struct NamedGradCheck {
  std::string name;
  std::function<GradCheckReport()> run;
};

namespace detail {

// Dot product against a fixed pseudo-random weighting. A plain mean sends
// the same upstream gradient everywhere and can hide coordinate mix-ups;
// distinct weights make the check sensitive to them.
inline Tensor<double> weighted_sum(Tape<double>& tape, const Tensor<double>& x,
                                   std::uint64_t seed) {
  Rng wr(seed);
  Tensor<double> w = Tensor<double>::empty(x.shape());
  for (Index i = 0; i < w.numel(); ++i) w.value()[i] = wr.uniform() + 0.5;
  return ops::sum(tape, ops::mul(tape, x, w));
}

inline Tensor<double> random_input(const Shape& shape, Rng& rng, double lo,
                                   double hi) {
  return Tensor<double>::uniform(shape, rng, lo, hi);
}

inline void collect_targets(ParamRefs<double>& params,
                            std::vector<std::pair<std::string, Tensor<double>>>& out) {
  for (Parameter<double>* p : params) out.emplace_back(p->name, p->tensor);
}

}  // namespace detail

// The layer checks, each wiring a tiny instance to a scalar loss and
// comparing tape gradients against central differences on both the input
// and every parameter.
inline std::vector<NamedGradCheck> gradcheck_suite(std::uint64_t seed = 17) {
  std::vector<NamedGradCheck> suite;

  suite.push_back({"histogram_layer", [seed] {
    Rng rng(derive_seed(seed, "histogram"));
    HistogramConfig cfg;
    cfg.n_bins = 3;
    cfg.reduced_channels = 4;
    cfg.groups = 2;
    cfg.normalize_bins = true;
    HistogramLayer<double> layer(4, cfg, rng);
    Tensor<double> x = detail::random_input({2, 4, 4, 4}, rng, -1.0, 1.0);
    std::vector<std::pair<std::string, Tensor<double>>> targets{{"x", x}};
    ParamRefs<double> params;
    layer.collect(params);
    detail::collect_targets(params, targets);
    auto f = [&layer, x](Tape<double>& tape) {
      return detail::weighted_sum(tape, layer.forward(tape, x), 101);
    };
    Rng cr(derive_seed(seed, "histogram", "coords"));
    return grad_check(f, targets, cr);
  }});

  suite.push_back({"encoding_layer", [seed] {
    Rng rng(derive_seed(seed, "encoding"));
    EncodingConfig cfg;
    cfg.n_codewords = 3;
    cfg.output_dim = 5;
    EncodingLayer<double> layer(4, cfg, rng);
    Tensor<double> x = detail::random_input({3, 4, 3, 3}, rng, -1.0, 1.0);
    std::vector<std::pair<std::string, Tensor<double>>> targets{{"x", x}};
    ParamRefs<double> params;
    layer.collect(params);
    detail::collect_targets(params, targets);
    auto f = [&layer, x](Tape<double>& tape) {
      return detail::weighted_sum(tape, layer.forward(tape, x, true), 102);
    };
    Rng cr(derive_seed(seed, "encoding", "coords"));
    return grad_check(f, targets, cr);
  }});

  suite.push_back({"fractal_layer", [seed] {
    Rng rng(derive_seed(seed, "fractal"));
    FractalConfig cfg;
    cfg.n_bins = 4;
    cfg.scales = {1, 2, 4};
    FractalLayer<double> layer(cfg);
    Tensor<double> x = detail::random_input({2, 2, 6, 6}, rng, 0.0, 1.0);
    std::vector<std::pair<std::string, Tensor<double>>> targets{{"x", x}};
    ParamRefs<double> params;
    layer.collect(params);
    detail::collect_targets(params, targets);
    auto f = [&layer, x](Tape<double>& tape) {
      return detail::weighted_sum(tape, layer.forward(tape, x), 103);
    };
    Rng cr(derive_seed(seed, "fractal", "coords"));
    return grad_check(f, targets, cr);
  }});

  suite.push_back({"gap_layer", [seed] {
    Rng rng(derive_seed(seed, "gap"));
    GapConfig cfg;
    cfg.output_dim = 5;
    GapLayer<double> layer(4, cfg, rng);
    Tensor<double> x = detail::random_input({3, 4, 3, 3}, rng, -1.0, 1.0);
    std::vector<std::pair<std::string, Tensor<double>>> targets{{"x", x}};
    ParamRefs<double> params;
    layer.collect(params);
    detail::collect_targets(params, targets);
    auto f = [&layer, x](Tape<double>& tape) {
      return detail::weighted_sum(tape, layer.forward(tape, x, true), 104);
    };
    Rng cr(derive_seed(seed, "gap", "coords"));
    return grad_check(f, targets, cr);
  }});

  suite.push_back({"residual_block", [seed] {
    Rng rng(derive_seed(seed, "block"));
    // Strided block with a channel change so the pooled, zero-padded skip
    // path is part of the graph.
    ResidualBlock<double> block("block", 3, 6, 2, rng);
    Tensor<double> x = detail::random_input({2, 3, 6, 6}, rng, -1.0, 1.0);
    std::vector<std::pair<std::string, Tensor<double>>> targets{{"x", x}};
    ParamRefs<double> params;
    block.collect(params);
    detail::collect_targets(params, targets);
    auto f = [&block, x](Tape<double>& tape) {
      return detail::weighted_sum(tape, block.forward(tape, x, true), 105);
    };
    Rng cr(derive_seed(seed, "block", "coords"));
    return grad_check(f, targets, cr);
  }});

  suite.push_back({"classifier_head", [seed] {
    Rng rng(derive_seed(seed, "head"));
    // Sized so input, weight and bias together offer well over a hundred
    // coordinates; the other checks get there through their inputs alone.
    LinearModule<double> fc("head", 16, 5, rng);
    Tensor<double> x = detail::random_input({6, 16}, rng, -1.0, 1.0);
    const std::vector<int> labels{0, 2, 1, 4, 3, 2};
    std::vector<std::pair<std::string, Tensor<double>>> targets{{"x", x}};
    ParamRefs<double> params;
    fc.collect(params);
    detail::collect_targets(params, targets);
    auto f = [&fc, x, labels](Tape<double>& tape) {
      return ops::softmax_cross_entropy(tape, fc.forward(tape, x), labels);
    };
    Rng cr(derive_seed(seed, "head", "coords"));
    return grad_check(f, targets, cr);
  }});

  return suite;
}

}  // namespace texton

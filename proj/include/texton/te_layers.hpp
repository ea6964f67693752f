#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "texton/nn_modules.hpp"
#include "texton/texture_ops.hpp"

// The four texture encodings that read the backbone's activation block:
// soft histogram, residual encoding, fractal-dimension pooling and global
// average pooling. Each produces a per-image feature vector of a fixed,
// queryable width.

namespace texton {

struct HistogramConfig {
  Index n_bins = 4;
  Index reduced_channels = 32;
  Index groups = 512;  // requested; clamped to a feasible divisor at build time
  bool normalize_bins = false;

  Index output_len() const { return n_bins * reduced_channels; }
  void validate() const {
    if (n_bins < 1 || reduced_channels < 1 || groups < 1)
      throw ConfigError("histogram: bins, reduced channels and groups must be >= 1");
  }
};

struct EncodingConfig {
  Index n_codewords = 8;
  Index output_dim = 128;

  void validate() const {
    if (n_codewords < 1 || output_dim < 1)
      throw ConfigError("encoding: codewords and output dim must be >= 1");
  }
};

struct FractalConfig {
  Index n_bins = 16;
  std::vector<Index> scales{1, 2, 4, 8};

  // Scales are in pre-upsampling units; on the doubled surface a box of
  // nominal size s covers 2s pixels, so the window spans 2 * max(scales)
  // pixels and holds exactly one box at the coarsest scale.
  Index cell_pixels(Index s) const { return 2 * s; }
  Index window() const { return cell_pixels(scales.back()); }

  void validate() const {
    if (n_bins < 1) throw ConfigError("fractal: bins must be >= 1");
    if (scales.empty()) throw ConfigError("fractal: at least one scale");
    for (std::size_t i = 0; i < scales.size(); ++i) {
      if (scales[i] < 1) throw ConfigError("fractal: scales must be >= 1");
      if (i && scales[i] <= scales[i - 1])
        throw ConfigError("fractal: scales must be strictly increasing");
    }
    for (Index s : scales)
      if (window() % cell_pixels(s) != 0)
        throw ConfigError("fractal: scale " + std::to_string(s) +
                          " does not divide the analysis window " +
                          std::to_string(window()));
  }
};

struct GapConfig {
  Index output_dim = 48;

  void validate() const {
    if (output_dim < 1) throw ConfigError("gap: output dim must be >= 1");
  }
};

namespace detail {

// Largest group count that divides both channel counts and does not exceed
// the request; always >= 1.
inline Index feasible_groups(Index in_ch, Index out_ch, Index requested) {
  const Index g = std::gcd(in_ch, out_ch);
  for (Index d = std::min(g, requested); d > 1; --d)
    if (g % d == 0) return d;
  return 1;
}

}  // namespace detail

// Local 2x2 average pooling, grouped 1x1 channel reduction, then RBF soft
// binning of the reduced activations.
template <typename S>
class HistogramLayer {
 public:
  HistogramLayer() = default;

  HistogramLayer(Index in_channels, const HistogramConfig& cfg, Rng& rng)
      : cfg_(cfg), in_channels_(in_channels) {
    cfg_.validate();
    const Index r = cfg_.reduced_channels, b = cfg_.n_bins;
    groups_eff_ = detail::feasible_groups(in_channels, r, cfg_.groups);
    reduce_ = GroupedPointwiseModule<S>("histogram.reduce", in_channels, r,
                                        groups_eff_, rng);
    // Bin centers evenly spaced over [-1, 1]; widths start at the spacing.
    Tensor<S> centers = Tensor<S>::empty({r, b});
    for (Index ch = 0; ch < r; ++ch)
      for (Index j = 0; j < b; ++j)
        centers.value()[ch * b + j] =
            b == 1 ? S(0) : S(-1) + S(2) * static_cast<S>(j) / static_cast<S>(b - 1);
    centers_ = Parameter<S>("histogram.centers", std::move(centers));
    const S raw = std::log(S(2) / static_cast<S>(b));
    width_raw_ = Parameter<S>("histogram.width_raw", Tensor<S>::full({r, b}, raw));
  }

  // x:[N,C,H,W] with H,W >= 2 -> [N, reduced_channels * n_bins].
  Tensor<S> forward(Tape<S>& tape, const Tensor<S>& x) {
    return ops::rbf_histogram(tape, reduced_activations(tape, x), centers_.tensor,
                              width_raw_.tensor, cfg_.normalize_bins);
  }

  // The pooled and channel-reduced block the bins actually see; exposed so
  // the binning can be validated against a direct computation.
  Tensor<S> reduced_activations(Tape<S>& tape, const Tensor<S>& x) {
    Tensor<S> pooled = ops::avg_pool2d(tape, x, 2, 2);
    return reduce_.forward(tape, pooled);
  }

  Index output_len() const { return cfg_.output_len(); }
  Index groups_used() const { return groups_eff_; }
  const HistogramConfig& config() const { return cfg_; }

  void collect(ParamRefs<S>& out) {
    reduce_.collect(out);
    out.push_back(&centers_);
    out.push_back(&width_raw_);
  }

 private:
  HistogramConfig cfg_;
  Index in_channels_ = 0;
  Index groups_eff_ = 1;
  GroupedPointwiseModule<S> reduce_;
  Parameter<S> centers_, width_raw_;
};

// Residual encoding against learnable codewords, then L2 normalization, a
// dense projection and batch norm.
template <typename S>
class EncodingLayer {
 public:
  EncodingLayer() = default;

  EncodingLayer(Index in_channels, const EncodingConfig& cfg, Rng& rng)
      : cfg_(cfg), in_channels_(in_channels) {
    cfg_.validate();
    const Index k = cfg_.n_codewords;
    const double bound = 1.0 / std::sqrt(static_cast<double>(k * in_channels));
    codewords_ = Parameter<S>(
        "encoding.codewords",
        Tensor<S>::uniform({k, in_channels}, rng, -bound, bound));
    smoothing_ = Parameter<S>("encoding.smoothing", Tensor<S>::full({k}, S(1)));
    proj_ = LinearModule<S>("encoding.proj", k * in_channels, cfg_.output_dim, rng);
    bn_ = BatchNormModule<S>("encoding.bn", cfg_.output_dim);
  }

  Tensor<S> forward(Tape<S>& tape, const Tensor<S>& x, bool training) {
    Tensor<S> e = normalized_encoding(tape, x);
    Tensor<S> p = proj_.forward(tape, e);
    return bn_.forward(tape, p, training);
  }

  // Unit-norm aggregated residuals, before the projection.
  Tensor<S> normalized_encoding(Tape<S>& tape, const Tensor<S>& x) {
    Tensor<S> e =
        ops::encoding_aggregate(tape, x, codewords_.tensor, smoothing_.tensor);
    return ops::l2_normalize_rows(tape, e);
  }

  // Soft assignment weights [N, H*W, K]; rows sum to one.
  Tensor<S> assignments(const Tensor<S>& x) const {
    return ops::encoding_assignments(x, codewords_.tensor, smoothing_.tensor);
  }

  Index output_len() const { return cfg_.output_dim; }
  const EncodingConfig& config() const { return cfg_; }

  void collect(ParamRefs<S>& out) {
    out.push_back(&codewords_);
    out.push_back(&smoothing_);
    proj_.collect(out);
    bn_.collect(out);
  }

 private:
  EncodingConfig cfg_;
  Index in_channels_ = 0;
  Parameter<S> codewords_, smoothing_;
  LinearModule<S> proj_;
  BatchNormModule<S> bn_;
};

namespace ops {

// Per-window fractal dimension of a single-channel block by continuous
// differential box counting. The input is tiled into non-overlapping
// windows of 2 * max(scales) pixels; within each window, box counts at
// every scale come from cell ranges divided by a box height proportional
// to the cell size, and the dimension is the negated least-squares slope
// of log(count) against log(scale), clamped to [0, 3]. Constant windows
// yield exactly 2, smooth gradients land a shade under it (a cell of side
// p spans only p - 1 value steps), and rougher surfaces move toward 3, so
// estimates land around the [2, 3] band the bins cover.
template <typename S>
Tensor<S> fractal_dimension_map(Tape<S>& tape, const Tensor<S>& x,
                                const std::vector<Index>& scales) {
  detail::check_rank4("fractal_dimension_map", x);
  if (x.dim(1) != 1)
    throw ShapeError("fractal_dimension_map: expected a single channel, got " +
                     shape_str(x.shape()));
  FractalConfig probe;
  probe.scales = scales;
  probe.validate();
  const Index window = probe.window();
  const Index h = x.dim(2), w = x.dim(3);
  if (h < window || w < window)
    throw ShapeError("fractal_dimension_map: input " + shape_str(x.shape()) +
                     " is smaller than the analysis window " +
                     std::to_string(window));

  Tensor<S> block = x;
  const Index hc = h - h % window, wc = w - w % window;
  if (hc != h || wc != w) block = crop2d(tape, x, 0, 0, hc, wc);

  // Per-window value range; the small offset keeps the box height positive
  // over flat windows.
  Tensor<S> range_w =
      sub(tape, cell_max(tape, block, window), cell_min(tape, block, window));
  const S delta = S(1e-8);

  std::vector<double> log_s;
  for (Index s : scales) log_s.push_back(std::log(static_cast<double>(s)));
  const double mean_ls =
      std::accumulate(log_s.begin(), log_s.end(), 0.0) / static_cast<double>(log_s.size());
  double denom = 0;
  for (double ls : log_s) denom += (ls - mean_ls) * (ls - mean_ls);
  if (scales.size() < 2 || denom <= 0)
    return Tensor<S>::full({x.dim(0), Index(1), hc / window, wc / window}, S(2));

  Tensor<S> slope;
  for (std::size_t si = 0; si < scales.size(); ++si) {
    const Index p = probe.cell_pixels(scales[si]);
    const Index cells = window / p;  // per window side at this scale
    Tensor<S> cell_range =
        sub(tape, cell_max(tape, block, p), cell_min(tape, block, p));
    // Box height p * (range + delta) / window, broadcast to the cell grid.
    Tensor<S> height = up_nearest(tape, add_scalar(tape, range_w, delta), cells);
    height = mul_scalar(tape, height,
                        static_cast<S>(p) / static_cast<S>(window));
    Tensor<S> boxes = add_scalar(tape, div(tape, cell_range, height), S(1));
    Tensor<S> count = mul_scalar(tape, avg_pool2d(tape, boxes, cells, cells),
                                 static_cast<S>(cells * cells));
    Tensor<S> term = mul_scalar(tape, log(tape, count),
                                static_cast<S>((log_s[si] - mean_ls) / denom));
    slope = si == 0 ? term : add(tape, slope, term);
  }
  return clamp(tape, neg(tape, slope), S(0), S(3));
}

}  // namespace ops

// Fractal analysis pooling: upsample, reduce to one channel, estimate the
// local fractal dimension per window, then soft-bin the dimensions.
template <typename S>
class FractalLayer {
 public:
  FractalLayer() = default;

  explicit FractalLayer(const FractalConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const Index b = cfg_.n_bins;
    // Soft bins over the dimension band [2, 3] where natural textures live.
    Tensor<S> centers = Tensor<S>::empty({Index(1), b});
    for (Index j = 0; j < b; ++j)
      centers.value()[j] =
          b == 1 ? S(2.5)
                 : S(2) + static_cast<S>(j) / static_cast<S>(b - 1);
    centers_ = Parameter<S>("fractal.centers", std::move(centers));
    const S raw = std::log(S(1) / static_cast<S>(std::max<Index>(b - 1, 1)));
    width_raw_ = Parameter<S>("fractal.width_raw", Tensor<S>::full({Index(1), b}, raw));
  }

  // x:[N,C,H,W] -> [N, n_bins]. The block is upsampled at least twofold (and
  // to no less than the analysis window) so every image yields at least one
  // window.
  Tensor<S> forward(Tape<S>& tape, const Tensor<S>& x) {
    Tensor<S> up = upsampled(tape, x);
    Tensor<S> mono = ops::channel_mean(tape, up);
    Tensor<S> dims = ops::fractal_dimension_map(tape, mono, cfg_.scales);
    return ops::rbf_histogram(tape, dims, centers_.tensor, width_raw_.tensor,
                              /*normalize=*/false);
  }

  Tensor<S> upsampled(Tape<S>& tape, const Tensor<S>& x) const {
    const Index target_h = std::max(2 * x.dim(2), cfg_.window());
    const Index target_w = std::max(2 * x.dim(3), cfg_.window());
    return ops::resize_bilinear(tape, x, target_h, target_w);
  }

  Index output_len() const { return cfg_.n_bins; }
  const FractalConfig& config() const { return cfg_; }

  void collect(ParamRefs<S>& out) {
    out.push_back(&centers_);
    out.push_back(&width_raw_);
  }

 private:
  FractalConfig cfg_;
  Parameter<S> centers_, width_raw_;
};

// Global average pooling followed by a small dense projection and BN.
template <typename S>
class GapLayer {
 public:
  GapLayer() = default;

  GapLayer(Index in_channels, const GapConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    fc_ = LinearModule<S>("gap.fc", in_channels, cfg_.output_dim, rng);
    bn_ = BatchNormModule<S>("gap.bn", cfg_.output_dim);
  }

  Tensor<S> forward(Tape<S>& tape, const Tensor<S>& x, bool training) {
    Tensor<S> pooled = ops::spatial_mean(tape, x);
    Tensor<S> p = fc_.forward(tape, pooled);
    return bn_.forward(tape, p, training);
  }

  Index output_len() const { return cfg_.output_dim; }
  const GapConfig& config() const { return cfg_; }

  void collect(ParamRefs<S>& out) {
    fc_.collect(out);
    bn_.collect(out);
  }

 private:
  GapConfig cfg_;
  LinearModule<S> fc_;
  BatchNormModule<S> bn_;
};

}  // namespace texton

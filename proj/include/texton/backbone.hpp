#pragma once

#include <string>
#include <vector>

#include "texton/nn_modules.hpp"

// Compact residual CNN that produces the shared activation block the
// texture encodings read from. Stages halve the spatial extent (except the
// first) and widen the channels; shortcuts are parameter-free (average pool
// plus zero channel padding), and blocks end at the shortcut sum without a
// trailing ReLU so that a zeroed residual branch is exactly the identity.

namespace texton {

struct BackboneConfig {
  std::vector<Index> stage_channels{64, 128, 256, 512};
  Index blocks_per_stage = 2;
  Index input_resolution = 224;
  Index in_channels = 3;
  bool stem_pool = true;  // extra stride-2 average pool after the stem conv

  Index total_stride() const {
    Index s = stem_pool ? 4 : 2;
    for (std::size_t i = 1; i < stage_channels.size(); ++i) s *= 2;
    return s;
  }
  Index final_channels() const { return stage_channels.back(); }
  Index final_spatial() const { return input_resolution / total_stride(); }

  void validate() const {
    if (stage_channels.empty())
      throw ConfigError("backbone: at least one stage is required");
    for (Index c : stage_channels)
      if (c < 1) throw ConfigError("backbone: stage channels must be positive");
    if (blocks_per_stage < 1)
      throw ConfigError("backbone: blocks per stage must be >= 1");
    if (input_resolution < total_stride() ||
        input_resolution % total_stride() != 0)
      throw ConfigError("backbone: input resolution " +
                        std::to_string(input_resolution) +
                        " is not a positive multiple of the total stride " +
                        std::to_string(total_stride()));
  }

  static BackboneConfig paper_scale() { return BackboneConfig{}; }

  static BackboneConfig desk_scale() {
    BackboneConfig c;
    c.stage_channels = {16, 32, 64};
    c.blocks_per_stage = 1;
    c.input_resolution = 64;
    c.stem_pool = false;
    return c;
  }
};

template <typename S>
struct ResidualBlock {
  Index in_ch = 0, out_ch = 0, stride = 1;
  Conv2dModule<S> conv1, conv2;
  BatchNormModule<S> bn1, bn2;

  ResidualBlock() = default;
  ResidualBlock(const std::string& name, Index in, Index out, Index stride_, Rng& rng)
      : in_ch(in),
        out_ch(out),
        stride(stride_),
        conv1(name + ".conv1", in, out, 3, stride_, 1, rng),
        conv2(name + ".conv2", out, out, 3, 1, 1, rng),
        bn1(name + ".bn1", out),
        bn2(name + ".bn2", out) {}

  Tensor<S> forward(Tape<S>& tape, const Tensor<S>& x, bool training) {
    Tensor<S> h = conv1.forward(tape, x);
    h = bn1.forward(tape, h, training);
    h = ops::relu(tape, h);
    h = conv2.forward(tape, h);
    h = bn2.forward(tape, h, training);

    Tensor<S> skip = x;
    if (stride > 1) skip = ops::avg_pool2d(tape, skip, stride, stride);
    if (out_ch > in_ch) skip = ops::pad_channels(tape, skip, out_ch);
    return ops::add(tape, skip, h);
  }

  void collect(ParamRefs<S>& out) {
    conv1.collect(out);
    bn1.collect(out);
    conv2.collect(out);
    bn2.collect(out);
  }
};

template <typename S>
class Backbone {
 public:
  Backbone() = default;

  Backbone(const BackboneConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    stem_ = Conv2dModule<S>("backbone.stem", cfg_.in_channels,
                            cfg_.stage_channels[0], 3, 2, 1, rng);
    stem_bn_ = BatchNormModule<S>("backbone.stem_bn", cfg_.stage_channels[0]);
    Index in = cfg_.stage_channels[0];
    for (std::size_t si = 0; si < cfg_.stage_channels.size(); ++si) {
      const Index out = cfg_.stage_channels[si];
      for (Index bi = 0; bi < cfg_.blocks_per_stage; ++bi) {
        const Index stride = (si > 0 && bi == 0) ? 2 : 1;
        blocks_.emplace_back("backbone.stage" + std::to_string(si) + ".block" +
                                 std::to_string(bi),
                             in, out, stride, rng);
        in = out;
      }
    }
  }

  // x:[N,3,H,W] -> [N, final_channels, H/stride, W/stride]. H and W must be
  // positive multiples of the total stride so every stage sees an even
  // extent.
  Tensor<S> forward(Tape<S>& tape, const Tensor<S>& x, bool training) {
    if (x.rank() != 4 || x.dim(1) != cfg_.in_channels)
      throw ShapeError("backbone: expected [N," + std::to_string(cfg_.in_channels) +
                       ",H,W] input, got " + shape_str(x.shape()));
    const Index stride = cfg_.total_stride();
    if (x.dim(2) < stride || x.dim(2) % stride != 0 || x.dim(3) < stride ||
        x.dim(3) % stride != 0)
      throw ShapeError("backbone: spatial extent of " + shape_str(x.shape()) +
                       " is not a positive multiple of the total stride " +
                       std::to_string(stride));
    Tensor<S> h = stem_.forward(tape, x);
    h = stem_bn_.forward(tape, h, training);
    h = ops::relu(tape, h);
    if (cfg_.stem_pool) h = ops::avg_pool2d(tape, h, 2, 2);
    for (auto& block : blocks_) h = block.forward(tape, h, training);
    return h;
  }

  void collect(ParamRefs<S>& out) {
    stem_.collect(out);
    stem_bn_.collect(out);
    for (auto& b : blocks_) b.collect(out);
  }

  const BackboneConfig& config() const { return cfg_; }
  std::vector<ResidualBlock<S>>& blocks() { return blocks_; }

 private:
  BackboneConfig cfg_;
  Conv2dModule<S> stem_;
  BatchNormModule<S> stem_bn_;
  std::vector<ResidualBlock<S>> blocks_;
};

}  // namespace texton

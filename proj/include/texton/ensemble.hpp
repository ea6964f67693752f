#pragma once

#include <array>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "texton/backbone.hpp"
#include "texton/te_layers.hpp"

// Ensemble of texture encodings over a shared backbone. A selection picks
// any non-empty subset of the four methods; their per-image features are
// fused by concatenation (default) or, for exactly two methods, a bilinear
// outer product, and a dense head maps the fused vector to class logits.

namespace texton {

struct MethodSelection {
  bool deepten = false;
  bool gap = false;
  bool histogram = false;
  bool fap = false;

  static constexpr std::array<const char*, 4> names{"deepten", "gap", "histogram",
                                                    "fap"};

  std::array<bool, 4> flags() const { return {deepten, gap, histogram, fap}; }

  int count() const {
    int n = 0;
    for (bool f : flags()) n += f;
    return n;
  }

  // Bitmask with bit 0 = deepten, 1 = gap, 2 = histogram, 3 = fap.
  unsigned mask() const {
    unsigned m = 0;
    const auto f = flags();
    for (unsigned i = 0; i < 4; ++i)
      if (f[i]) m |= 1u << i;
    return m;
  }

  static MethodSelection from_mask(unsigned m) {
    if (m == 0 || m > 15)
      throw ConfigError("method selection: mask " + std::to_string(m) +
                        " outside [1,15]");
    MethodSelection s;
    s.deepten = m & 1u;
    s.gap = m & 2u;
    s.histogram = m & 4u;
    s.fap = m & 8u;
    return s;
  }

  // Comma-separated method names, e.g. "deepten,histogram,fap".
  static MethodSelection parse(const std::string& csv) {
    MethodSelection s;
    std::stringstream ss(csv);
    std::string tok;
    bool any = false;
    while (std::getline(ss, tok, ',')) {
      if (tok.empty()) continue;
      any = true;
      if (tok == "deepten")
        s.deepten = true;
      else if (tok == "gap")
        s.gap = true;
      else if (tok == "histogram")
        s.histogram = true;
      else if (tok == "fap")
        s.fap = true;
      else
        throw ConfigError("method selection: unknown method '" + tok + "'");
    }
    if (!any) throw ConfigError("method selection: no methods given");
    return s;
  }

  std::string to_string() const {
    std::string out;
    const auto f = flags();
    for (unsigned i = 0; i < 4; ++i)
      if (f[i]) {
        if (!out.empty()) out += ',';
        out += names[i];
      }
    return out;
  }

  bool operator==(const MethodSelection& o) const { return mask() == o.mask(); }
};

enum class AggregatorKind { concat, bilinear };

inline AggregatorKind parse_aggregator(const std::string& s) {
  if (s == "concat") return AggregatorKind::concat;
  if (s == "bilinear") return AggregatorKind::bilinear;
  throw ConfigError("aggregator: expected 'concat' or 'bilinear', got '" + s + "'");
}

inline const char* aggregator_name(AggregatorKind k) {
  return k == AggregatorKind::concat ? "concat" : "bilinear";
}

// Feature fusion by concatenation along the feature axis.
template <typename S>
Tensor<S> aggregate_concat(Tape<S>& tape, const std::vector<Tensor<S>>& features) {
  return ops::concat(tape, features, 1);
}

// Feature fusion by flattened pairwise outer product; width is the product
// of the two input widths.
template <typename S>
Tensor<S> aggregate_bilinear(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b) {
  return ops::bilinear_outer(tape, a, b);
}

struct ModelConfig {
  BackboneConfig backbone;
  HistogramConfig histogram;
  EncodingConfig encoding;
  FractalConfig fractal;
  GapConfig gap;
  MethodSelection methods = MethodSelection::from_mask(0b1101);  // deepten+histogram+fap
  AggregatorKind aggregator = AggregatorKind::concat;
  Index n_classes = 4;

  void validate() const {
    backbone.validate();
    histogram.validate();
    encoding.validate();
    fractal.validate();
    gap.validate();
    if (methods.count() < 1)
      throw ConfigError("model: at least one method must be selected");
    if (aggregator == AggregatorKind::bilinear && methods.count() != 2)
      throw ConfigError("model: bilinear aggregation needs exactly 2 methods, got " +
                        std::to_string(methods.count()));
    if (n_classes < 2) throw ConfigError("model: need at least 2 classes");
  }
};

template <typename S>
class EnsembleModel {
 public:
  EnsembleModel() = default;

  EnsembleModel(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    backbone_ = Backbone<S>(cfg_.backbone, rng);
    const Index c = cfg_.backbone.final_channels();
    if (cfg_.methods.deepten) encoding_ = EncodingLayer<S>(c, cfg_.encoding, rng);
    if (cfg_.methods.gap) gap_ = GapLayer<S>(c, cfg_.gap, rng);
    if (cfg_.methods.histogram)
      histogram_ = HistogramLayer<S>(c, cfg_.histogram, rng);
    if (cfg_.methods.fap) fractal_ = FractalLayer<S>(cfg_.fractal);
    head_ = LinearModule<S>("head.fc", feature_width(), cfg_.n_classes, rng);
    check_imbalance();
  }

  // Widths of the selected methods, in selection order.
  std::vector<std::pair<std::string, Index>> method_widths() const {
    std::vector<std::pair<std::string, Index>> out;
    if (cfg_.methods.deepten) out.emplace_back("deepten", cfg_.encoding.output_dim);
    if (cfg_.methods.gap) out.emplace_back("gap", cfg_.gap.output_dim);
    if (cfg_.methods.histogram)
      out.emplace_back("histogram", cfg_.histogram.output_len());
    if (cfg_.methods.fap) out.emplace_back("fap", cfg_.fractal.n_bins);
    return out;
  }

  // Fused feature width: sum of widths for concat, product for bilinear.
  Index feature_width() const {
    const auto widths = method_widths();
    if (cfg_.aggregator == AggregatorKind::bilinear)
      return widths[0].second * widths[1].second;
    Index total = 0;
    for (const auto& [name, w] : widths) total += w;
    return total;
  }

  // Per-method feature vectors from a shared backbone pass.
  std::vector<std::pair<std::string, Tensor<S>>> forward_features(
      Tape<S>& tape, const Tensor<S>& images, bool training) {
    Tensor<S> block = backbone_.forward(tape, images, training);
    std::vector<std::pair<std::string, Tensor<S>>> out;
    if (cfg_.methods.deepten)
      out.emplace_back("deepten", encoding_.forward(tape, block, training));
    if (cfg_.methods.gap)
      out.emplace_back("gap", gap_.forward(tape, block, training));
    if (cfg_.methods.histogram)
      out.emplace_back("histogram", histogram_.forward(tape, block));
    if (cfg_.methods.fap) out.emplace_back("fap", fractal_.forward(tape, block));
    return out;
  }

  Tensor<S> aggregate(Tape<S>& tape,
                      const std::vector<std::pair<std::string, Tensor<S>>>& feats) {
    if (cfg_.aggregator == AggregatorKind::bilinear)
      return aggregate_bilinear(tape, feats[0].second, feats[1].second);
    std::vector<Tensor<S>> list;
    for (const auto& [name, f] : feats) list.push_back(f);
    return aggregate_concat(tape, list);
  }

  Tensor<S> forward(Tape<S>& tape, const Tensor<S>& images, bool training) {
    auto feats = forward_features(tape, images, training);
    Tensor<S> fused = aggregate(tape, feats);
    return head_.forward(tape, fused);
  }

  ParamRefs<S> parameters(bool include_backbone = true) {
    ParamRefs<S> out;
    if (include_backbone) backbone_.collect(out);
    if (cfg_.methods.deepten) encoding_.collect(out);
    if (cfg_.methods.gap) gap_.collect(out);
    if (cfg_.methods.histogram) histogram_.collect(out);
    if (cfg_.methods.fap) fractal_.collect(out);
    head_.collect(out);
    return out;
  }

  const ModelConfig& config() const { return cfg_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  Backbone<S>& backbone() { return backbone_; }
  EncodingLayer<S>& encoding_layer() { return encoding_; }
  HistogramLayer<S>& histogram_layer() { return histogram_; }
  FractalLayer<S>& fractal_layer() { return fractal_; }
  GapLayer<S>& gap_layer() { return gap_; }

 private:
  void check_imbalance() {
    const auto widths = method_widths();
    if (widths.size() < 2 || cfg_.aggregator != AggregatorKind::concat) return;
    Index total = 0, widest = 0;
    std::string widest_name;
    for (const auto& [name, w] : widths) {
      total += w;
      if (w > widest) {
        widest = w;
        widest_name = name;
      }
    }
    if (widest * 4 >= total * 3)
      warnings_.push_back("feature widths are imbalanced: '" + widest_name +
                          "' contributes " + std::to_string(widest) + " of " +
                          std::to_string(total) + " fused dimensions");
  }

  ModelConfig cfg_;
  Backbone<S> backbone_;
  EncodingLayer<S> encoding_;
  GapLayer<S> gap_;
  HistogramLayer<S> histogram_;
  FractalLayer<S> fractal_;
  LinearModule<S> head_;
  std::vector<std::string> warnings_;
};

}  // namespace texton

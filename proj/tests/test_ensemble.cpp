#include <doctest.h>

#include "texton/ensemble.hpp"

using namespace texton;

namespace {

ModelConfig desk_model(unsigned mask, AggregatorKind agg = AggregatorKind::concat) {
  ModelConfig cfg;
  cfg.backbone = BackboneConfig::desk_scale();
  cfg.histogram.reduced_channels = 8;
  cfg.histogram.n_bins = 4;
  cfg.encoding.n_codewords = 8;
  cfg.encoding.output_dim = 32;
  cfg.gap.output_dim = 16;
  cfg.methods = MethodSelection::from_mask(mask);
  cfg.aggregator = agg;
  cfg.n_classes = 4;
  return cfg;
}

ModelConfig paper_model(unsigned mask) {
  ModelConfig cfg;
  cfg.histogram.reduced_channels = 32;
  cfg.histogram.n_bins = 4;
  cfg.histogram.groups = 512;
  cfg.encoding.n_codewords = 8;
  cfg.encoding.output_dim = 128;
  cfg.fractal.n_bins = 16;
  cfg.gap.output_dim = 48;
  cfg.methods = MethodSelection::from_mask(mask);
  cfg.n_classes = 10;
  return cfg;
}

}  // namespace

TEST_CASE("method selection masks, names and round trips") {
  auto sel = MethodSelection::parse("deepten,histogram,fap");
  CHECK(sel.mask() == 0b1101);
  CHECK(sel.count() == 3);
  CHECK(sel.to_string() == "deepten,histogram,fap");
  CHECK(MethodSelection::from_mask(sel.mask()) == sel);

  CHECK_THROWS_AS(MethodSelection::parse("deepten,unknown"), ConfigError);
  CHECK_THROWS_AS(MethodSelection::parse(""), ConfigError);
  CHECK_THROWS_AS(MethodSelection::from_mask(0), ConfigError);
  CHECK_THROWS_AS(MethodSelection::from_mask(16), ConfigError);

  for (unsigned m = 1; m <= 15; ++m)
    CHECK(MethodSelection::from_mask(m).mask() == m);
}

TEST_CASE("paper-scale fused widths follow the additive size law") {
  Rng rng(81);
  EnsembleModel<float> three(paper_model(0b1101), rng);  // deepten+histogram+fap
  CHECK(three.feature_width() == 272);

  EnsembleModel<float> four(paper_model(0b1111), rng);
  CHECK(four.feature_width() == 320);

  EnsembleModel<float> two(paper_model(0b0011), rng);  // deepten+gap
  CHECK(two.feature_width() == 176);

  // Per-method widths behind those sums.
  const auto widths = four.method_widths();
  REQUIRE(widths.size() == 4);
  CHECK(widths[0].first == "deepten");
  CHECK(widths[0].second == 128);
  CHECK(widths[1].first == "gap");
  CHECK(widths[1].second == 48);
  CHECK(widths[2].first == "histogram");
  CHECK(widths[2].second == 128);
  CHECK(widths[3].first == "fap");
  CHECK(widths[3].second == 16);
}

TEST_CASE("every non-empty method subset builds and classifies") {
  for (unsigned mask = 1; mask <= 15; ++mask) {
    Rng rng(100 + mask);
    EnsembleModel<float> model(desk_model(mask), rng);

    Index expect = 0;
    const auto sel = MethodSelection::from_mask(mask);
    if (sel.deepten) expect += 32;
    if (sel.gap) expect += 16;
    if (sel.histogram) expect += 32;
    if (sel.fap) expect += 16;
    CHECK(model.feature_width() == expect);

    Rng xr(200 + mask);
    auto x = Tensor<float>::uniform({2, 3, 64, 64}, xr, 0, 1);
    Tape<float> tape;
    tape.set_recording(false);
    auto logits = model.forward(tape, x, /*training=*/false);
    CHECK(logits.shape() == Shape{2, 4});
    CHECK(std::isfinite(static_cast<double>(logits.value().abs().maxCoeff())));

    const auto feats = model.forward_features(tape, x, false);
    CHECK(static_cast<int>(feats.size()) == sel.count());
    Index total = 0;
    for (const auto& [name, f] : feats) total += f.dim(1);
    CHECK(total == expect);
  }
}

TEST_CASE("bilinear fusion width is the product of the two parts") {
  Rng rng(82);
  EnsembleModel<float> model(desk_model(0b0011, AggregatorKind::bilinear), rng);
  CHECK(model.feature_width() == 32 * 16);

  Rng xr(83);
  auto x = Tensor<float>::uniform({2, 3, 64, 64}, xr, 0, 1);
  Tape<float> tape;
  tape.set_recording(false);
  auto logits = model.forward(tape, x, false);
  CHECK(logits.shape() == Shape{2, 4});
}

TEST_CASE("bilinear width law and the pairwise inequality, 20 random pairs") {
  Rng rng(84);
  for (int t = 0; t < 20; ++t) {
    const Index i = 2 + static_cast<Index>(rng.uniform_int(40));
    const Index j = 2 + static_cast<Index>(rng.uniform_int(40));
    auto a = Tensor<float>::uniform({3, i}, rng, -1, 1);
    auto b = Tensor<float>::uniform({3, j}, rng, -1, 1);
    Tape<float> tape;
    auto y = aggregate_bilinear(tape, a, b);
    CHECK(y.dim(1) == i * j);
    CHECK(i * j >= i + j);  // outer product never narrower than concat
  }
}

TEST_CASE("bilinear aggregation demands exactly two methods") {
  CHECK_THROWS_AS(desk_model(0b1101, AggregatorKind::bilinear).validate(),
                  ConfigError);
  CHECK_THROWS_AS(desk_model(0b0001, AggregatorKind::bilinear).validate(),
                  ConfigError);
  CHECK_NOTHROW(desk_model(0b0011, AggregatorKind::bilinear).validate());
}

TEST_CASE("aggregator parsing") {
  CHECK(parse_aggregator("concat") == AggregatorKind::concat);
  CHECK(parse_aggregator("bilinear") == AggregatorKind::bilinear);
  CHECK_THROWS_AS(parse_aggregator("sum"), ConfigError);
}

TEST_CASE("a method dominating the fused width draws a warning") {
  Rng rng(85);
  EnsembleModel<float> skewed(paper_model(0b1001), rng);  // deepten 128 + fap 16
  CHECK_FALSE(skewed.warnings().empty());

  EnsembleModel<float> balanced(desk_model(0b1111), rng);
  CHECK(balanced.warnings().empty());
}

TEST_CASE("parameters() can exclude the backbone for frozen fine-tuning") {
  Rng rng(86);
  EnsembleModel<float> model(desk_model(0b1111), rng);
  const auto all = model.parameters(true);
  const auto heads = model.parameters(false);
  CHECK(all.size() > heads.size());
  for (auto* p : heads)
    CHECK(p->name.rfind("backbone.", 0) != 0);
}

TEST_CASE("training mode forward works with batch statistics") {
  Rng rng(87);
  EnsembleModel<float> model(desk_model(0b1111), rng);
  Rng xr(88);
  auto x = Tensor<float>::uniform({4, 3, 64, 64}, xr, 0, 1);
  Tape<float> tape;
  auto logits = model.forward(tape, x, true);
  CHECK(logits.dim(0) == 4);
  CHECK(tape.size() > 0);

  auto loss = ops::softmax_cross_entropy(tape, logits,
                                         std::vector<int>{0, 1, 2, 3});
  CHECK_NOTHROW(tape.backward(loss));
  // Some gradient reached the first stem weight.
  const auto params = model.parameters(true);
  double gmax = 0;
  for (auto* p : params)
    gmax = std::max(gmax, static_cast<double>(p->tensor.grad().abs().maxCoeff()));
  CHECK(gmax > 0);
}

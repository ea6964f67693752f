#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "texton/synth.hpp"
#include "texton/training.hpp"

using namespace texton;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Closed form for one cosine arc, written out again here so the scheduler
// is checked against the formula rather than against itself.
double cosine_arc(double lr_max, double lr_min, double t, double len) {
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(kPi * t / len));
}

}  // namespace

TEST_CASE("scheduler names parse both ways") {
  CHECK(parse_scheduler("cosine") == SchedulerKind::cosine);
  CHECK(parse_scheduler("cosine_warm_restarts") ==
        SchedulerKind::cosine_warm_restarts);
  CHECK_THROWS_AS(parse_scheduler("step"), ConfigError);
  CHECK(scheduler_name(SchedulerKind::cosine) == std::string("cosine"));
  CHECK(scheduler_name(SchedulerKind::cosine_warm_restarts) ==
        std::string("cosine_warm_restarts"));
}

TEST_CASE("plain cosine schedule matches its closed form at every step") {
  const double lr_max = 0.1, lr_min = 0.001;
  const std::int64_t total = 137;
  double prev = lr_max + 1;
  for (std::int64_t t = 0; t < total; ++t) {
    const double lr =
        lr_at_step(SchedulerKind::cosine, lr_max, lr_min, t, total, 1, 1);
    CHECK(std::abs(lr - cosine_arc(lr_max, lr_min, static_cast<double>(t),
                                   static_cast<double>(total))) < 1e-9);
    CHECK(lr < prev);  // strictly decreasing across one arc
    prev = lr;
  }
  CHECK(lr_at_step(SchedulerKind::cosine, lr_max, lr_min, 0, total, 1, 1) ==
        doctest::Approx(lr_max).epsilon(1e-12));
  // Midpoint of the arc sits exactly halfway between the extremes.
  CHECK(lr_at_step(SchedulerKind::cosine, lr_max, lr_min, 100, 200, 1, 1) ==
        doctest::Approx(0.5 * (lr_max + lr_min)).epsilon(1e-12));
}

TEST_CASE("warm restarts rewind to lr_max at every cycle boundary") {
  const double lr_max = 0.05, lr_min = 0.0;
  const std::int64_t t0 = 5;
  const int mult = 2;

  // Cycles cover [0,5), [5,15), [15,35): lengths 5, 10, 20.
  std::int64_t boundaries[] = {0, 5, 15, 35};
  for (std::int64_t b : boundaries)
    CHECK(lr_at_step(SchedulerKind::cosine_warm_restarts, lr_max, lr_min, b, 1,
                     t0, mult) == doctest::Approx(lr_max).epsilon(1e-12));

  // Inside a cycle the schedule is the plain arc over that cycle's length.
  for (std::int64_t t = 0; t < 35; ++t) {
    std::int64_t start = 0, len = t0;
    while (t >= start + len) {
      start += len;
      len *= mult;
    }
    const double expect = cosine_arc(lr_max, lr_min,
                                     static_cast<double>(t - start),
                                     static_cast<double>(len));
    CHECK(std::abs(lr_at_step(SchedulerKind::cosine_warm_restarts, lr_max,
                              lr_min, t, 1, t0, mult) -
                   expect) < 1e-9);
  }

  // t_mult of 1 repeats the same arc forever.
  CHECK(lr_at_step(SchedulerKind::cosine_warm_restarts, lr_max, lr_min, 12, 1,
                   4, 1) ==
        doctest::Approx(cosine_arc(lr_max, lr_min, 0, 4)).epsilon(1e-12));

  CHECK_THROWS_AS(
      lr_at_step(SchedulerKind::cosine, lr_max, lr_min, -1, 10, 1, 1),
      std::invalid_argument);
  CHECK_THROWS_AS(lr_at_step(SchedulerKind::cosine_warm_restarts, lr_max,
                             lr_min, 3, 1, 0, 2),
                  std::invalid_argument);
}

TEST_CASE("training configuration validation rejects out-of-range values") {
  TrainConfig good;
  CHECK_NOTHROW(good.validate());

  auto broken = [](auto&& tweak) {
    TrainConfig c;
    tweak(c);
    return c;
  };
  CHECK_THROWS_AS(broken([](TrainConfig& c) { c.epochs = 0; }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(broken([](TrainConfig& c) { c.batch_size = 1; }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(broken([](TrainConfig& c) { c.lr = 0; }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(broken([](TrainConfig& c) { c.lr_min = c.lr * 2; }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(broken([](TrainConfig& c) { c.momentum = 1.0; }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(
      broken([](TrainConfig& c) { c.weight_decay = -0.1; }).validate(),
      ConfigError);
  CHECK_THROWS_AS(broken([](TrainConfig& c) { c.t0_epochs = 0; }).validate(),
                  ConfigError);
}

TEST_CASE("momentum SGD applies the coupled weight-decay update") {
  Tensor<float> t = Tensor<float>::empty({2});
  t.value() << 1.0f, -2.0f;
  Parameter<float> w("w", t);
  SgdOptimizer opt({&w}, 0.5, 0.1);

  // Step 1: v = g + wd*w, w -= lr*v for each coordinate.
  w.grad()[0] = 0.3f;
  w.grad()[1] = -0.2f;
  opt.step(0.2);
  const float v0 = 0.3f + 0.1f * 1.0f;    // 0.4
  const float v1 = -0.2f + 0.1f * -2.0f;  // -0.4
  CHECK(w.value()[0] == doctest::Approx(1.0f - 0.2f * v0).epsilon(1e-6));
  CHECK(w.value()[1] == doctest::Approx(-2.0f - 0.2f * v1).epsilon(1e-6));

  // Step 2 folds the previous velocity in at momentum 0.5.
  const float w0 = w.value()[0], w1 = w.value()[1];
  opt.zero_grad();
  CHECK(w.grad()[0] == 0.0f);
  w.grad()[0] = 0.1f;
  w.grad()[1] = 0.1f;
  opt.step(0.2);
  const float u0 = 0.5f * v0 + 0.1f + 0.1f * w0;
  const float u1 = 0.5f * v1 + 0.1f + 0.1f * w1;
  CHECK(w.value()[0] == doctest::Approx(w0 - 0.2f * u0).epsilon(1e-6));
  CHECK(w.value()[1] == doctest::Approx(w1 - 0.2f * u1).epsilon(1e-6));
}

TEST_CASE("optimizer refuses non-finite gradients") {
  Tensor<float> t = Tensor<float>::empty({1});
  t.value()[0] = 1.0f;
  Parameter<float> w("w", t);
  SgdOptimizer opt({&w}, 0.9, 0.0);
  w.grad()[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(opt.step(0.1), NumericError);
  w.grad()[0] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(opt.step(0.1), NumericError);
}

TEST_CASE("image batching preserves layout and rejects mixed extents") {
  Image a = Image::make(1, 2, 2);
  Image b = Image::make(1, 2, 2);
  for (int i = 0; i < 4; ++i) {
    a.pixels[static_cast<std::size_t>(i)] = static_cast<float>(i);
    b.pixels[static_cast<std::size_t>(i)] = static_cast<float>(10 + i);
  }
  const Tensor<float> batch = batch_from_images({&a, &b});
  REQUIRE(batch.shape() == Shape({2, 1, 2, 2}));
  for (int i = 0; i < 4; ++i) {
    CHECK(batch.value()[i] == static_cast<float>(i));
    CHECK(batch.value()[4 + i] == static_cast<float>(10 + i));
  }

  Image odd = Image::make(1, 2, 3);
  CHECK_THROWS_AS(batch_from_images({&a, &odd}), ShapeError);
  CHECK_THROWS_AS(batch_from_images({}), std::invalid_argument);
}

TEST_CASE("row argmax breaks ties toward the lowest index") {
  Tensor<float> logits = Tensor<float>::empty({3, 3});
  logits.value() << 0.1f, 0.9f, 0.3f,  //
      0.7f, 0.7f, 0.2f,                //
      -1.0f, -3.0f, -0.5f;
  CHECK(argmax_rows(logits) == std::vector<int>({1, 0, 2}));
}

TEST_CASE("summary statistics") {
  CHECK(mean_of({1, 2, 3, 4}) == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(population_std({1, 2, 3, 4}) ==
        doctest::Approx(std::sqrt(1.25)).epsilon(1e-12));
  CHECK(population_std({7}) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("metrics header names the per-epoch columns") {
  std::ostringstream out;
  write_metrics_header(out);
  CHECK(out.str() == "run_id,epoch,lr,train_loss,test_acc\n");
}

namespace {

ModelConfig tiny_model_config() {
  ModelConfig mc;
  mc.backbone = BackboneConfig::desk_scale();
  mc.backbone.input_resolution = 32;
  mc.methods = MethodSelection::parse("gap");
  mc.gap.output_dim = 12;
  mc.n_classes = 4;
  return mc;
}

std::string train_tiny(TrainResult* result) {
  SynthConfig scfg = SynthConfig::default_four(32, 8, 33);
  Dataset data = synth_dataset(scfg);

  Split split;
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 8; ++i)
      (i < 6 ? split.train : split.test).push_back(c * 8 + i);

  AugmentConfig acfg;
  acfg.resize_short = 32;
  acfg.crop = 32;

  TrainConfig tcfg;
  tcfg.epochs = 5;
  tcfg.batch_size = 8;
  tcfg.lr = 0.05;
  tcfg.scheduler = SchedulerKind::cosine;
  tcfg.seed = 5;

  Rng init(derive_seed(9, "tiny-model"));
  EnsembleModel<float> model(tiny_model_config(), init);
  std::ostringstream metrics;
  const TrainResult r =
      train_model(model, data, split, tcfg, acfg, "tiny", &metrics, false);
  if (result) *result = r;
  return metrics.str();
}

}  // namespace

TEST_CASE("a small run learns the synthetic classes and logs one row per epoch") {
  TrainResult result;
  const std::string metrics = train_tiny(&result);

  REQUIRE(result.rows.size() == 5);
  CHECK(result.rows.front().epoch == 1);
  CHECK(result.rows.back().epoch == 5);
  CHECK(result.rows.front().lr == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(result.rows.back().train_loss < result.rows.front().train_loss);
  CHECK(result.best_acc >= 0.5);
  CHECK(result.final_acc == result.rows.back().test_acc);
  for (const EpochRow& row : result.rows) {
    CHECK(result.best_acc >= row.test_acc);
    CHECK(std::isfinite(row.train_loss));
  }

  int lines = 0;
  std::istringstream in(metrics);
  for (std::string line; std::getline(in, line);) {
    CHECK(line.rfind("tiny,", 0) == 0);
    ++lines;
  }
  CHECK(lines == 5);
}

TEST_CASE("training is bit-deterministic for a fixed seed") {
  const std::string first = train_tiny(nullptr);
  const std::string second = train_tiny(nullptr);
  CHECK(first == second);
  CHECK_FALSE(first.empty());
}

TEST_CASE("evaluation requires a non-empty index list") {
  Rng init(derive_seed(9, "tiny-model"));
  EnsembleModel<float> model(tiny_model_config(), init);
  SynthConfig scfg = SynthConfig::default_four(32, 1, 33);
  Dataset data = synth_dataset(scfg);
  AugmentConfig acfg;
  acfg.resize_short = 32;
  acfg.crop = 32;
  CHECK_THROWS_AS(evaluate_model(model, data, {}, acfg, 4),
                  std::invalid_argument);
}

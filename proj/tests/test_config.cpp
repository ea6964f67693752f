#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "texton/config.hpp"

using namespace texton;
namespace fs = std::filesystem;

namespace {

// Replays a "key = value" dump onto a fresh bundle of the same scale; the
// canonical form must be a fixed point of this.
RunConfig replay(const std::string& text, const std::string& scale) {
  RunConfig cfg = RunConfig::defaults(scale);
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    const std::size_t eq = line.find(" = ");
    REQUIRE(eq != std::string::npos);
    cfg.set(line.substr(0, eq), line.substr(eq + 3));
  }
  return cfg;
}

}  // namespace

TEST_CASE("paper-scale defaults carry the published widths and protocol") {
  const RunConfig cfg = RunConfig::defaults("paper");
  CHECK(cfg.model.backbone.stage_channels ==
        std::vector<Index>({64, 128, 256, 512}));
  CHECK(cfg.model.backbone.blocks_per_stage == 2);
  CHECK(cfg.model.backbone.input_resolution == 224);
  CHECK(cfg.model.backbone.stem_pool);
  CHECK(cfg.model.backbone.final_channels() == 512);
  CHECK(cfg.model.backbone.final_spatial() == 7);

  // Feature widths: 128 + 128 + 16 for the proposed trio, 320 with gap
  // added, 128 + 48 for the deepten/gap pair.
  CHECK(cfg.model.encoding.output_dim == 128);
  CHECK(cfg.model.histogram.output_len() == 128);
  CHECK(cfg.model.fractal.n_bins == 16);
  CHECK(cfg.model.gap.output_dim == 48);

  CHECK(cfg.augment.resize_short == 256);
  CHECK(cfg.augment.crop == 224);
  CHECK(cfg.train.epochs == 30);
  CHECK(cfg.train.batch_size == 16);
  CHECK(cfg.train.lr == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(cfg.train.scheduler == SchedulerKind::cosine_warm_restarts);
  CHECK(cfg.train.t0_epochs == 10);
  CHECK(cfg.train.t_mult == 2);
  CHECK(cfg.n_splits == 10);
  CHECK(cfg.train_fraction == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(cfg.model.methods.mask() == 0b1101);
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("desk-scale defaults shrink the model but stay valid") {
  const RunConfig cfg = RunConfig::defaults("desk");
  CHECK(cfg.model.backbone.stage_channels == std::vector<Index>({16, 32, 64}));
  CHECK(cfg.model.backbone.input_resolution == 64);
  CHECK_FALSE(cfg.model.backbone.stem_pool);
  CHECK(cfg.model.histogram.output_len() == 32);
  CHECK(cfg.model.encoding.output_dim == 32);
  CHECK(cfg.model.gap.output_dim == 16);
  CHECK(cfg.model.fractal.n_bins == 16);
  CHECK(cfg.augment.crop == 64);
  CHECK(cfg.train.epochs == 15);
  CHECK(cfg.train.scheduler == SchedulerKind::cosine);
  CHECK(cfg.n_splits == 2);
  CHECK_NOTHROW(cfg.validate());

  CHECK_THROWS_AS(RunConfig::defaults("pocket"), ConfigError);
}

TEST_CASE("benchmark protocols set the training recipe") {
  struct Expect {
    const char* name;
    int epochs, batch;
    double lr;
    SchedulerKind sched;
    bool five_crop;
  };
  const Expect table[] = {
      {"fmd", 30, 16, 1e-3, SchedulerKind::cosine_warm_restarts, false},
      {"dtd", 30, 64, 1e-2, SchedulerKind::cosine, true},
      {"kth", 30, 32, 5e-3, SchedulerKind::cosine, false},
      {"minc", 20, 64, 5e-3, SchedulerKind::cosine_warm_restarts, false},
      {"gtos", 20, 64, 5e-3, SchedulerKind::cosine, true},
      {"gtosm", 20, 128, 5e-2, SchedulerKind::cosine_warm_restarts, false},
  };
  for (const Expect& e : table) {
    RunConfig cfg = RunConfig::defaults("paper");
    cfg.apply_protocol(e.name);
    CHECK(cfg.protocol == e.name);
    CHECK(cfg.train.epochs == e.epochs);
    CHECK(cfg.train.batch_size == e.batch);
    CHECK(cfg.train.lr == doctest::Approx(e.lr).epsilon(1e-12));
    CHECK(cfg.train.scheduler == e.sched);
    CHECK(cfg.augment.five_crop_train == e.five_crop);
    CHECK(cfg.augment.five_crop_eval == e.five_crop);
  }

  RunConfig cfg = RunConfig::defaults("paper");
  CHECK_THROWS_AS(cfg.apply_protocol("imagenet"), ConfigError);
}

TEST_CASE("key assignment parses values and rejects junk") {
  RunConfig cfg = RunConfig::defaults("desk");

  cfg.set("ensemble.methods", "gap,fap");
  CHECK(cfg.model.methods.mask() == 0b1010);
  cfg.set("ensemble.aggregator", "bilinear");
  CHECK(cfg.model.aggregator == AggregatorKind::bilinear);
  cfg.set("fap.scales", "1, 2, 4");
  CHECK(cfg.model.fractal.scales == std::vector<Index>({1, 2, 4}));
  cfg.set("train.lr", "0.125");
  CHECK(cfg.train.lr == 0.125);
  cfg.set("data.norm_mean", "0.1,0.2,0.3");
  CHECK(cfg.augment.mean[2] == doctest::Approx(0.3f).epsilon(1e-6));
  cfg.set("histogram.normalize", "off");
  CHECK_FALSE(cfg.model.histogram.normalize_bins);
  cfg.set("run.seed", "777");
  CHECK(cfg.seed == 777);

  CHECK_THROWS_AS(cfg.set("texture.bins", "4"), ConfigError);
  CHECK_THROWS_AS(cfg.set("train.epochs", "many"), ConfigError);
  CHECK_THROWS_AS(cfg.set("train.lr", "1e-3x"), ConfigError);
  CHECK_THROWS_AS(cfg.set("data.five_crop_eval", "maybe"), ConfigError);
  CHECK_THROWS_AS(cfg.set("data.norm", "guess"), ConfigError);
  CHECK_THROWS_AS(cfg.set("data.norm_mean", "0.1,0.2"), ConfigError);
  CHECK_THROWS_AS(cfg.set("ensemble.methods", "gap,deepten,sift"), ConfigError);

  CHECK_NOTHROW(cfg.set("run.scale", "desk"));
  CHECK_THROWS_AS(cfg.set("run.scale", "paper"), ConfigError);
}

TEST_CASE("canonical text is a fixed point of replaying it") {
  RunConfig cfg = RunConfig::defaults("desk");
  cfg.apply_protocol("kth");
  cfg.set("train.lr", "0.0123456789012345678");
  cfg.set("data.train_fraction", "0.6");
  cfg.set("ensemble.methods", "deepten,gap");
  cfg.set("backbone.channels", "8,16");
  cfg.set("backbone.input", "32");
  cfg.set("data.crop", "32");
  cfg.set("data.resize_short", "40");
  cfg.dataset_root = "/tmp/somewhere";

  const std::string text = cfg.to_text();
  const RunConfig back = replay(text, "desk");
  CHECK(back.to_text() == text);
  CHECK(back.train.lr == cfg.train.lr);
  CHECK(back.model.backbone.stage_channels == cfg.model.backbone.stage_channels);
  CHECK(back.protocol == "kth");
}

TEST_CASE("config files apply on top of the bundle") {
  const fs::path file = fs::temp_directory_path() / "texton_cfg_test.cfg";
  {
    std::ofstream out(file);
    out << "# comment line\n"
        << "\n"
        << "  train.epochs = 3   # trailing comment\n"
        << "ensemble.methods=histogram\n"
        << "\ttrain.lr\t=\t0.5\n";
  }
  RunConfig cfg = RunConfig::defaults("desk");
  apply_config_file(cfg, file);
  CHECK(cfg.train.epochs == 3);
  CHECK(cfg.model.methods.mask() == 0b0100);
  CHECK(cfg.train.lr == 0.5);

  {
    std::ofstream out(file);
    out << "train.epochs 3\n";
  }
  CHECK_THROWS_AS(apply_config_file(cfg, file), ConfigError);
  CHECK_THROWS_AS(apply_config_file(cfg, file.string() + ".absent"), IoError);
  fs::remove(file);
}

TEST_CASE("scale can be peeked before the file is applied") {
  const fs::path file = fs::temp_directory_path() / "texton_cfg_peek.cfg";
  {
    std::ofstream out(file);
    out << "# run.scale = paper (commented out)\n"
        << "train.epochs = 2\n"
        << "run.scale = desk\n";
  }
  CHECK(peek_scale(file) == "desk");
  {
    std::ofstream out(file);
    out << "train.epochs = 2\n";
  }
  CHECK(peek_scale(file).empty());
  CHECK_THROWS_AS(peek_scale(file.string() + ".absent"), IoError);
  fs::remove(file);
}

TEST_CASE("cross-field validation catches inconsistent crops and splits") {
  RunConfig cfg = RunConfig::defaults("desk");
  cfg.set("data.crop", "32");
  CHECK_THROWS_AS(cfg.validate(), ConfigError);  // crop != backbone input

  cfg = RunConfig::defaults("desk");
  cfg.set("data.train_fraction", "1.0");
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = RunConfig::defaults("desk");
  cfg.set("data.resize_short", "32");
  CHECK_THROWS_AS(cfg.validate(), ConfigError);  // resize below crop

  cfg = RunConfig::defaults("desk");
  cfg.set("run.workers", "0");
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("run identifiers depend on content, not the clock") {
  RunConfig cfg = RunConfig::defaults("desk");
  const std::string a = run_id_for(cfg, "train");
  CHECK(a == run_id_for(cfg, "train"));
  CHECK(a.rfind("train-", 0) == 0);
  CHECK(a != run_id_for(cfg, "ablate"));

  RunConfig other = cfg;
  other.seed = cfg.seed + 1;
  CHECK(a != run_id_for(other, "train"));
}

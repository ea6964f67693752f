#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "texton/ablation.hpp"
#include "texton/config.hpp"
#include "texton/correlation.hpp"
#include "texton/gradcheck_suite.hpp"
#include "texton/report.hpp"
#include "texton/synth.hpp"

namespace fs = std::filesystem;
using texton::RunConfig;

namespace {

// Flags shared by the subcommands that build a full run configuration.
struct ConfigFlags {
  std::string config_file, scale, protocol, dataset, methods, aggregator;
  std::vector<std::string> sets;  // key=value overrides
  std::uint64_t seed = 0;
  bool seed_given = false;
  int workers = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "config file of key = value lines");
    cmd->add_option("--scale", scale, "default bundle: paper or desk");
    cmd->add_option("--protocol", protocol,
                    "training preset: fmd, dtd, kth, minc, gtos, gtosm");
    cmd->add_option("--dataset", dataset, "dataset root directory");
    cmd->add_option("--methods", methods,
                    "comma list from deepten,gap,histogram,fap");
    cmd->add_option("--aggregator", aggregator, "feature fusion: concat or bilinear");
    cmd->add_option("--set", sets, "extra key=value override (repeatable)");
    cmd->add_option("--seed", seed, "master random seed")
        ->each([this](const std::string&) { seed_given = true; });
    cmd->add_option("--workers", workers, "worker threads for the ablation grid");
  }

  // Precedence: scale bundle, then protocol preset, then the config file,
  // then --set pairs, then direct flags.
  RunConfig build() const {
    std::string bundle = scale;
    if (bundle.empty() && !config_file.empty())
      bundle = texton::peek_scale(config_file);
    if (bundle.empty()) bundle = "paper";
    RunConfig cfg = RunConfig::defaults(bundle);
    if (!protocol.empty()) cfg.apply_protocol(protocol);
    if (!config_file.empty()) texton::apply_config_file(cfg, config_file);
    if (!scale.empty() && cfg.scale != scale)
      throw texton::ConfigError("config file pins run.scale = " + cfg.scale +
                                ", which contradicts --scale " + scale);
    for (const std::string& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw texton::ConfigError("--set expects key=value, got '" + kv + "'");
      std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
      auto trim = [](std::string& s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
          s.erase(s.begin());
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
          s.pop_back();
      };
      trim(key);
      trim(value);
      cfg.set(key, value);
    }
    if (!dataset.empty()) cfg.dataset_root = dataset;
    if (!methods.empty())
      cfg.model.methods = texton::MethodSelection::parse(methods);
    if (!aggregator.empty())
      cfg.model.aggregator = texton::parse_aggregator(aggregator);
    if (seed_given) {
      cfg.seed = seed;
      cfg.train.seed = seed;
    }
    if (workers > 0) cfg.workers = workers;
    return cfg;
  }
};

fs::path default_out() {
  const char* env = std::getenv("TEXTON_OUT");
  return env && *env ? fs::path(env) : fs::path("out");
}

void write_run_json(const fs::path& out_dir, const RunConfig& cfg,
                    const std::string& kind, const std::string& command) {
  nlohmann::json j;
  j["kind"] = kind;
  j["run_id"] = texton::run_id_for(cfg, kind);
  j["command"] = command;
  j["config"] = cfg.to_text();
  std::ofstream out(out_dir / "run.json");
  if (!out) throw texton::IoError("cannot create " + (out_dir / "run.json").string());
  out << j.dump(2) << '\n';
}

std::string join_args(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

// Loads the dataset, attaches splits (files under splits/ win over random
// partitions) and fills in the class count.
texton::Dataset prepare_dataset(RunConfig& cfg) {
  if (cfg.dataset_root.empty())
    throw texton::ConfigError("no dataset given (use --dataset or data.root)");
  texton::Dataset data = texton::load_dataset(cfg.dataset_root);
  for (const std::string& w : data.warnings)
    std::cerr << "warning: " << w << '\n';
  if (!texton::load_split_files(data))
    texton::make_random_splits(data, cfg.n_splits, cfg.train_fraction, cfg.seed);
  cfg.model.n_classes = data.n_classes();
  return data;
}

int cmd_train(const ConfigFlags& flags, const fs::path& out_dir, int split_index,
              const std::string& command) {
  RunConfig cfg = flags.build();
  cfg.validate();
  texton::Dataset data = prepare_dataset(cfg);
  if (split_index < 0 || split_index >= static_cast<int>(data.splits.size()))
    throw texton::ConfigError("split " + std::to_string(split_index) +
                              " outside [0," + std::to_string(data.splits.size()) +
                              ")");
  const texton::Split& split = data.splits[static_cast<std::size_t>(split_index)];

  texton::AugmentConfig acfg = cfg.augment;
  if (cfg.norm == "auto") {
    texton::compute_normalization(data, split.train);
    acfg.mean = data.norm_mean;
    acfg.stdev = data.norm_std;
  }

  fs::create_directories(out_dir);
  write_run_json(out_dir, cfg, "train", command);
  {
    std::ofstream cfg_out(out_dir / "config.txt");
    cfg_out << cfg.to_text();
  }

  const std::string run_id =
      texton::run_id_for(cfg, "train-split" + std::to_string(split_index));
  texton::Rng init_rng(texton::derive_seed(cfg.seed, "train", split_index, "init"));
  texton::EnsembleModel<float> model(cfg.model, init_rng);
  for (const std::string& w : model.warnings())
    std::cerr << "warning: " << w << '\n';

  std::cout << "model: methods=" << cfg.model.methods.to_string()
            << " aggregator=" << texton::aggregator_name(cfg.model.aggregator)
            << " feature_width=" << model.feature_width() << '\n';
  for (const auto& [name, width] : model.method_widths())
    std::cout << "  " << name << ": " << width << " dims\n";

  texton::TrainConfig tcfg = cfg.train;
  tcfg.seed = texton::derive_seed(cfg.seed, "train", split_index, "steps");

  std::ofstream metrics(out_dir / "metrics.csv");
  if (!metrics)
    throw texton::IoError("cannot create " + (out_dir / "metrics.csv").string());
  texton::write_metrics_header(metrics);
  const texton::TrainResult result = texton::train_model(
      model, data, split, tcfg, acfg, run_id, &metrics, /*verbose=*/true);

  std::cout << "best accuracy " << result.best_acc << ", final accuracy "
            << result.final_acc << '\n';

  if (cfg.model.methods.count() >= 2 &&
      static_cast<int>(split.test.size()) >= 8) {
    const int n = std::min<int>(16, static_cast<int>(split.test.size()));
    std::vector<const texton::Image*> views;
    std::vector<texton::Image> storage;
    storage.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      auto v = texton::eval_views(data.images[static_cast<std::size_t>(
                                      split.test[static_cast<std::size_t>(i)])],
                                  acfg);
      storage.push_back(std::move(v.front()));
    }
    for (const auto& img : storage) views.push_back(&img);
    const auto batch = texton::batch_from_images(views);
    std::cout << texton::correlation_diagnostic(model, batch).to_string();
  }
  return 0;
}

int cmd_ablate(const ConfigFlags& flags, const fs::path& out_dir,
               const std::string& command) {
  RunConfig cfg = flags.build();
  cfg.model.aggregator = texton::AggregatorKind::concat;  // grid is concat-only
  cfg.validate();
  texton::Dataset data = prepare_dataset(cfg);

  fs::create_directories(out_dir);
  write_run_json(out_dir, cfg, "ablate", command);
  {
    std::ofstream cfg_out(out_dir / "config.txt");
    cfg_out << cfg.to_text();
  }

  const auto cells = texton::run_ablation(data, cfg, out_dir, &std::cout);
  texton::write_ablation_csv(out_dir / "ablation.csv", cells);
  const std::string summary = texton::ablation_summary(cells);
  {
    std::ofstream sum(out_dir / "summary.txt");
    sum << summary;
  }
  std::cout << summary;
  std::cout << "grid written to " << (out_dir / "ablation.csv").string() << '\n';

  int failures = 0;
  for (const auto& cell : cells) failures += cell.failed;
  return failures == 0 ? 0 : 1;
}

int cmd_importance(const ConfigFlags& flags, const fs::path& ablation_csv,
                   const fs::path& out_dir) {
  RunConfig cfg = flags.build();
  const auto cells = texton::read_ablation_csv(ablation_csv);
  if (cells.size() < 2)
    throw texton::ConfigError("importance: need at least 2 grid rows, got " +
                              std::to_string(cells.size()));

  std::vector<std::vector<double>> rows;
  std::vector<double> targets;
  for (const auto& cell : cells) {
    const auto f = texton::MethodSelection::from_mask(cell.mask).flags();
    rows.push_back({static_cast<double>(f[0]), static_cast<double>(f[1]),
                    static_cast<double>(f[2]), static_cast<double>(f[3])});
    targets.push_back(cell.mean_acc);
  }
  const std::vector<std::string> names(texton::MethodSelection::names.begin(),
                                       texton::MethodSelection::names.end());
  const auto report = texton::rf_importance(rows, targets, names, cfg.rf);

  fs::create_directories(out_dir);
  texton::write_importance_csv(out_dir / "importance.csv", report);
  texton::write_importance_svg(out_dir / "importance.svg", report);

  std::cout << "feature importances (" << report.n_trees << " trees, "
            << report.seeds.size() << " seeds):\n";
  for (std::size_t f = 0; f < names.size(); ++f) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "  %-10s %.4f\n", names[f].c_str(),
                  report.importance[f]);
    std::cout << buf;
  }
  std::cout << "majority ranking:";
  for (int f : report.majority_order)
    std::cout << ' ' << names[static_cast<std::size_t>(f)];
  std::cout << '\n';
  if (report.degenerate)
    std::cout << "note: constant target; importances fell back to uniform\n";
  std::cout << "written to " << (out_dir / "importance.csv").string() << " and "
            << (out_dir / "importance.svg").string() << '\n';
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  const auto suite = texton::gradcheck_suite(seed);
  int failures = 0;
  for (const auto& check : suite) {
    const auto rep = check.run();
    const bool ok = rep.passed(1e-4);
    failures += !ok;
    char buf[192];
    std::snprintf(buf, sizeof(buf), "%-18s %s  max rel err %.3g over %lld coords%s%s\n",
                  check.name.c_str(), ok ? "ok  " : "FAIL", rep.max_rel_error,
                  static_cast<long long>(rep.coords_checked),
                  rep.worst.empty() ? "" : "  worst: ",
                  rep.worst.c_str());
    std::cout << buf;
  }
  return failures == 0 ? 0 : 1;
}

int cmd_report(const fs::path& out_dir) {
  const fs::path csv = out_dir / "ablation.csv";
  const auto cells = texton::read_ablation_csv(csv);
  std::cout << texton::ablation_summary(cells);
  const fs::path imp = out_dir / "importance.csv";
  if (fs::exists(imp)) {
    std::ifstream in(imp);
    std::string line;
    std::getline(in, line);  // header
    std::cout << "importance ranking (method, importance, rank):\n";
    while (std::getline(in, line))
      if (!line.empty()) std::cout << "  " << line << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"texture ensemble toolkit"};
  app.require_subcommand(1);
  const std::string command = join_args(argc, argv);

  ConfigFlags train_flags, ablate_flags, imp_flags;
  std::string out_str = default_out().string();
  int split_index = 0;

  CLI::App* train = app.add_subcommand("train", "train one model on one split");
  train_flags.attach(train);
  train->add_option("--out", out_str, "output directory");
  train->add_option("--split", split_index, "split index to train on");

  std::string ablate_out = (default_out() / "ablation").string();
  CLI::App* ablate =
      app.add_subcommand("ablate", "train every method combination over the splits");
  ablate_flags.attach(ablate);
  ablate->add_option("--out", ablate_out, "output directory");

  std::string imp_ablation = (default_out() / "ablation" / "ablation.csv").string();
  std::string imp_out = (default_out() / "ablation").string();
  CLI::App* importance =
      app.add_subcommand("importance", "method importance from a finished grid");
  imp_flags.attach(importance);
  importance->add_option("--ablation", imp_ablation, "ablation.csv to analyze");
  importance->add_option("--out", imp_out, "output directory");

  std::string synth_out = "data/synthetic";
  int synth_size = 64, synth_per_class = 50;
  std::uint64_t synth_seed = 7;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic texture dataset");
  synth->add_option("--out", synth_out, "dataset root to create");
  synth->add_option("--size", synth_size, "image side length");
  synth->add_option("--per-class", synth_per_class, "images per class");
  synth->add_option("--seed", synth_seed, "generator seed");

  std::uint64_t gc_seed = 17;
  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference checks for every layer");
  gradcheck->add_option("--seed", gc_seed, "probe seed");

  std::string report_out = (default_out() / "ablation").string();
  CLI::App* report = app.add_subcommand("report", "print results from an output directory");
  report->add_option("--out", report_out, "output directory to summarize");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train_flags, out_str, split_index, command);
    if (ablate->parsed()) return cmd_ablate(ablate_flags, ablate_out, command);
    if (importance->parsed())
      return cmd_importance(imp_flags, imp_ablation, imp_out);
    if (synth->parsed()) {
      texton::SynthConfig scfg =
          texton::SynthConfig::default_four(synth_size, synth_per_class, synth_seed);
      texton::Dataset data = texton::synth_dataset(scfg);
      texton::synth_write(data, synth_out);
      std::cout << "wrote " << data.size() << " images over " << data.n_classes()
                << " classes to " << synth_out << '\n';
      return 0;
    }
    if (gradcheck->parsed()) return cmd_gradcheck(gc_seed);
    if (report->parsed()) return cmd_report(report_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

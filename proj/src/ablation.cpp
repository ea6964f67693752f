#include "texton/ablation.hpp"

#include <atomic>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "texton/training.hpp"

namespace texton {

namespace fs = std::filesystem;

namespace {

// Cached cell result: one "split_index,accuracy" line per split.
bool read_cell_file(const fs::path& file, int expected_splits,
                    std::vector<double>& accs) {
  std::ifstream in(file);
  if (!in) return false;
  accs.clear();
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    int split = 0;
    char comma = 0;
    double acc = 0;
    if (!(ls >> split >> comma >> acc) || comma != ',') return false;
    if (split != static_cast<int>(accs.size())) return false;
    accs.push_back(acc);
  }
  return static_cast<int>(accs.size()) == expected_splits;
}

void write_cell_file(const fs::path& file, const std::vector<double>& accs) {
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("ablation: cannot create " + tmp.string());
    for (std::size_t k = 0; k < accs.size(); ++k) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%zu,%.17g", k, accs[k]);
      out << buf << '\n';
    }
  }
  fs::rename(tmp, file);
}

}  // namespace

std::vector<AblationCell> run_ablation(const Dataset& data, const RunConfig& cfg,
                                       const fs::path& out_dir, std::ostream* log) {
  if (data.splits.empty())
    throw std::invalid_argument("ablation: dataset has no splits");
  if (data.n_classes() < 2)
    throw std::invalid_argument("ablation: need at least 2 classes");
  const int n_splits = static_cast<int>(data.splits.size());

  fs::create_directories(out_dir / "cells");

  // Normalization statistics depend only on the split, not the cell.
  std::vector<std::array<float, 3>> split_mean(static_cast<std::size_t>(n_splits)),
      split_std(static_cast<std::size_t>(n_splits));
  for (int k = 0; k < n_splits; ++k) {
    if (cfg.norm == "auto") {
      Dataset probe = data;  // stats only; images are shared copies
      compute_normalization(probe, probe.splits[static_cast<std::size_t>(k)].train);
      split_mean[static_cast<std::size_t>(k)] = probe.norm_mean;
      split_std[static_cast<std::size_t>(k)] = probe.norm_std;
    } else {
      split_mean[static_cast<std::size_t>(k)] = cfg.augment.mean;
      split_std[static_cast<std::size_t>(k)] = cfg.augment.stdev;
    }
  }

  std::vector<AblationCell> cells(15);
  std::mutex log_mutex;

  auto run_cell = [&](unsigned mask) {
    AblationCell& cell = cells[mask - 1];
    cell.mask = mask;
    cell.n_splits = n_splits;

    const fs::path cell_file =
        out_dir / "cells" / ("cell_" + std::to_string(mask) + ".csv");
    if (read_cell_file(cell_file, n_splits, cell.split_accs)) {
      cell.mean_acc = mean_of(cell.split_accs);
      cell.std_acc = population_std(cell.split_accs);
      if (log) {
        std::lock_guard<std::mutex> lock(log_mutex);
        *log << "cell " << mask << " ("
             << MethodSelection::from_mask(mask).to_string() << "): cached, mean "
             << cell.mean_acc << "\n";
      }
      return;
    }

    try {
      std::ostringstream metrics;
      write_metrics_header(metrics);
      for (int k = 0; k < n_splits; ++k) {
        ModelConfig mc = cfg.model;
        mc.methods = MethodSelection::from_mask(mask);
        mc.aggregator = AggregatorKind::concat;  // the grid is a concat sweep
        mc.n_classes = data.n_classes();

        AugmentConfig acfg = cfg.augment;
        acfg.mean = split_mean[static_cast<std::size_t>(k)];
        acfg.stdev = split_std[static_cast<std::size_t>(k)];

        TrainConfig tcfg = cfg.train;
        tcfg.seed = derive_seed(cfg.seed, "cell", mask, "train",
                                static_cast<std::uint64_t>(k));

        Rng init_rng(derive_seed(cfg.seed, "cell", mask, "init",
                                 static_cast<std::uint64_t>(k)));
        EnsembleModel<float> model(mc, init_rng);

        const std::string run_id =
            "cell" + std::to_string(mask) + "-split" + std::to_string(k);
        TrainResult res =
            train_model(model, data, data.splits[static_cast<std::size_t>(k)],
                        tcfg, acfg, run_id, &metrics, /*verbose=*/false);
        cell.split_accs.push_back(res.best_acc);
        if (log) {
          std::lock_guard<std::mutex> lock(log_mutex);
          *log << "cell " << mask << " split " << k << ": best acc "
               << res.best_acc << "\n";
        }
      }
      cell.mean_acc = mean_of(cell.split_accs);
      cell.std_acc = population_std(cell.split_accs);
      write_cell_file(cell_file, cell.split_accs);
      std::ofstream mout(out_dir / "cells" /
                         ("metrics_" + std::to_string(mask) + ".csv"));
      mout << metrics.str();
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.error = e.what();
      if (log) {
        std::lock_guard<std::mutex> lock(log_mutex);
        *log << "cell " << mask << " FAILED: " << e.what() << "\n";
      }
    }
  };

  const int workers = std::max(1, cfg.workers);
  if (workers == 1) {
    for (unsigned mask = 1; mask <= 15; ++mask) run_cell(mask);
  } else {
    std::atomic<unsigned> next{1};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (unsigned mask = next.fetch_add(1); mask <= 15;
             mask = next.fetch_add(1))
          run_cell(mask);
      });
    for (auto& t : pool) t.join();
  }

  // Merge per-cell metrics in mask order so the combined file is stable
  // regardless of worker interleaving.
  std::ofstream merged(out_dir / "metrics.csv");
  write_metrics_header(merged);
  for (unsigned mask = 1; mask <= 15; ++mask) {
    std::ifstream in(out_dir / "cells" / ("metrics_" + std::to_string(mask) + ".csv"));
    if (!in) continue;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (first) {  // skip the per-cell header
        first = false;
        continue;
      }
      merged << line << '\n';
    }
  }
  return cells;
}

}  // namespace texton

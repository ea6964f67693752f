#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "texton/config.hpp"
#include "texton/dataset.hpp"

// The 15-combination ablation grid: every non-empty subset of the four
// methods, trained over the shared splits with concat fusion, reporting
// mean and population standard deviation of the per-split best accuracies.

namespace texton {

// Mask bit 0 = deepten, 1 = gap, 2 = histogram, 3 = fap (same order as
// MethodSelection).
constexpr unsigned kProposedMask = 0b1101;  // deepten + histogram + fap

struct AblationCell {
  unsigned mask = 0;
  std::vector<double> split_accs;
  double mean_acc = 0, std_acc = 0;
  int n_splits = 0;
  bool failed = false;
  std::string error;
};

// Runs (or resumes) the grid. `data` must already carry the splits. Cell
// results are cached under out_dir/cells/, so an interrupted grid continues
// where it stopped; per-epoch metrics are merged into out_dir/metrics.csv
// in mask order at the end. Individual cell failures are recorded and do
// not stop the remaining cells.
std::vector<AblationCell> run_ablation(const Dataset& data, const RunConfig& cfg,
                                       const std::filesystem::path& out_dir,
                                       std::ostream* log);

}  // namespace texton

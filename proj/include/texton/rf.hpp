#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Random-forest regression importance over ablation results: which method
// flags explain the accuracy differences across the combination grid.
// Importances are impurity (sum-of-squares) decreases accumulated per
// feature, normalized per tree, averaged over trees, and reported per seed
// plus as a majority ranking over the seed set.

namespace texton {

struct RfConfig {
  int n_trees = 200;
  int n_seeds = 10;
  std::uint64_t seed_base = 0;
};

struct ImportanceReport {
  std::vector<std::string> feature_names;
  std::vector<double> importance;  // averaged over seeds; sums to 1
  std::vector<std::vector<int>> per_seed_order;  // feature indices, best first
  std::vector<int> majority_order;
  std::vector<std::uint64_t> seeds;
  int n_trees = 0;
  bool degenerate = false;  // constant target; importances fell back to uniform
};

// rows: one feature vector per observation; targets: the regressed value.
// Rows are put into a canonical order internally, so the result does not
// depend on input row order.
ImportanceReport rf_importance(const std::vector<std::vector<double>>& rows,
                               const std::vector<double>& targets,
                               const std::vector<std::string>& feature_names,
                               const RfConfig& cfg);

}  // namespace texton

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "texton/ablation.hpp"
#include "texton/rf.hpp"

// Result files: the ablation grid CSV, the importance CSV and a small bar
// chart SVG, plus a printable grid summary.

namespace texton {

// Header is exactly "deepten,gap,histogram,fap,mean_acc,std_acc,n_splits";
// one row per completed cell, flags as 0/1, full-precision accuracies.
void write_ablation_csv(const std::filesystem::path& path,
                        const std::vector<AblationCell>& cells);

// Inverse of write_ablation_csv (split_accs stay empty). Raises IoError on
// a malformed file or wrong header.
std::vector<AblationCell> read_ablation_csv(const std::filesystem::path& path);

// "method,importance,rank" rows in feature order; rank follows the majority
// ranking (1 = most important).
void write_importance_csv(const std::filesystem::path& path,
                          const ImportanceReport& report);

// Bar chart with exactly one rect per method.
void write_importance_svg(const std::filesystem::path& path,
                          const ImportanceReport& report);

// Human-readable grid table; marks the deepten+histogram+fap cell.
std::string ablation_summary(const std::vector<AblationCell>& cells);

}  // namespace texton

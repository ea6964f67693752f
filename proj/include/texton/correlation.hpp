#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "texton/ensemble.hpp"

// Redundancy diagnostic: mean absolute Pearson correlation between the
// feature dimensions of every method pair on one evaluation batch.

namespace texton {

struct CorrelationReport {
  std::vector<std::string> methods;
  std::vector<std::vector<double>> mean_abs_corr;  // symmetric, 1 on the diagonal
  Index excluded_dims = 0;  // zero-variance dimensions dropped

  std::string to_string() const {
    std::string out = "method pair correlations (mean |r|):\n";
    for (std::size_t a = 0; a < methods.size(); ++a)
      for (std::size_t b = a + 1; b < methods.size(); ++b) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "  %-10s x %-10s %.4f\n",
                      methods[a].c_str(), methods[b].c_str(), mean_abs_corr[a][b]);
        out += buf;
      }
    if (excluded_dims > 0)
      out += "  (" + std::to_string(excluded_dims) +
             " zero-variance dimensions excluded)\n";
    return out;
  }
};

// Needs at least two selected methods and a batch of at least 8 images.
inline CorrelationReport correlation_diagnostic(EnsembleModel<float>& model,
                                                const Tensor<float>& images) {
  if (model.config().methods.count() < 2)
    throw std::invalid_argument(
        "correlation: needs at least two selected methods");
  if (images.rank() != 4 || images.dim(0) < 8)
    throw std::invalid_argument(
        "correlation: needs a batch of at least 8 images");
  const Index n = images.dim(0);

  Tape<float> tape;
  tape.set_recording(false);
  auto feats = model.forward_features(tape, images, /*training=*/false);

  CorrelationReport report;
  // Z-score every feature dimension over the batch; flag flat dimensions.
  std::vector<std::vector<ArrayX<double>>> z(feats.size());
  std::vector<std::vector<bool>> keep(feats.size());
  for (std::size_t m = 0; m < feats.size(); ++m) {
    report.methods.push_back(feats[m].first);
    const Tensor<float>& f = feats[m].second;
    const Index d = f.dim(1);
    for (Index j = 0; j < d; ++j) {
      ArrayX<double> col(n);
      for (Index i = 0; i < n; ++i)
        col[i] = static_cast<double>(f.value()[i * d + j]);
      const double mu = col.mean();
      col -= mu;
      const double sd = std::sqrt(col.square().mean());
      if (sd < 1e-9) {
        keep[m].push_back(false);
        ++report.excluded_dims;
        z[m].push_back(ArrayX<double>());
      } else {
        keep[m].push_back(true);
        z[m].push_back(col / sd);
      }
    }
  }

  const std::size_t mcount = feats.size();
  report.mean_abs_corr.assign(mcount, std::vector<double>(mcount, 1.0));
  for (std::size_t a = 0; a < mcount; ++a)
    for (std::size_t b = a + 1; b < mcount; ++b) {
      double acc = 0;
      std::int64_t pairs = 0;
      for (std::size_t i = 0; i < z[a].size(); ++i) {
        if (!keep[a][i]) continue;
        for (std::size_t j = 0; j < z[b].size(); ++j) {
          if (!keep[b][j]) continue;
          const double r = (z[a][i] * z[b][j]).mean();
          acc += std::abs(r);
          ++pairs;
        }
      }
      const double v = pairs > 0 ? acc / static_cast<double>(pairs) : 0.0;
      report.mean_abs_corr[a][b] = v;
      report.mean_abs_corr[b][a] = v;
    }
  return report;
}

}  // namespace texton

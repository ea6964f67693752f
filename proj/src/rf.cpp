#include "texton/rf.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "texton/rng.hpp"

namespace texton {

namespace {

struct TreeBuilder {
  const std::vector<std::vector<double>>& rows;
  const std::vector<double>& targets;
  Rng& rng;
  std::vector<double>& importance;  // raw SS decreases, accumulated

  double node_ss(const std::vector<int>& idx) const {
    double s = 0, s2 = 0;
    for (int i : idx) {
      s += targets[static_cast<std::size_t>(i)];
      s2 += targets[static_cast<std::size_t>(i)] * targets[static_cast<std::size_t>(i)];
    }
    return s2 - s * s / static_cast<double>(idx.size());
  }

  void split(std::vector<int> idx) {
    const double ss = node_ss(idx);
    if (idx.size() < 2 || ss <= 1e-12) return;

    const std::size_t n_features = rows[0].size();
    // Visit features in random order so equal-quality splits are broken
    // randomly rather than by index.
    std::vector<int> visit(n_features);
    std::iota(visit.begin(), visit.end(), 0);
    rng.shuffle(visit);

    double best_dec = 1e-12;
    int best_feat = -1;
    double best_thr = 0;
    std::vector<int> left, right, best_left, best_right;
    std::vector<double> values;
    for (int f : visit) {
      values.clear();
      for (int i : idx) values.push_back(rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)]);
      std::sort(values.begin(), values.end());
      values.erase(std::unique(values.begin(), values.end()), values.end());
      for (std::size_t v = 0; v + 1 < values.size(); ++v) {
        const double thr = 0.5 * (values[v] + values[v + 1]);
        left.clear();
        right.clear();
        for (int i : idx)
          (rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)] <= thr
               ? left
               : right)
              .push_back(i);
        if (left.empty() || right.empty()) continue;
        const double dec = ss - node_ss(left) - node_ss(right);
        if (dec > best_dec) {
          best_dec = dec;
          best_feat = f;
          best_thr = thr;
          best_left = left;
          best_right = right;
        }
      }
    }
    if (best_feat < 0) return;
    (void)best_thr;
    importance[static_cast<std::size_t>(best_feat)] += best_dec;
    split(std::move(best_left));
    split(std::move(best_right));
  }
};

}  // namespace

ImportanceReport rf_importance(const std::vector<std::vector<double>>& rows_in,
                               const std::vector<double>& targets_in,
                               const std::vector<std::string>& feature_names,
                               const RfConfig& cfg) {
  if (rows_in.size() < 2)
    throw std::invalid_argument("rf: need at least 2 observations, have " +
                                std::to_string(rows_in.size()));
  if (targets_in.size() != rows_in.size())
    throw std::invalid_argument("rf: feature rows and targets disagree in length");
  const std::size_t n_features = rows_in[0].size();
  if (n_features < 1) throw std::invalid_argument("rf: empty feature rows");
  if (feature_names.size() != n_features)
    throw std::invalid_argument("rf: feature name count mismatch");
  for (const auto& r : rows_in)
    if (r.size() != n_features)
      throw std::invalid_argument("rf: ragged feature rows");
  for (const auto& r : rows_in)
    for (double v : r)
      if (!std::isfinite(v)) throw std::invalid_argument("rf: non-finite feature");
  for (double t : targets_in)
    if (!std::isfinite(t)) throw std::invalid_argument("rf: non-finite target");
  if (cfg.n_trees < 1 || cfg.n_seeds < 1)
    throw std::invalid_argument("rf: tree and seed counts must be >= 1");

  // Canonical row order (lexicographic over features then target) makes the
  // analysis independent of how the caller enumerated the grid.
  std::vector<int> order(rows_in.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& ra = rows_in[static_cast<std::size_t>(a)];
    const auto& rb = rows_in[static_cast<std::size_t>(b)];
    if (ra != rb) return ra < rb;
    return targets_in[static_cast<std::size_t>(a)] < targets_in[static_cast<std::size_t>(b)];
  });
  std::vector<std::vector<double>> rows;
  std::vector<double> targets;
  for (int i : order) {
    rows.push_back(rows_in[static_cast<std::size_t>(i)]);
    targets.push_back(targets_in[static_cast<std::size_t>(i)]);
  }
  const int n = static_cast<int>(rows.size());

  ImportanceReport report;
  report.feature_names = feature_names;
  report.n_trees = cfg.n_trees;
  report.importance.assign(n_features, 0.0);

  bool any_split = false;
  std::vector<std::vector<double>> per_seed_importance;
  for (int si = 0; si < cfg.n_seeds; ++si) {
    const std::uint64_t seed =
        derive_seed(cfg.seed_base, "rf-seed", static_cast<std::uint64_t>(si));
    report.seeds.push_back(seed);
    Rng rng(seed);

    std::vector<double> forest_acc(n_features, 0.0);
    for (int t = 0; t < cfg.n_trees; ++t) {
      std::vector<int> boot(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i)
        boot[static_cast<std::size_t>(i)] =
            static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
      std::vector<double> tree_imp(n_features, 0.0);
      TreeBuilder builder{rows, targets, rng, tree_imp};
      builder.split(std::move(boot));
      const double total = std::accumulate(tree_imp.begin(), tree_imp.end(), 0.0);
      if (total > 0) {
        any_split = true;
        for (std::size_t f = 0; f < n_features; ++f)
          forest_acc[f] += tree_imp[f] / total;
      }
    }
    for (double& v : forest_acc) v /= static_cast<double>(cfg.n_trees);

    std::vector<int> rank(n_features);
    std::iota(rank.begin(), rank.end(), 0);
    std::stable_sort(rank.begin(), rank.end(), [&](int a, int b) {
      return forest_acc[static_cast<std::size_t>(a)] >
             forest_acc[static_cast<std::size_t>(b)];
    });
    report.per_seed_order.push_back(rank);
    per_seed_importance.push_back(std::move(forest_acc));
  }

  if (!any_split) {
    report.degenerate = true;
    report.importance.assign(n_features, 1.0 / static_cast<double>(n_features));
  } else {
    for (const auto& imp : per_seed_importance)
      for (std::size_t f = 0; f < n_features; ++f)
        report.importance[f] += imp[f];
    const double total =
        std::accumulate(report.importance.begin(), report.importance.end(), 0.0);
    if (total > 0)
      for (double& v : report.importance) v /= total;
    else {
      report.degenerate = true;
      report.importance.assign(n_features, 1.0 / static_cast<double>(n_features));
    }
  }

  // Majority ranking: fill positions greedily by vote count over the
  // per-seed orders; ties go to the higher averaged importance, then the
  // lower index.
  std::vector<bool> taken(n_features, false);
  for (std::size_t pos = 0; pos < n_features; ++pos) {
    std::vector<int> votes(n_features, 0);
    for (const auto& order_s : report.per_seed_order) {
      for (int f : order_s) {
        if (taken[static_cast<std::size_t>(f)]) continue;
        // First not-yet-placed feature in this seed's order votes for pos.
        ++votes[static_cast<std::size_t>(f)];
        break;
      }
    }
    int best = -1;
    for (std::size_t f = 0; f < n_features; ++f) {
      if (taken[f]) continue;
      if (best < 0 || votes[f] > votes[static_cast<std::size_t>(best)] ||
          (votes[f] == votes[static_cast<std::size_t>(best)] &&
           report.importance[f] > report.importance[static_cast<std::size_t>(best)]))
        best = static_cast<int>(f);
    }
    taken[static_cast<std::size_t>(best)] = true;
    report.majority_order.push_back(best);
  }
  return report;
}

}  // namespace texton

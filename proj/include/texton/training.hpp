#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "texton/dataset.hpp"
#include "texton/ensemble.hpp"
#include "texton/imgproc.hpp"

// SGD training with cosine-shaped learning-rate schedules, deterministic
// given (config, seed): shuffling, augmentation and initialization all draw
// from derived streams, so repeated runs produce identical metrics.

namespace texton {

enum class SchedulerKind { cosine, cosine_warm_restarts };

SchedulerKind parse_scheduler(const std::string& name);
const char* scheduler_name(SchedulerKind kind);

// Learning rate at 0-based step t. Plain cosine anneals from lr_max to
// lr_min over total_steps; warm restarts run cycles of t0_steps,
// 2*t0_steps, ... (factor t_mult), each annealing lr_max -> lr_min.
double lr_at_step(SchedulerKind kind, double lr_max, double lr_min,
                  std::int64_t t, std::int64_t total_steps,
                  std::int64_t t0_steps, int t_mult);

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  double lr = 1e-3;
  double lr_min = 0.0;
  double momentum = 0.9;
  double weight_decay = 0.0;  // the published recipes never mention decay
  SchedulerKind scheduler = SchedulerKind::cosine_warm_restarts;
  int t0_epochs = 10;
  int t_mult = 2;
  std::uint64_t seed = 42;
  bool finetune_backbone = true;

  void validate() const;
};

// Momentum SGD: v <- m*v + (g + wd*w); w <- w - lr*v. Raises NumericError
// if any gradient is non-finite at step time.
class SgdOptimizer {
 public:
  SgdOptimizer(ParamRefs<float> params, double momentum, double weight_decay);

  void zero_grad();
  void step(double lr);

 private:
  ParamRefs<float> params_;
  std::vector<ArrayX<float>> velocity_;
  double momentum_, weight_decay_;
};

struct EpochRow {
  int epoch = 0;  // 1-based
  double lr = 0, train_loss = 0, test_acc = 0;
};

struct TrainResult {
  std::vector<EpochRow> rows;
  double best_acc = 0, final_acc = 0;
};

// Stack image views into an NCHW float tensor. All views must share one
// extent.
Tensor<float> batch_from_images(const std::vector<const Image*>& views);

// Row-wise argmax with lowest-index tie break.
std::vector<int> argmax_rows(const Tensor<float>& logits);

// Accuracy over the given samples, averaging logits across evaluation
// views (one center crop, or five crops when enabled).
double evaluate_model(EnsembleModel<float>& model, const Dataset& data,
                      const std::vector<int>& indices, const AugmentConfig& acfg,
                      int batch_size);

// Full training run on one split. Per-epoch rows go into the result and,
// when `metrics` is non-null, as CSV lines "run_id,epoch,lr,train_loss,
// test_acc".
TrainResult train_model(EnsembleModel<float>& model, const Dataset& data,
                        const Split& split, const TrainConfig& tcfg,
                        const AugmentConfig& acfg, const std::string& run_id,
                        std::ostream* metrics, bool verbose);

void write_metrics_header(std::ostream& out);

double mean_of(const std::vector<double>& v);
double population_std(const std::vector<double>& v);

}  // namespace texton

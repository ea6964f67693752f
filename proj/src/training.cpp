#include "texton/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <ostream>

namespace texton {

SchedulerKind parse_scheduler(const std::string& name) {
  if (name == "cosine") return SchedulerKind::cosine;
  if (name == "cosine_warm_restarts") return SchedulerKind::cosine_warm_restarts;
  throw ConfigError("scheduler: expected 'cosine' or 'cosine_warm_restarts', got '" +
                    name + "'");
}

const char* scheduler_name(SchedulerKind kind) {
  return kind == SchedulerKind::cosine ? "cosine" : "cosine_warm_restarts";
}

double lr_at_step(SchedulerKind kind, double lr_max, double lr_min,
                  std::int64_t t, std::int64_t total_steps,
                  std::int64_t t0_steps, int t_mult) {
  if (t < 0 || total_steps < 1)
    throw std::invalid_argument("lr_at_step: bad step bounds");
  constexpr double kPi = 3.14159265358979323846;
  if (kind == SchedulerKind::cosine) {
    const double phase = static_cast<double>(t) / static_cast<double>(total_steps);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(kPi * phase));
  }
  if (t0_steps < 1) throw std::invalid_argument("lr_at_step: t0_steps must be >= 1");
  if (t_mult < 1) throw std::invalid_argument("lr_at_step: t_mult must be >= 1");
  std::int64_t cycle_len = t0_steps;
  std::int64_t t_cur = t;
  while (t_cur >= cycle_len) {
    t_cur -= cycle_len;
    cycle_len *= t_mult;
  }
  const double phase = static_cast<double>(t_cur) / static_cast<double>(cycle_len);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(kPi * phase));
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 2)
    throw ConfigError("train: batch size must be >= 2 (batch norm needs it)");
  if (!(lr > 0)) throw ConfigError("train: learning rate must be positive");
  if (lr_min < 0 || lr_min > lr)
    throw ConfigError("train: lr_min must lie in [0, lr]");
  if (momentum < 0 || momentum >= 1)
    throw ConfigError("train: momentum must lie in [0, 1)");
  if (weight_decay < 0) throw ConfigError("train: weight decay must be >= 0");
  if (t0_epochs < 1 || t_mult < 1)
    throw ConfigError("train: restart period and multiplier must be >= 1");
}

SgdOptimizer::SgdOptimizer(ParamRefs<float> params, double momentum,
                           double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  for (auto* p : params_)
    velocity_.push_back(ArrayX<float>::Zero(p->numel()));
}

void SgdOptimizer::zero_grad() {
  for (auto* p : params_) p->tensor.zero_grad();
}

void SgdOptimizer::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter<float>& p = *params_[i];
    if (!p.grad().isFinite().all())
      throw NumericError("sgd: non-finite gradient in parameter '" + p.name + "'");
    ArrayX<float>& v = velocity_[i];
    if (weight_decay_ > 0)
      v = static_cast<float>(momentum_) * v + p.grad() +
          static_cast<float>(weight_decay_) * p.value();
    else
      v = static_cast<float>(momentum_) * v + p.grad();
    p.value() -= static_cast<float>(lr) * v;
  }
}

Tensor<float> batch_from_images(const std::vector<const Image*>& views) {
  if (views.empty()) throw std::invalid_argument("batch: no images");
  const Image& first = *views.front();
  const Index c = first.channels, h = first.height, w = first.width;
  Tensor<float> batch =
      Tensor<float>::empty({static_cast<Index>(views.size()), c, h, w});
  float* dst = batch.value().data();
  for (const Image* img : views) {
    if (img->channels != c || img->height != h || img->width != w)
      throw ShapeError("batch: mixed image extents");
    std::copy(img->pixels.begin(), img->pixels.end(), dst);
    dst += img->pixels.size();
  }
  return batch;
}

std::vector<int> argmax_rows(const Tensor<float>& logits) {
  const Index n = logits.dim(0), c = logits.dim(1);
  std::vector<int> out(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < n; ++i) {
    Index best = 0;
    for (Index j = 1; j < c; ++j)
      if (logits.value()[i * c + j] > logits.value()[i * c + best]) best = j;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

double evaluate_model(EnsembleModel<float>& model, const Dataset& data,
                      const std::vector<int>& indices, const AugmentConfig& acfg,
                      int batch_size) {
  if (indices.empty())
    throw std::invalid_argument("evaluate: empty index list");
  const int views_per = acfg.five_crop_eval ? 5 : 1;
  Tape<float> tape;
  tape.set_recording(false);

  int correct = 0;
  std::size_t pos = 0;
  while (pos < indices.size()) {
    const std::size_t take =
        std::min<std::size_t>(static_cast<std::size_t>(batch_size),
                              indices.size() - pos);
    std::vector<Image> storage;
    std::vector<const Image*> ptrs;
    std::vector<int> labels;
    for (std::size_t i = 0; i < take; ++i) {
      const int idx = indices[pos + i];
      for (Image& v :
           eval_views(data.images.at(static_cast<std::size_t>(idx)), acfg))
        storage.push_back(std::move(v));
      labels.push_back(data.samples.at(static_cast<std::size_t>(idx)).label);
    }
    for (const Image& v : storage) ptrs.push_back(&v);
    Tensor<float> batch = batch_from_images(ptrs);
    Tensor<float> logits = model.forward(tape, batch, /*training=*/false);
    const Index c = logits.dim(1);
    for (std::size_t i = 0; i < take; ++i) {
      // Average the view logits per sample before the argmax.
      ArrayX<float> avg = ArrayX<float>::Zero(c);
      for (int v = 0; v < views_per; ++v)
        avg += logits.value().segment(
            (static_cast<Index>(i) * views_per + v) * c, c);
      Index best = 0;
      for (Index j = 1; j < c; ++j)
        if (avg[j] > avg[best]) best = j;
      if (static_cast<int>(best) == labels[i]) ++correct;
    }
    pos += take;
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

void write_metrics_header(std::ostream& out) {
  out << "run_id,epoch,lr,train_loss,test_acc\n";
}

namespace {

void append_metrics_row(std::ostream& out, const std::string& run_id,
                        const EpochRow& row) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g", row.epoch, row.lr,
                row.train_loss, row.test_acc);
  out << run_id << ',' << buf << '\n';
}

}  // namespace

TrainResult train_model(EnsembleModel<float>& model, const Dataset& data,
                        const Split& split, const TrainConfig& tcfg,
                        const AugmentConfig& acfg, const std::string& run_id,
                        std::ostream* metrics, bool verbose) {
  tcfg.validate();
  if (split.train.empty() || split.test.empty())
    throw std::invalid_argument("train: split with empty train or test side");
  for (int idx : split.train)
    if (idx < 0 || idx >= data.size())
      throw std::out_of_range("train: split index " + std::to_string(idx) +
                              " outside the dataset");

  // Each training item is (sample, crop slot); five-crop expands 5x.
  const int views = acfg.train_views();
  std::vector<std::pair<int, int>> items;
  for (int idx : split.train)
    for (int v = 0; v < views; ++v)
      items.emplace_back(idx, acfg.five_crop_train ? v : -1);

  const std::int64_t steps_per_epoch =
      (static_cast<std::int64_t>(items.size()) + tcfg.batch_size - 1) /
      tcfg.batch_size;
  const std::int64_t total_steps = steps_per_epoch * tcfg.epochs;
  const std::int64_t t0_steps = steps_per_epoch * tcfg.t0_epochs;

  SgdOptimizer opt(model.parameters(tcfg.finetune_backbone), tcfg.momentum,
                   tcfg.weight_decay);
  Tape<float> tape;

  TrainResult result;
  std::int64_t step = 0;
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    Rng order_rng(derive_seed(tcfg.seed, "order", static_cast<std::uint64_t>(epoch)));
    Rng aug_rng(derive_seed(tcfg.seed, "augment", static_cast<std::uint64_t>(epoch)));
    std::vector<std::pair<int, int>> order = items;
    order_rng.shuffle(order);

    double loss_sum = 0;
    const double epoch_lr = lr_at_step(tcfg.scheduler, tcfg.lr, tcfg.lr_min, step,
                                       total_steps, t0_steps, tcfg.t_mult);
    std::size_t pos = 0;
    while (pos < order.size()) {
      const std::size_t take =
          std::min<std::size_t>(static_cast<std::size_t>(tcfg.batch_size),
                                order.size() - pos);
      std::vector<Image> storage;
      std::vector<const Image*> ptrs;
      std::vector<int> labels;
      for (std::size_t i = 0; i < take; ++i) {
        const auto& [idx, slot] = order[pos + i];
        storage.push_back(train_view(
            data.images.at(static_cast<std::size_t>(idx)), acfg, aug_rng, slot));
        labels.push_back(data.samples.at(static_cast<std::size_t>(idx)).label);
      }
      for (const Image& v : storage) ptrs.push_back(&v);

      Tensor<float> batch = batch_from_images(ptrs);
      Tensor<float> logits = model.forward(tape, batch, /*training=*/true);
      Tensor<float> loss = ops::softmax_cross_entropy(tape, logits, labels);
      if (!std::isfinite(loss.item()))
        throw NumericError("train: non-finite loss at epoch " +
                           std::to_string(epoch + 1) + ", step " +
                           std::to_string(step));
      opt.zero_grad();
      tape.backward(loss);
      opt.step(lr_at_step(tcfg.scheduler, tcfg.lr, tcfg.lr_min, step, total_steps,
                          t0_steps, tcfg.t_mult));
      tape.clear();

      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(take);
      pos += take;
      ++step;
    }

    EpochRow row;
    row.epoch = epoch + 1;
    row.lr = epoch_lr;
    row.train_loss = loss_sum / static_cast<double>(order.size());
    row.test_acc = evaluate_model(model, data, split.test, acfg, tcfg.batch_size);
    result.rows.push_back(row);
    result.best_acc = std::max(result.best_acc, row.test_acc);
    result.final_acc = row.test_acc;
    if (metrics) append_metrics_row(*metrics, run_id, row);
    if (verbose)
      std::cout << run_id << " epoch " << row.epoch << "/" << tcfg.epochs
                << "  lr " << row.lr << "  loss " << row.train_loss << "  acc "
                << row.test_acc << std::endl;
  }
  return result;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean: empty vector");
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double population_std(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace texton

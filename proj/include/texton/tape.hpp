#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "texton/common.hpp"
#include "texton/tensor.hpp"

namespace texton {

// Records backward closures in execution order during the forward pass and
// replays them in reverse. Each op pushes one entry that reads the output
// node's grad and accumulates into its inputs' grads. Gradient flow is
// therefore exact for any composition of taped ops, including reused
// tensors (their grads accumulate across all consumers).
template <typename S>
class Tape {
 public:
  void record(std::function<void()> backward_fn) {
    entries_.push_back(std::move(backward_fn));
  }

  // Seeds d(loss)/d(loss) = 1 and replays all entries in reverse. Entries
  // not on the loss's path see zero output grads and contribute nothing.
  void backward(const Tensor<S>& loss) {
    if (loss.numel() != 1)
      throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                  shape_str(loss.shape()));
    if (!loss.requires_grad())
      throw std::invalid_argument(
          "backward: loss is not connected to any recorded operation");
    loss.node()->grad[0] += S(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  }

  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }

  // With recording off, ops run forward-only (evaluation mode).
  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }

 private:
  std::vector<std::function<void()>> entries_;
  bool recording_ = true;
};

// RAII guard for temporarily disabling recording (evaluation passes).
template <typename S>
class NoGradGuard {
 public:
  explicit NoGradGuard(Tape<S>& tape) : tape_(tape), prev_(tape.recording()) {
    tape_.set_recording(false);
  }
  ~NoGradGuard() { tape_.set_recording(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape<S>& tape_;
  bool prev_;
};

}  // namespace texton

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "texton/nn.hpp"
#include "texton/rng.hpp"

// Thin parameter-owning wrappers around the nn ops. Weight tensors use
// fan-in-scaled uniform init (bound 1/sqrt(fan_in)), biases start at zero.

namespace texton {

template <typename S>
using ParamRefs = std::vector<Parameter<S>*>;

template <typename S>
Tensor<S> fanin_uniform(Shape shape, Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor<S>::uniform(std::move(shape), rng, -bound, bound);
}

template <typename S>
struct Conv2dModule {
  Parameter<S> w, b;
  Index stride = 1, pad = 0;

  Conv2dModule() = default;
  Conv2dModule(const std::string& name, Index in_ch, Index out_ch, Index k,
               Index stride_, Index pad_, Rng& rng)
      : w(name + ".w", fanin_uniform<S>({out_ch, in_ch, k, k}, in_ch * k * k, rng)),
        b(name + ".b", Tensor<S>::zeros({out_ch})),
        stride(stride_),
        pad(pad_) {}

  Tensor<S> forward(Tape<S>& tape, const Tensor<S>& x) const {
    return ops::conv2d(tape, x, w.tensor, b.tensor, stride, pad);
  }

  void collect(ParamRefs<S>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

template <typename S>
struct LinearModule {
  Parameter<S> w, b;

  LinearModule() = default;
  LinearModule(const std::string& name, Index in, Index out, Rng& rng)
      : w(name + ".w", fanin_uniform<S>({in, out}, in, rng)),
        b(name + ".b", Tensor<S>::zeros({out})) {}

  Tensor<S> forward(Tape<S>& tape, const Tensor<S>& x) const {
    return ops::linear(tape, x, w.tensor, b.tensor);
  }

  void collect(ParamRefs<S>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

template <typename S>
struct BatchNormModule {
  Parameter<S> gamma, beta;
  ArrayX<S> running_mean, running_var;
  S momentum = S(0.1), eps = S(1e-5);

  BatchNormModule() = default;
  BatchNormModule(const std::string& name, Index channels)
      : gamma(name + ".gamma", Tensor<S>::full({channels}, S(1))),
        beta(name + ".beta", Tensor<S>::zeros({channels})) {
    running_mean = ArrayX<S>::Zero(channels);
    running_var = ArrayX<S>::Ones(channels);
  }

  Tensor<S> forward(Tape<S>& tape, const Tensor<S>& x, bool training) {
    return ops::batch_norm(tape, x, gamma.tensor, beta.tensor, running_mean,
                           running_var, training, momentum, eps);
  }

  void collect(ParamRefs<S>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

template <typename S>
struct GroupedPointwiseModule {
  Parameter<S> w, b;
  Index groups = 1;

  GroupedPointwiseModule() = default;
  GroupedPointwiseModule(const std::string& name, Index in_ch, Index out_ch,
                         Index groups_, Rng& rng)
      : w(name + ".w",
          fanin_uniform<S>({out_ch, in_ch / groups_}, in_ch / groups_, rng)),
        b(name + ".b", Tensor<S>::zeros({out_ch})),
        groups(groups_) {}

  Tensor<S> forward(Tape<S>& tape, const Tensor<S>& x) const {
    return ops::pointwise_conv_grouped(tape, x, w.tensor, b.tensor, groups);
  }

  void collect(ParamRefs<S>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

}  // namespace texton

/* Copyright 2026 The sqakd Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef SQAKD_OPS_HPP_
#define SQAKD_OPS_HPP_

#include <functional>
#include <span>
#include <vector>

#include "sqakd/tensor.hpp"

// Differentiable ops. Every op records itself on the active Tape<T> when at
// least one input requires grad, and throws NumericError if its forward
// result is not finite. Instantiated for float and double.
namespace sqakd::ops {

// [m,k] x [k,n] -> [m,n]
template <typename T>
Tensor<T> MatMul(const Tensor<T>& a, const Tensor<T>& b);

// Cross-correlation. x: [N,C,H,W], w: [F,C,kh,kw], bias: [F] or undefined.
template <typename T>
Tensor<T> Conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding);

// Elementwise on equal shapes. Add also accepts a rank-1 `b` whose length
// equals the trailing dimension of `a` (bias-add).
template <typename T>
Tensor<T> Add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> Sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> Mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> Scale(const Tensor<T>& a, T factor);

template <typename T>
Tensor<T> Relu(const Tensor<T>& a);

// Both normalize over the last axis.
template <typename T>
Tensor<T> Softmax(const Tensor<T>& a);
template <typename T>
Tensor<T> LogSoftmax(const Tensor<T>& a);

template <typename T>
Tensor<T> Sum(const Tensor<T>& a);
template <typename T>
Tensor<T> Mean(const Tensor<T>& a);

template <typename T>
Tensor<T> Reshape(const Tensor<T>& a, Shape shape);

// [N,C] x labels[N] -> [N], out[i] = a[i, labels[i]].
template <typename T>
Tensor<T> Pick(const Tensor<T>& a, std::span<const int> labels);

// A user-defined op: `forward` computes the output from the input values and
// may stash arbitrary saved vectors; `backward` maps the upstream gradient
// and those saved vectors to one gradient per input. The autograd engine
// uses `backward` verbatim; nothing inside `forward` is differentiated.
template <typename T>
struct ForwardResult {
  Tensor<T> output;
  std::vector<std::vector<T>> saved;
};

template <typename T>
using CustomForward =
    std::function<ForwardResult<T>(std::span<const Tensor<T>> inputs)>;

template <typename T>
using CustomBackward = std::function<std::vector<std::vector<T>>(
    std::span<const T> upstream, const std::vector<std::vector<T>>& saved)>;

template <typename T>
class CustomGradOp {
 public:
  CustomGradOp(CustomForward<T> forward, CustomBackward<T> backward)
      : forward_(std::move(forward)), backward_(std::move(backward)) {}

  Tensor<T> operator()(std::vector<Tensor<T>> inputs) const;

 private:
  CustomForward<T> forward_;
  CustomBackward<T> backward_;
};

template <typename T>
CustomGradOp<T> MakeCustomGradOp(CustomForward<T> forward,
                                 CustomBackward<T> backward) {
  return CustomGradOp<T>(std::move(forward), std::move(backward));
}

}  // namespace sqakd::ops

#endif  // SQAKD_OPS_HPP_

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

#ifndef SQAKD_QUANTIZER_HPP_
#define SQAKD_QUANTIZER_HPP_

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sqakd/tensor.hpp"

namespace sqakd {

// A uniform quantizer is split into three stages:
//
//   x_c = clip(x; p)          continuous, in the clip domain
//   r   = level(x_c)          nearest of 2^b grid points in the clip domain
//   x_q = post(r)             affine output map (identity for activations,
//                             [0,1] -> [-1,1] for EWGS/DoReFa weights,
//                             scale by s for LSQ)
//
// Backward treats the rounding as the discretization-error-aware estimator
//
//   dL/dx_c = g + mu(g) * (x_c - r),   g = post'(r) * dL/dx_q
//
// where mu = 0 gives the straight-through estimator and mu = delta*sign(g)*g
// gives element-wise gradient scaling. The clip stage is then differentiated
// analytically with respect to both x and the trainable clip parameters.

enum class QuantizerKind { kPact, kEwgs, kDorefa, kLsq };
enum class QuantTarget { kWeights, kActivations };
enum class BackwardKind { kSte, kEwgs, kCustom };

const char* ToString(QuantizerKind kind);
const char* ToString(QuantTarget target);
const char* ToString(BackwardKind kind);
QuantizerKind ParseQuantizerKind(const std::string& name);
QuantTarget ParseQuantTarget(const std::string& name);
BackwardKind ParseBackwardKind(const std::string& name);

struct BackwardRule {
  BackwardKind kind = BackwardKind::kSte;
  double delta = 0.0;
  // Custom only: mu as a function of the upstream gradient.
  std::function<double(double)> custom_mu;

  static BackwardRule Ste() { return {}; }
  static BackwardRule Ewgs(double delta) {
    return {BackwardKind::kEwgs, delta, nullptr};
  }
  static BackwardRule Custom(std::function<double(double)> mu) {
    return {BackwardKind::kCustom, 0.0, std::move(mu)};
  }

  void Validate() const;
};

// Applies the estimator elementwise: returns dL/dx_c given g = dL/dr.
template <typename T>
std::vector<T> EstimatorBackward(std::span<const T> upstream,
                                 std::span<const T> clipped,
                                 std::span<const T> levels,
                                 const BackwardRule& rule);

template <typename T>
struct QuantizerSpec {
  QuantizerKind kind = QuantizerKind::kEwgs;
  QuantTarget target = QuantTarget::kActivations;
  int bits = 2;
  BackwardRule backward;
  // Trainable scalars, one tensor of shape [1] each:
  //   PACT {m}, EWGS {p1, p2}, LSQ {s}, DoReFa {}.
  std::vector<Tensor<T>> params;

  bool initialized() const;
  // Throws ConfigError on malformed specs and NumericError on degenerate
  // parameter values.
  void Validate() const;
  int max_level() const { return (1 << bits) - 1; }
  // Closed interval containing every output value.
  std::pair<T, T> OutputRange() const;
};

std::size_t RequiredParamCount(QuantizerKind kind);

// Signed LSQ grid for weights, unsigned for activations.
std::pair<int, int> LsqBounds(QuantTarget target, int bits);

struct QuantizerInit {
  double pact_activation_clip = 3.0;
};

template <typename T>
QuantizerSpec<T> MakeQuantizer(QuantizerKind kind, QuantTarget target,
                               int bits, BackwardRule rule);

// Sets params from explicit values (requires_grad = true).
template <typename T>
void SetQuantizerParams(QuantizerSpec<T>& spec, std::vector<T> values);

// Data-driven initialization from the first tensor the quantizer will see.
template <typename T>
void InitializeQuantizer(QuantizerSpec<T>& spec, std::span<const T> sample,
                         const QuantizerInit& init = {});

// Stage 1 values (no gradient recorded).
template <typename T>
Tensor<T> Clip(const Tensor<T>& x, const QuantizerSpec<T>& spec);

// Stages 2 and 3 applied to clip-domain values (no gradient recorded).
template <typename T>
Tensor<T> RoundQ(const Tensor<T>& clipped, const QuantizerSpec<T>& spec);

// Vector-Jacobian product of the clip stage: given dL/dx_c returns dL/dx and
// one dL/dp per clip parameter. Kinks take the inside branch.
template <typename T>
struct ClipGradients {
  std::vector<T> input;
  std::vector<T> params;
};

template <typename T>
ClipGradients<T> ClipBackward(const Tensor<T>& x, const QuantizerSpec<T>& spec,
                              std::span<const T> grad_clipped);

// Full fake-quantizer with the estimator backward. Records on the active
// tape with x and the trainable params as inputs.
template <typename T>
Tensor<T> Quantize(const Tensor<T>& x, const QuantizerSpec<T>& spec);

template <typename T>
Tensor<T> QuantizeDorefa(const Tensor<T>& x, const QuantizerSpec<T>& spec);
template <typename T>
Tensor<T> QuantizeLsq(const Tensor<T>& x, const QuantizerSpec<T>& spec);

}  // namespace sqakd

#endif  // SQAKD_QUANTIZER_HPP_

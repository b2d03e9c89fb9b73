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

#ifndef SQAKD_LOSSES_HPP_
#define SQAKD_LOSSES_HPP_

#include <optional>
#include <span>
#include <string>

#include "sqakd/tensor.hpp"

namespace sqakd {

enum class ObjectiveMode { kCeOnly, kKlOnly, kMixed };

const char* ToString(ObjectiveMode mode);

// (1 - lambda) * CE + lambda * KL. The mode is implied by lambda: 0 is
// CE-only, 1 is KL-only (labels never read), anything in between is mixed.
struct ObjectiveSpec {
  ObjectiveMode mode = ObjectiveMode::kKlOnly;
  double lambda = 1.0;
  double temperature = 4.0;

  static ObjectiveSpec FromLambda(double lambda, double temperature = 4.0);
  static ObjectiveSpec CeOnly() { return FromLambda(0.0); }
  static ObjectiveSpec KlOnly(double temperature = 4.0) {
    return FromLambda(1.0, temperature);
  }

  bool needs_labels() const { return mode != ObjectiveMode::kKlOnly; }
  bool needs_teacher() const { return mode != ObjectiveMode::kCeOnly; }
  void Validate() const;
};

// Mean over the batch of -log softmax(logits)[label].
template <typename T>
Tensor<T> CeLoss(const Tensor<T>& logits, std::span<const int> labels);

// Mean over the batch of KL(softmax(teacher/rho) || softmax(student/rho)).
// The teacher side is treated as a constant: no gradient reaches it.
template <typename T>
Tensor<T> KlLoss(const Tensor<T>& teacher_logits,
                 const Tensor<T>& student_logits, T temperature);

// Combines already-computed CE and KL terms. Endpoints return the selected
// term itself, so lambda = 0 and lambda = 1 are bit-exact.
template <typename T>
Tensor<T> MixLosses(const Tensor<T>& ce, const Tensor<T>& kl,
                    const ObjectiveSpec& spec);

// Full objective. `labels` may be absent only in KL-only mode and
// `teacher_logits` may be undefined only in CE-only mode.
template <typename T>
Tensor<T> TotalLoss(const Tensor<T>& teacher_logits,
                    const Tensor<T>& student_logits,
                    std::optional<std::span<const int>> labels,
                    const ObjectiveSpec& spec);

}  // namespace sqakd

#endif  // SQAKD_LOSSES_HPP_

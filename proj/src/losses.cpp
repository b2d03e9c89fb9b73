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

#include "sqakd/losses.hpp"

#include <algorithm>
#include <cmath>

#include "sqakd/ops.hpp"

namespace sqakd {

const char* ToString(ObjectiveMode mode) {
  switch (mode) {
    case ObjectiveMode::kCeOnly: return "ce";
    case ObjectiveMode::kKlOnly: return "kl";
    case ObjectiveMode::kMixed: return "mixed";
  }
  return "?";
}

ObjectiveSpec ObjectiveSpec::FromLambda(double lambda, double temperature) {
  ObjectiveSpec spec;
  spec.lambda = lambda;
  spec.temperature = temperature;
  if (lambda == 0.0) {
    spec.mode = ObjectiveMode::kCeOnly;
  } else if (lambda == 1.0) {
    spec.mode = ObjectiveMode::kKlOnly;
  } else {
    spec.mode = ObjectiveMode::kMixed;
  }
  spec.Validate();
  return spec;
}

void ObjectiveSpec::Validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("temperature must be positive");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ConfigError("lambda must lie in [0, 1]");
  }
  const bool ok = (mode == ObjectiveMode::kCeOnly && lambda == 0.0) ||
                  (mode == ObjectiveMode::kKlOnly && lambda == 1.0) ||
                  (mode == ObjectiveMode::kMixed && lambda > 0.0 && lambda < 1.0);
  if (!ok) {
    throw ConfigError(std::string("objective mode '") + ToString(mode) +
                      "' is inconsistent with lambda = " +
                      std::to_string(lambda));
  }
}

template <typename T>
Tensor<T> CeLoss(const Tensor<T>& logits, std::span<const int> labels) {
  return ops::Scale(ops::Mean(ops::Pick(ops::LogSoftmax(logits), labels)), T(-1));
}

template <typename T>
Tensor<T> KlLoss(const Tensor<T>& teacher_logits,
                 const Tensor<T>& student_logits, T temperature) {
  if (teacher_logits.shape() != student_logits.shape()) {
    throw DimensionError("kl_loss shape mismatch " +
                         ShapeToString(teacher_logits.shape()) + " vs " +
                         ShapeToString(student_logits.shape()));
  }
  if (!(temperature > T(0))) throw ConfigError("temperature must be positive");
  if (student_logits.rank() != 2 || student_logits.dim(1) == 0) {
    throw DimensionError("kl_loss expects [N, C] logits");
  }
  const std::size_t rows = student_logits.dim(0);
  const std::size_t cols = student_logits.dim(1);

  // Teacher distribution as constants, computed in log space with the same
  // arithmetic as the student side so identical logits give exactly zero.
  const T inv_rho = T(1) / temperature;
  const auto H = teacher_logits.data();
  std::vector<T> p_teacher(H.size()), log_p_teacher(H.size());
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<T> z(cols);
    for (std::size_t c = 0; c < cols; ++c) z[c] = H[r * cols + c] * inv_rho;
    const T mx = *std::max_element(z.begin(), z.end());
    T total = 0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(z[c] - mx);
    const T log_total = std::log(total);
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      log_p_teacher[i] = z[c] - mx - log_total;
      p_teacher[i] = std::exp(log_p_teacher[i]);
    }
  }
  const Tensor<T> p_t(student_logits.shape(), std::move(p_teacher));
  const Tensor<T> log_p_t(student_logits.shape(), std::move(log_p_teacher));

  const auto log_p_s = ops::LogSoftmax(ops::Scale(student_logits, inv_rho));
  const auto pointwise = ops::Mul(p_t, ops::Sub(log_p_t, log_p_s));
  return ops::Scale(ops::Sum(pointwise), T(1) / static_cast<T>(rows));
}

template <typename T>
Tensor<T> MixLosses(const Tensor<T>& ce, const Tensor<T>& kl,
                    const ObjectiveSpec& spec) {
  spec.Validate();
  switch (spec.mode) {
    case ObjectiveMode::kCeOnly: return ce;
    case ObjectiveMode::kKlOnly: return kl;
    case ObjectiveMode::kMixed: {
      const T lambda = static_cast<T>(spec.lambda);
      return ops::Add(ops::Scale(ce, T(1) - lambda), ops::Scale(kl, lambda));
    }
  }
  return ce;
}

template <typename T>
Tensor<T> TotalLoss(const Tensor<T>& teacher_logits,
                    const Tensor<T>& student_logits,
                    std::optional<std::span<const int>> labels,
                    const ObjectiveSpec& spec) {
  spec.Validate();
  if (spec.needs_labels() && !labels) {
    throw DataError(DataFault::kMissingLabels,
                    std::string("objective '") + ToString(spec.mode) +
                        "' requires ground-truth labels but none were provided");
  }
  if (spec.needs_teacher() && !teacher_logits.defined()) {
    throw MissingTeacherError(std::string("objective '") + ToString(spec.mode) +
                              "' requires teacher logits");
  }
  const T rho = static_cast<T>(spec.temperature);
  switch (spec.mode) {
    case ObjectiveMode::kCeOnly:
      return CeLoss(student_logits, *labels);
    case ObjectiveMode::kKlOnly:
      return KlLoss(teacher_logits, student_logits, rho);
    case ObjectiveMode::kMixed:
      return MixLosses(CeLoss(student_logits, *labels),
                       KlLoss(teacher_logits, student_logits, rho), spec);
  }
  return {};
}

#define SQAKD_INSTANTIATE_LOSSES(T)                                           \
  template Tensor<T> CeLoss(const Tensor<T>&, std::span<const int>);          \
  template Tensor<T> KlLoss(const Tensor<T>&, const Tensor<T>&, T);           \
  template Tensor<T> MixLosses(const Tensor<T>&, const Tensor<T>&,            \
                               const ObjectiveSpec&);                         \
  template Tensor<T> TotalLoss(const Tensor<T>&, const Tensor<T>&,            \
                               std::optional<std::span<const int>>,           \
                               const ObjectiveSpec&);

SQAKD_INSTANTIATE_LOSSES(float)
SQAKD_INSTANTIATE_LOSSES(double)

#undef SQAKD_INSTANTIATE_LOSSES

}  // namespace sqakd

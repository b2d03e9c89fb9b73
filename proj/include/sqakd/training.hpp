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

#ifndef SQAKD_TRAINING_HPP_
#define SQAKD_TRAINING_HPP_

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sqakd/data.hpp"
#include "sqakd/losses.hpp"
#include "sqakd/network.hpp"

namespace sqakd {

enum class OptimizerKind { kSgd, kAdam };
enum class InitKind { kFromTeacher, kRandom };

OptimizerKind ParseOptimizerKind(const std::string& name);
InitKind ParseInitKind(const std::string& name);

struct TrainPlan {
  ObjectiveSpec objective = ObjectiveSpec::KlOnly();
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double initial_lr = 1e-3;
  double weight_decay = 1e-4;
  double momentum = 0.9;  // SGD only
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  std::size_t warmup_iters = 0;
  std::uint64_t seed = 0;
  InitKind init = InitKind::kFromTeacher;
  double grad_clip_norm = 5.0;  // <= 0 disables clipping
  QuantizerInit quantizer_init;

  void Validate() const;
};

std::size_t IterationsPerEpoch(std::size_t dataset_size, std::size_t batch_size);

// Linear warmup from 0 to initial_lr over warmup_iters, then cosine decay
// reaching exactly 0 at iteration total_iters - 1.
double LrAt(std::size_t iter, std::size_t total_iters, const TrainPlan& plan);

struct IterationRecord {
  std::size_t iter = 0;
  std::size_t epoch = 0;
  double ce_loss = 0;     // NaN when labels are unavailable
  double kl_loss = 0;     // NaN when no teacher is available
  double total_loss = 0;
  double lr = 0;
  std::optional<double> test_acc;  // set on the last iteration of an epoch
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::optional<double> train_acc;
  std::optional<double> test_acc;
};

struct RunRecord {
  std::vector<IterationRecord> iterations;
  std::vector<EpochRecord> epochs;
  double wall_clock_seconds = 0;

  // Header: iter,epoch,ce_loss,kl_loss,total_loss,lr,test_acc. Missing values
  // are written as empty fields.
  void WriteCsv(std::ostream& out) const;
  void WriteCsv(const std::string& path) const;

  std::optional<double> final_test_accuracy() const;
  // Means over the iterations of the last epoch.
  double final_ce_loss() const;
  double final_kl_loss() const;
};

struct TrainResult {
  Network network;
  RunRecord record;
};

// Raised when a loss or gradient turns non-finite. `last_good` holds the
// parameters as of the start of the failing epoch.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, Network last_good)
      : NumericError(what), last_good_(std::move(last_good)) {}
  const Network& last_good() const { return last_good_; }

 private:
  Network last_good_;
};

double Evaluate(const Network& net, bool quantized, const Dataset& data);

// Full-precision training with cross-entropy. `net` must carry no quantizers.
TrainResult TrainTeacher(Network net, const Dataset& train, const Dataset* test,
                         const TrainPlan& plan);

// Quantization-aware training of `student` against a frozen `teacher`
// (nullptr allowed for CE-only with random init). The teacher's parameters
// are hashed every epoch and must never change.
TrainResult TrainStudent(const Network* teacher, Network student,
                         const Dataset& train, const Dataset* test,
                         const TrainPlan& plan);

// One independent run per lambda with identical seed and data order. Arms
// run on up to `threads` worker threads; results are in lambda order.
std::vector<TrainResult> SweepLambda(const Network& teacher,
                                     const Network& student,
                                     const Dataset& train, const Dataset* test,
                                     std::span<const double> lambdas,
                                     const TrainPlan& plan,
                                     std::size_t threads = 1);

}  // namespace sqakd

#endif  // SQAKD_TRAINING_HPP_

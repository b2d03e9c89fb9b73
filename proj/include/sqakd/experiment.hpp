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

#ifndef SQAKD_EXPERIMENT_HPP_
#define SQAKD_EXPERIMENT_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sqakd/checkpoint.hpp"
#include "sqakd/data.hpp"
#include "sqakd/oracles.hpp"
#include "sqakd/training.hpp"

namespace sqakd {

inline constexpr int kConfigSchemaVersion = 1;

// Flat JSON experiment description. Every key except schema_version is
// optional; unknown keys are rejected.
struct ExperimentConfig {
  // Data.
  std::string dataset = "blobs";  // blobs | moons | idx
  std::size_t n_train = 1000;
  std::size_t n_test = 500;
  std::size_t classes = 2;
  double moons_noise = 0.1;
  std::string idx_train_images, idx_train_labels;
  std::string idx_test_images, idx_test_labels;
  // false strips labels from the training loader.
  bool train_labels = true;

  // Model and quantizer.
  std::string model = "mlp";  // mlp | cnn
  std::size_t hidden = 32;
  std::string quantizer = "ewgs";
  std::string backward = "ewgs";
  double delta = 0.01;
  int weight_bits = 2;
  int activation_bits = 2;
  bool quantize_first_last = false;
  double pact_activation_clip = 3.0;

  // Objective.
  std::string method = "sqakd";  // ce | sqakd | mixed
  double lambda = 0.5;            // mixed only
  double temperature = 4.0;

  // Optimization.
  std::string optimizer = "adam";
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double momentum = 0.9;
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  std::size_t warmup_iters = 0;
  double grad_clip_norm = 5.0;
  std::string init = "teacher";  // teacher | random

  // Landscape.
  double landscape_extent = 1.0;
  std::size_t landscape_resolution = 21;

  std::uint64_t seed = 0;
  std::string output_dir = "runs/out";

  ObjectiveSpec Objective() const;
  TrainPlan Plan() const;
  QuantizationPlan Quantization() const;
  // Throws ConfigError on any inconsistent field.
  void Validate() const;
};

ExperimentConfig ParseConfig(const std::string& json_text);
ExperimentConfig LoadConfig(const std::string& path);
std::string ConfigToJson(const ExperimentConfig& config);

struct ExperimentData {
  Dataset train;
  Dataset test;
};

// All randomness derives from config.seed. IDX paths are checked here.
ExperimentData LoadExperimentData(const ExperimentConfig& config);

// Freshly initialized full-precision network for the configured model.
Network BuildNetwork(const ExperimentConfig& config, const Dataset& data);

// Each command writes its artifacts and a run.json manifest under
// config.output_dir and returns the primary artifact path.
std::string RunTrainFp(const ExperimentConfig& config);
std::string RunTrainQat(const ExperimentConfig& config,
                        const std::optional<std::string>& teacher_dir);
std::vector<std::string> RunSweepLambda(const ExperimentConfig& config,
                                        const std::string& teacher_dir,
                                        const std::vector<double>& lambdas,
                                        std::size_t threads);
double RunEval(const ExperimentConfig& config, const std::string& checkpoint_dir,
               bool quantized);
std::string RunExportQuantized(const std::string& checkpoint_dir,
                               const std::string& out_dir);
std::string RunLandscape(const ExperimentConfig& config,
                         const std::string& checkpoint_dir,
                         const std::optional<std::string>& teacher_dir,
                         bool quantized);

}  // namespace sqakd

#endif  // SQAKD_EXPERIMENT_HPP_

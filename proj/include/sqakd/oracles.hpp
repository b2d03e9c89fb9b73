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

#ifndef SQAKD_ORACLES_HPP_
#define SQAKD_ORACLES_HPP_

#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sqakd/data.hpp"
#include "sqakd/losses.hpp"
#include "sqakd/network.hpp"
#include "sqakd/quantizer.hpp"

namespace sqakd {

using ScalarFn = std::function<double(std::span<const double>)>;

// Central differences, (f(x + h e_i) - f(x - h e_i)) / 2h, one coordinate at
// a time. Throws NumericError when f is not finite at a probe point.
std::vector<double> GradOracle(const ScalarFn& f, std::span<const double> x,
                               double h = 1e-5);

// ||a - b|| / max(||a||, ||b||) in the Euclidean norm; 0 when both vanish.
double RelativeError(std::span<const double> a, std::span<const double> b);

// Every distinct value Quantize() emits over a dense sweep of an interval
// covering the clip range plus `n_samples` uniform draws from it. The whole
// probe set is quantized as one tensor. Requires n_samples >= 1000.
std::set<double> LevelOracle(const QuantizerSpec<double>& spec,
                             std::size_t n_samples, std::uint64_t seed = 0);

// The evenly spaced grid {v + k (m - v) / (2^b - 1)} for the output range
// [v, m] implied by the spec's kind, target and parameters.
std::vector<double> TheoreticalGrid(const QuantizerSpec<double>& spec);

struct SliceConfig {
  double extent = 1.0;
  std::size_t resolution = 21;
  std::uint64_t seed = 0;
};

// Grid coordinate i of a resolution-point axis over [-extent, extent]. The
// middle coordinate of an odd resolution is exactly 0.
double SliceCoordinate(std::size_t i, const SliceConfig& cfg);

struct LandscapeSlice {
  SliceConfig config;
  std::vector<double> coords;
  // loss[i][j] at theta + coords[i] d1 + coords[j] d2. Non-finite cells hold
  // NaN and are listed in `flagged`.
  std::vector<std::vector<double>> loss;
  std::vector<std::pair<std::size_t, std::size_t>> flagged;
  double center_loss = 0;
  std::vector<double> d1_norms;  // per parameter tensor, after normalization
  std::vector<double> d2_norms;
};

// Evaluates `f` on the plane theta + u d1 + v d2. Exceptions of kind
// NumericError and non-finite results flag the cell instead of aborting.
LandscapeSlice SliceGrid(const ScalarFn& f, std::span<const double> theta,
                         std::span<const double> d1, std::span<const double> d2,
                         const SliceConfig& cfg);

// Full-dataset objective value of `net` in one pass, without recording.
double DatasetLoss(const Network& net, const Network* teacher,
                   const Dataset& data, const ObjectiveSpec& objective,
                   bool quantized);

// Loss surface around the latent weights and biases of `net`. Directions are
// Gaussian with each parameter-tensor block rescaled to the norm of the
// corresponding parameter tensor. Quantizer parameters stay fixed.
LandscapeSlice ExportLandscape(const Network& net, const Network* teacher,
                               const Dataset& data,
                               const ObjectiveSpec& objective, bool quantized,
                               const SliceConfig& cfg);

// Writes `<dir>/landscape.csv` (resolution rows of resolution values, "nan"
// for flagged cells) and `<dir>/landscape.json`.
void WriteLandscape(const LandscapeSlice& slice, const std::string& dir);

}  // namespace sqakd

#endif  // SQAKD_ORACLES_HPP_

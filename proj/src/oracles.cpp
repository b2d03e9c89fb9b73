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

#include "sqakd/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "json.hpp"

namespace sqakd {

std::vector<double> GradOracle(const ScalarFn& f, std::span<const double> x,
                               double h) {
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite-difference probe " + std::to_string(i) +
                         " produced a non-finite value");
    }
    grad[i] = (up - down) / (2 * h);
  }
  return grad;
}

double RelativeError(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("relative error of vectors with lengths " +
                         std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  if (scale == 0) return 0;
  return std::sqrt(diff) / scale;
}

namespace {

// Half-width of an input interval that comfortably covers the clip range.
double SweepRadius(const QuantizerSpec<double>& spec) {
  double r = 1;
  for (const auto& p : spec.params) r = std::max(r, std::abs(p[0]));
  if (spec.kind == QuantizerKind::kLsq) r *= static_cast<double>(1 << spec.bits);
  return 1.5 * r + 1;
}

}  // namespace

std::set<double> LevelOracle(const QuantizerSpec<double>& spec,
                             std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 1000) {
    throw ConfigError("level oracle needs at least 1000 random samples");
  }
  constexpr std::size_t kSweep = 200001;
  const double radius = SweepRadius(spec);
  std::vector<double> probe;
  probe.reserve(kSweep + n_samples);
  for (std::size_t i = 0; i < kSweep; ++i) {
    probe.push_back(-radius + 2 * radius * static_cast<double>(i) / (kSweep - 1));
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-radius, radius);
  for (std::size_t i = 0; i < n_samples; ++i) probe.push_back(dist(rng));

  NoGradGuard<double> guard;
  const std::size_t n = probe.size();
  const auto out = Quantize(Tensor<double>({n}, std::move(probe)), spec);
  return {out.data().begin(), out.data().end()};
}

std::vector<double> TheoreticalGrid(const QuantizerSpec<double>& spec) {
  const bool weights = spec.target == QuantTarget::kWeights;
  double lo = 0, hi = 1;
  switch (spec.kind) {
    case QuantizerKind::kPact:
      hi = spec.params.at(0)[0];
      lo = weights ? -hi : 0.0;
      break;
    case QuantizerKind::kEwgs:
    case QuantizerKind::kDorefa:
      lo = weights ? -1.0 : 0.0;
      break;
    case QuantizerKind::kLsq: {
      const double s = spec.params.at(0)[0];
      const double half = std::ldexp(1.0, spec.bits - 1);
      lo = weights ? -half * s : 0.0;
      hi = weights ? (half - 1) * s : (std::ldexp(1.0, spec.bits) - 1) * s;
      break;
    }
  }
  const int steps = (1 << spec.bits) - 1;
  std::vector<double> grid;
  for (int k = 0; k <= steps; ++k) grid.push_back(lo + k * (hi - lo) / steps);
  return grid;
}

double SliceCoordinate(std::size_t i, const SliceConfig& cfg) {
  if (cfg.resolution <= 1) return 0.0;
  const double span = static_cast<double>(cfg.resolution - 1);
  return cfg.extent * (2.0 * static_cast<double>(i) - span) / span;
}

LandscapeSlice SliceGrid(const ScalarFn& f, std::span<const double> theta,
                         std::span<const double> d1, std::span<const double> d2,
                         const SliceConfig& cfg) {
  if (cfg.resolution == 0) throw ConfigError("landscape resolution must be positive");
  if (!(cfg.extent >= 0)) throw ConfigError("landscape extent must be non-negative");
  if (d1.size() != theta.size() || d2.size() != theta.size()) {
    throw DimensionError("landscape directions do not match the parameter count");
  }
  LandscapeSlice slice;
  slice.config = cfg;
  for (std::size_t i = 0; i < cfg.resolution; ++i) {
    slice.coords.push_back(SliceCoordinate(i, cfg));
  }
  std::vector<double> point(theta.size());
  slice.loss.assign(cfg.resolution, std::vector<double>(cfg.resolution));
  for (std::size_t i = 0; i < cfg.resolution; ++i) {
    for (std::size_t j = 0; j < cfg.resolution; ++j) {
      const double u = slice.coords[i], v = slice.coords[j];
      for (std::size_t k = 0; k < theta.size(); ++k) {
        point[k] = theta[k] + u * d1[k] + v * d2[k];
      }
      double value;
      try {
        value = f(point);
      } catch (const NumericError&) {
        value = std::numeric_limits<double>::quiet_NaN();
      }
      if (!std::isfinite(value)) {
        value = std::numeric_limits<double>::quiet_NaN();
        slice.flagged.emplace_back(i, j);
      }
      slice.loss[i][j] = value;
    }
  }
  slice.center_loss = f(theta);
  return slice;
}

double DatasetLoss(const Network& net, const Network* teacher,
                   const Dataset& data, const ObjectiveSpec& objective,
                   bool quantized) {
  if (data.size() == 0) throw DataError(DataFault::kEmpty, "loss over an empty dataset");
  NoGradGuard<float> guard;
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto x = data.Batch(all);
  Tensor<float> teacher_logits;
  if (objective.needs_teacher()) {
    if (!teacher) throw MissingTeacherError("objective requires a teacher network");
    teacher_logits = teacher->Forward(x, false);
  }
  std::optional<std::span<const int>> labels;
  if (data.has_labels()) labels = std::span<const int>(*data.labels);
  const auto student = net.Forward(x, quantized);
  return TotalLoss(teacher_logits, student, labels, objective).item();
}

LandscapeSlice ExportLandscape(const Network& net, const Network* teacher,
                               const Dataset& data,
                               const ObjectiveSpec& objective, bool quantized,
                               const SliceConfig& cfg) {
  Network probe = net.Clone();
  auto params = probe.Parameters();
  std::vector<double> theta;
  for (const auto& p : params) theta.insert(theta.end(), p.data().begin(), p.data().end());

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> d1(theta.size()), d2(theta.size());
  std::vector<double> n1, n2;
  for (auto* d : {&d1, &d2}) {
    for (auto& v : *d) v = gauss(rng);
  }
  // Rescale each direction block to the norm of its parameter tensor.
  std::size_t offset = 0;
  for (const auto& p : params) {
    double pn = 0;
    for (const float v : p.data()) pn += static_cast<double>(v) * v;
    pn = std::sqrt(pn);
    for (auto [d, norms] : {std::pair{&d1, &n1}, std::pair{&d2, &n2}}) {
      double dn = 0;
      for (std::size_t k = 0; k < p.size(); ++k) dn += (*d)[offset + k] * (*d)[offset + k];
      dn = std::sqrt(dn);
      const double factor = dn > 0 ? pn / dn : 0.0;
      for (std::size_t k = 0; k < p.size(); ++k) (*d)[offset + k] *= factor;
      norms->push_back(pn);
    }
    offset += p.size();
  }

  auto loss_at = [&](std::span<const double> point) {
    std::size_t k = 0;
    for (auto& p : params) {
      for (float& v : p.mutable_data()) v = static_cast<float>(point[k++]);
    }
    return DatasetLoss(probe, teacher, data, objective, quantized);
  };
  LandscapeSlice slice = SliceGrid(loss_at, theta, d1, d2, cfg);
  slice.d1_norms = std::move(n1);
  slice.d2_norms = std::move(n2);
  return slice;
}

void WriteLandscape(const LandscapeSlice& slice, const std::string& dir_name) {
  namespace fs = std::filesystem;
  const fs::path dir(dir_name);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IOError("cannot create " + dir_name + ": " + ec.message());

  std::ofstream csv(dir / "landscape.csv", std::ios::trunc);
  if (!csv) throw IOError("cannot write landscape.csv in " + dir_name);
  csv.precision(17);
  for (const auto& row : slice.loss) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) csv << ",";
      if (std::isnan(row[j])) {
        csv << "nan";
      } else {
        csv << row[j];
      }
    }
    csv << "\n";
  }

  nlohmann::json flagged = nlohmann::json::array();
  for (const auto& [i, j] : slice.flagged) flagged.push_back({i, j});
  const nlohmann::json meta = {{"directions_seed", slice.config.seed},
                               {"extent", slice.config.extent},
                               {"resolution", slice.config.resolution},
                               {"center_loss", slice.center_loss},
                               {"coords", slice.coords},
                               {"normalization", "per-parameter-tensor"},
                               {"flagged_cells", flagged}};
  std::ofstream json_out(dir / "landscape.json", std::ios::trunc);
  if (!json_out) throw IOError("cannot write landscape.json in " + dir_name);
  json_out << meta.dump(2) << "\n";
  if (!csv || !json_out) throw IOError("short write in " + dir_name);
}

}  // namespace sqakd

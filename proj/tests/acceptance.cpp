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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. Pass criterion numbers as arguments to run
// a subset.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sqakd/checkpoint.hpp"
#include "sqakd/experiment.hpp"
#include "sqakd/losses.hpp"
#include "sqakd/ops.hpp"
#include "sqakd/oracles.hpp"
#include "sqakd/quantizer.hpp"
#include "sqakd/training.hpp"

namespace {

using namespace sqakd;
namespace fs = std::filesystem;
using D = Tensor<double>;

struct Outcome {
  bool pass = true;
  std::string detail;

  void Require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

std::string Fmt(const char* fmt, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), fmt, a, b, c);
  return buf;
}

double Median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

fs::path Scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "sqakd_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

D Random(Shape shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(NumElements(shape));
  for (auto& x : v) x = dist(rng);
  return D(std::move(shape), std::move(v));
}

// --- 1 --------------------------------------------------------------------

QuantizerSpec<double> SpecFor(QuantizerKind kind, QuantTarget target, int bits) {
  auto spec = MakeQuantizer<double>(kind, target, bits, BackwardRule::Ste());
  switch (kind) {
    case QuantizerKind::kPact: SetQuantizerParams(spec, {1.7}); break;
    case QuantizerKind::kEwgs: SetQuantizerParams(spec, {-0.8, 1.3}); break;
    case QuantizerKind::kLsq: SetQuantizerParams(spec, {0.05}); break;
    case QuantizerKind::kDorefa: break;
  }
  return spec;
}

Outcome LevelStructure() {
  Outcome o;
  std::size_t checked = 0;
  for (auto kind : {QuantizerKind::kPact, QuantizerKind::kEwgs, QuantizerKind::kDorefa,
                    QuantizerKind::kLsq}) {
    for (auto target : {QuantTarget::kWeights, QuantTarget::kActivations}) {
      for (int bits : {1, 2, 3, 4, 8}) {
        const auto spec = SpecFor(kind, target, bits);
        const auto levels = LevelOracle(spec, 5000, 17);
        const auto grid = TheoreticalGrid(spec);
        const std::string tag = std::string(ToString(kind)) + "/" + ToString(target) +
                                "/b" + std::to_string(bits);
        o.Require(levels.size() <= (std::size_t{1} << bits), tag + " exceeds 2^b levels");
        o.Require(levels.size() == grid.size(), tag + " level count differs from grid");
        // Element-wise match against the grid, allowing for rounding in
        // the affine maps.
        auto it = levels.begin();
        for (std::size_t k = 0; k < grid.size() && it != levels.end(); ++k, ++it) {
          const double tol = 1e-12 * std::max(1.0, std::abs(grid[k]));
          o.Require(std::abs(*it - grid[k]) <= tol, tag + " level off grid");
        }
        ++checked;
      }
    }
  }
  o.detail = o.pass ? std::to_string(checked) + " (kind, target, bits) combos match their grids"
                    : o.detail;
  return o;
}

// --- 2 --------------------------------------------------------------------

Outcome EstimatorReductions() {
  Outcome o;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unit(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 64;
    std::vector<double> g(n), xc(n), r(n);
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = gauss(rng);
      xc[i] = unit(rng);
      r[i] = std::round(3 * xc[i]) / 3;
    }
    const auto ewgs = EstimatorBackward<double>(g, xc, r, BackwardRule::Ewgs(0.0));
    const auto ste = EstimatorBackward<double>(g, xc, r, BackwardRule::Ste());
    o.Require(std::memcmp(ewgs.data(), ste.data(), n * sizeof(double)) == 0,
              "EWGS(0) differs from STE on estimator trial " + std::to_string(trial));
  }
  // Same reduction through the full quantizer backward.
  for (int trial = 0; trial < 100; ++trial) {
    auto ewgs = MakeQuantizer<double>(QuantizerKind::kEwgs, QuantTarget::kActivations, 2,
                                      BackwardRule::Ewgs(0.0));
    SetQuantizerParams(ewgs, {-1.0, 1.0});
    auto ste = ewgs;
    ste.backward = BackwardRule::Ste();
    const D x = Random({32}, rng, -1.5, 1.5);
    const D up = Random({32}, rng);
    std::vector<double> grads[2];
    for (int k = 0; k < 2; ++k) {
      D xin = x.Clone();
      xin.set_requires_grad(true);
      Tape<double> tape;
      auto y = Quantize(xin, k == 0 ? ewgs : ste);
      tape.Backward(ops::Sum(ops::Mul(y, up)));
      grads[k] = xin.GradOrZeros();
    }
    o.Require(std::memcmp(grads[0].data(), grads[1].data(), 32 * sizeof(double)) == 0,
              "EWGS(0) quantizer backward differs from STE on trial " + std::to_string(trial));
  }
  // g = 0.2, x_c - x_q = 0.1, delta = 0.5.
  const std::vector<double> g{0.2}, xc{0.35}, xq{0.25};
  const double v = EstimatorBackward<double>(g, xc, xq, BackwardRule::Ewgs(0.5))[0];
  o.Require(std::abs(v - 0.21) <= 1e-12, Fmt("worked example gave %.17g", v));
  if (o.pass) o.detail = "200 bit-identical trials; worked example " + Fmt("%.15g", v);
  return o;
}

// --- 3 --------------------------------------------------------------------

using Builder = std::function<D(const std::vector<D>&)>;

// Relative error between the tape gradient of sum(w * build(inputs)) and the
// central-difference oracle, maximized over inputs.
double OpGradError(const std::vector<D>& inputs, const Builder& build, std::mt19937_64& rng) {
  D weights;
  {
    NoGradGuard<double> guard;
    weights = Random(build(inputs).shape(), rng);
  }
  std::vector<D> live;
  for (const auto& t : inputs) {
    live.push_back(t.Clone());
    live.back().set_requires_grad(true);
  }
  {
    Tape<double> tape;
    tape.Backward(ops::Sum(ops::Mul(build(live), weights)));
  }
  double worst = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto f = [&](std::span<const double> values) {
      NoGradGuard<double> guard;
      std::vector<D> probe = inputs;
      probe[k] = D(inputs[k].shape(), std::vector<double>(values.begin(), values.end()));
      return ops::Sum(ops::Mul(build(probe), weights)).item();
    };
    const auto oracle = GradOracle(f, inputs[k].data());
    worst = std::max(worst, RelativeError(live[k].GradOrZeros(), oracle));
  }
  return worst;
}

// Uniform values kept at least `gap` away from every point in `kinks`.
D AwayFrom(Shape shape, std::mt19937_64& rng, double lo, double hi,
           const std::vector<double>& kinks, double gap = 1e-3) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(NumElements(shape));
  for (auto& x : v) {
    do {
      x = dist(rng);
    } while (std::any_of(kinks.begin(), kinks.end(),
                         [&](double k) { return std::abs(x - k) < gap; }));
  }
  return D(std::move(shape), std::move(v));
}

Outcome GradientCorrectness() {
  Outcome o;
  std::mt19937_64 rng(3);
  constexpr int kInstances = 10;
  constexpr double kTol = 1e-5;
  std::vector<std::pair<std::string, double>> worst;
  auto run = [&](const std::string& name, const std::function<std::vector<D>()>& make,
                 const Builder& build) {
    double w = 0;
    for (int i = 0; i < kInstances; ++i) w = std::max(w, OpGradError(make(), build, rng));
    worst.emplace_back(name, w);
    o.Require(w <= kTol, name + Fmt(" rel err %.3g", w));
  };

  run("matmul", [&] { return std::vector<D>{Random({3, 4}, rng), Random({4, 5}, rng)}; },
      [](const std::vector<D>& in) { return ops::MatMul(in[0], in[1]); });
  run("conv2d", [&] {
        return std::vector<D>{Random({1, 2, 5, 5}, rng), Random({3, 2, 3, 3}, rng),
                              Random({3}, rng)};
      },
      [](const std::vector<D>& in) { return ops::Conv2d(in[0], in[1], in[2], 1, 1); });
  run("conv2d_stride2", [&] {
        return std::vector<D>{Random({2, 2, 5, 5}, rng), Random({2, 2, 3, 3}, rng)};
      },
      [](const std::vector<D>& in) { return ops::Conv2d(in[0], in[1], D(), 2, 0); });
  run("add", [&] { return std::vector<D>{Random({3, 4}, rng), Random({3, 4}, rng)}; },
      [](const std::vector<D>& in) { return ops::Add(in[0], in[1]); });
  run("add_bias", [&] { return std::vector<D>{Random({3, 4}, rng), Random({4}, rng)}; },
      [](const std::vector<D>& in) { return ops::Add(in[0], in[1]); });
  run("sub", [&] { return std::vector<D>{Random({3, 4}, rng), Random({3, 4}, rng)}; },
      [](const std::vector<D>& in) { return ops::Sub(in[0], in[1]); });
  run("mul", [&] { return std::vector<D>{Random({3, 4}, rng), Random({3, 4}, rng)}; },
      [](const std::vector<D>& in) { return ops::Mul(in[0], in[1]); });
  run("scale", [&] { return std::vector<D>{Random({6}, rng)}; },
      [](const std::vector<D>& in) { return ops::Scale(in[0], 1.7); });
  run("relu", [&] { return std::vector<D>{AwayFrom({4, 5}, rng, -1, 1, {0.0})}; },
      [](const std::vector<D>& in) { return ops::Relu(in[0]); });
  run("softmax", [&] { return std::vector<D>{Random({4, 6}, rng, -3, 3)}; },
      [](const std::vector<D>& in) { return ops::Softmax(in[0]); });
  run("log_softmax", [&] { return std::vector<D>{Random({4, 6}, rng, -3, 3)}; },
      [](const std::vector<D>& in) { return ops::LogSoftmax(in[0]); });
  run("sum", [&] { return std::vector<D>{Random({3, 3}, rng)}; },
      [](const std::vector<D>& in) { return ops::Sum(in[0]); });
  run("mean", [&] { return std::vector<D>{Random({3, 3}, rng)}; },
      [](const std::vector<D>& in) { return ops::Mean(in[0]); });
  run("reshape", [&] { return std::vector<D>{Random({2, 6}, rng)}; },
      [](const std::vector<D>& in) { return ops::Reshape(in[0], {3, 4}); });
  const std::vector<int> labels{2, 0, 3, 1, 3};
  run("pick", [&] { return std::vector<D>{Random({5, 4}, rng)}; },
      [&](const std::vector<D>& in) { return ops::Pick(in[0], std::span<const int>(labels)); });
  run("ce_loss", [&] { return std::vector<D>{Random({5, 4}, rng, -3, 3)}; },
      [&](const std::vector<D>& in) { return CeLoss(in[0], std::span<const int>(labels)); });
  for (double rho : {1.0, 2.0, 4.0}) {
    const D teacher = Random({5, 4}, rng, -3, 3);
    run("kl_loss_rho" + Fmt("%g", rho), [&] { return std::vector<D>{Random({5, 4}, rng, -3, 3)}; },
        [&, rho](const std::vector<D>& in) { return KlLoss(teacher, in[0], rho); });
  }

  // Clip functions, input and parameter gradients, away from the kinks.
  for (auto kind : {QuantizerKind::kPact, QuantizerKind::kEwgs, QuantizerKind::kDorefa,
                    QuantizerKind::kLsq}) {
    for (auto target : {QuantTarget::kWeights, QuantTarget::kActivations}) {
      const auto base = SpecFor(kind, target, 3);
      std::vector<double> params;
      for (const auto& p : base.params) params.push_back(p[0]);
      std::vector<double> kinks;
      switch (kind) {
        case QuantizerKind::kPact: kinks = {-params[0], 0.0, params[0]}; break;
        case QuantizerKind::kEwgs: kinks = {params[0], params[1]}; break;
        case QuantizerKind::kDorefa: kinks = {0.0, 1.0}; break;
        case QuantizerKind::kLsq: {
          const auto [qn, qp] = LsqBounds(target, 3);
          kinks = {qn * params[0], qp * params[0]};
          break;
        }
      }
      const double radius = kind == QuantizerKind::kLsq ? 0.6 : 2.5;
      double w = 0;
      for (int i = 0; i < kInstances; ++i) {
        const D x = AwayFrom({12}, rng, -radius, radius, kinks);
        const D gc = Random({12}, rng);
        auto spec = base;
        const auto analytic = ClipBackward(x, spec, gc.data());
        auto f_input = [&](std::span<const double> v) {
          const D probe({12}, std::vector<double>(v.begin(), v.end()));
          const auto c = Clip(probe, spec);
          double s = 0;
          for (std::size_t k = 0; k < 12; ++k) s += c[k] * gc[k];
          return s;
        };
        w = std::max(w, RelativeError(analytic.input, GradOracle(f_input, x.data())));
        if (!params.empty()) {
          auto f_params = [&](std::span<const double> v) {
            auto probe_spec = base;
            SetQuantizerParams(probe_spec, std::vector<double>(v.begin(), v.end()));
            const auto c = Clip(x, probe_spec);
            double s = 0;
            for (std::size_t k = 0; k < 12; ++k) s += c[k] * gc[k];
            return s;
          };
          w = std::max(w, RelativeError(analytic.params, GradOracle(f_params, params)));
        }
      }
      const std::string name = std::string("clip_") + ToString(kind) + "_" + ToString(target);
      worst.emplace_back(name, w);
      o.Require(w <= kTol, name + Fmt(" rel err %.3g", w));
    }
  }
  if (o.pass) {
    double w = 0;
    for (const auto& [name, e] : worst) w = std::max(w, e);
    o.detail = std::to_string(worst.size()) + " gradients x " + std::to_string(kInstances) +
               " instances, worst rel err " + Fmt("%.2g", w);
  }
  return o;
}

// --- 4 --------------------------------------------------------------------

Outcome KlContract() {
  Outcome o;
  std::mt19937_64 rng(4);
  double self_worst = 0, min_kl = 1e300;
  for (int i = 0; i < 100; ++i) {
    const D h = Random({8, 10}, rng, -5, 5);
    self_worst = std::max(self_worst, std::abs(KlLoss(h, h, 4.0).item()));
  }
  o.Require(self_worst <= 1e-12, Fmt("KL(p||p) = %.3g", self_worst));
  for (int i = 0; i < 10000; ++i) {
    const D t = Random({1, 5}, rng, -6, 6);
    const D s = Random({1, 5}, rng, -6, 6);
    min_kl = std::min(min_kl, KlLoss(t, s, 1.0 + (i % 4)).item());
  }
  o.Require(min_kl >= -1e-9, Fmt("min KL %.3g", min_kl));

  D teacher = Random({6, 4}, rng, -2, 2);
  teacher.set_requires_grad(true);
  D student = Random({6, 4}, rng, -2, 2);
  student.set_requires_grad(true);
  {
    Tape<double> tape;
    tape.Backward(KlLoss(teacher, student, 4.0));
  }
  const auto tg = teacher.GradOrZeros();
  o.Require(std::all_of(tg.begin(), tg.end(), [](double v) { return v == 0.0; }),
            "teacher logits received gradient");

  const D ht({1, 2}, {1.0, 0.0}), hs({1, 2}, {0.0, 1.0});
  const double worked = KlLoss(ht, hs, 1.0).item();
  o.Require(std::abs(worked - 0.46212) <= 1e-4, Fmt("worked example %.6f", worked));
  if (o.pass) {
    o.detail = Fmt("KL(p||p) max %.2g, min KL %.2g, worked example %.5f", self_worst, min_kl,
                   worked);
  }
  return o;
}

// --- 5, 6, 7: training analogs on blobs -----------------------------------

constexpr std::size_t kBlobClasses = 8;

struct Blobs {
  Dataset train, test;
  Network teacher;
};

TrainPlan BasePlan(std::uint64_t seed, std::size_t epochs) {
  TrainPlan plan;
  plan.seed = seed;
  plan.epochs = epochs;
  plan.batch_size = 64;
  plan.initial_lr = 1e-2;
  return plan;
}

Blobs MakeBlobs(std::uint64_t seed) {
  Blobs b;
  b.train = GenerateSynthetic(SyntheticKind::kBlobs, 1200, kBlobClasses, seed);
  b.test = GenerateSynthetic(SyntheticKind::kBlobs, 1200, kBlobClasses, seed + 7919);
  TrainPlan plan = BasePlan(seed, 20);
  plan.objective = ObjectiveSpec::CeOnly();
  b.teacher = TrainTeacher(Network::Mlp(2, 32, kBlobClasses, seed), b.train, &b.test, plan)
                  .network;
  return b;
}

Network Student(std::uint64_t seed, QuantizerKind kind, int bits, BackwardRule rule) {
  Network net = Network::Mlp(2, 32, kBlobClasses, seed + 1);
  QuantizationPlan q;
  q.kind = kind;
  q.weight_bits = bits;
  q.activation_bits = bits;
  q.backward = std::move(rule);
  net.Quantize(q);
  return net;
}

Outcome LambdaSweep() {
  Outcome o;
  std::vector<double> kl_best, ce_ratio;
  std::string notes;
  for (std::uint64_t seed : {11, 12, 13}) {
    const Blobs b = MakeBlobs(seed);
    const std::vector<double> lambdas{0.0, 0.5, 1.0};
    const auto runs = SweepLambda(b.teacher,
                                  Student(seed, QuantizerKind::kEwgs, 1, BackwardRule::Ewgs(0.01)),
                                  b.train, &b.test, lambdas, BasePlan(seed, 20), 1);
    std::vector<double> kl, ce;
    for (const auto& r : runs) {
      kl.push_back(r.record.final_kl_loss());
      ce.push_back(r.record.final_ce_loss());
    }
    kl_best.push_back(kl[2] < kl[0] && kl[2] < kl[1] ? 1.0 : 0.0);
    ce_ratio.push_back(ce[2] / ce[0]);
    notes += Fmt(" [KL %.4f/%.4f/", kl[0], kl[1]) + Fmt("%.4f CE %.4f/", kl[2], ce[0]) +
             Fmt("%.4f/%.4f]", ce[1], ce[2]);
  }
  const double kl_med = Median(kl_best), ratio_med = Median(ce_ratio);
  o.Require(kl_med == 1.0, "lambda=1 does not attain the lowest KL in the median seed");
  o.Require(ratio_med <= 1.5, Fmt("median CE ratio %.3f > 1.5", ratio_med));
  o.detail = (o.pass ? "" : o.detail + ";") + Fmt(" median CE(1)/CE(0) %.3f;", ratio_med) +
             notes;
  return o;
}

Outcome SqakdImprovement() {
  Outcome o;
  std::vector<double> kd, ce;
  for (std::uint64_t seed : {21, 22, 23}) {
    const Blobs b = MakeBlobs(seed);
    const Network student = Student(seed, QuantizerKind::kEwgs, 2, BackwardRule::Ewgs(0.01));
    TrainPlan plan = BasePlan(seed, 20);
    plan.objective = ObjectiveSpec::KlOnly();
    kd.push_back(*TrainStudent(&b.teacher, student.Clone(), b.train, &b.test, plan)
                      .record.final_test_accuracy());
    plan.objective = ObjectiveSpec::CeOnly();
    ce.push_back(*TrainStudent(&b.teacher, student.Clone(), b.train, &b.test, plan)
                      .record.final_test_accuracy());
  }
  const double m_kd = Median(kd), m_ce = Median(ce);
  o.Require(m_kd >= m_ce, "SQAKD median below CE-only median");
  o.detail = (o.pass ? "" : o.detail + ";") +
             Fmt(" median acc SQAKD %.4f vs CE-only %.4f", m_kd, m_ce);
  return o;
}

Outcome InitAblation() {
  Outcome o;
  std::vector<double> from_teacher, random;
  for (std::uint64_t seed : {31, 32, 33}) {
    const Blobs b = MakeBlobs(seed);
    const Network student = Student(seed, QuantizerKind::kEwgs, 2, BackwardRule::Ewgs(0.01));
    TrainPlan plan = BasePlan(seed, 20);
    plan.objective = ObjectiveSpec::KlOnly();
    plan.init = InitKind::kFromTeacher;
    from_teacher.push_back(*TrainStudent(&b.teacher, student.Clone(), b.train, &b.test, plan)
                                .record.final_test_accuracy());
    plan.init = InitKind::kRandom;
    random.push_back(*TrainStudent(&b.teacher, student.Clone(), b.train, &b.test, plan)
                          .record.final_test_accuracy());
  }
  const double m_t = Median(from_teacher), m_r = Median(random);
  o.Require(m_t >= m_r, "teacher init median below random init median");
  o.detail = (o.pass ? "" : o.detail + ";") +
             Fmt(" median acc teacher-init %.4f vs random-init %.4f", m_t, m_r);
  return o;
}

// --- 8 --------------------------------------------------------------------

Outcome Decoupling() {
  Outcome o;
  const std::uint64_t seed = 41;
  const Blobs b = MakeBlobs(seed);
  std::string notes;
  for (auto kind : {QuantizerKind::kPact, QuantizerKind::kEwgs}) {
    for (bool ewgs_backward : {false, true}) {
      const auto rule = ewgs_backward ? BackwardRule::Ewgs(0.01) : BackwardRule::Ste();
      const std::string tag = std::string(ToString(kind)) + "+" + (ewgs_backward ? "ewgs" : "ste");
      TrainPlan plan = BasePlan(seed, 10);
      plan.objective = ObjectiveSpec::KlOnly();
      try {
        const auto r = TrainStudent(&b.teacher, Student(seed, kind, 2, rule), b.train, &b.test,
                                    plan);
        const std::size_t expected = IterationsPerEpoch(b.train.size(), plan.batch_size) * 10;
        bool finite = true;
        for (const auto& row : r.record.iterations) {
          finite = finite && std::isfinite(row.kl_loss) && std::isfinite(row.total_loss) &&
                   std::isfinite(row.ce_loss);
        }
        o.Require(r.record.iterations.size() == expected && r.record.epochs.size() == 10,
                  tag + " incomplete record");
        o.Require(finite, tag + " has non-finite losses");
        notes += " " + tag + Fmt(" acc %.3f", *r.record.final_test_accuracy());
      } catch (const Error& e) {
        o.Require(false, tag + " raised: " + e.what());
      }
    }
  }
  if (o.pass) o.detail = "4 runs x 10 epochs complete;" + notes;
  return o;
}

// --- 9 --------------------------------------------------------------------

Outcome SelfSupervision() {
  Outcome o;
  const std::uint64_t seed = 51;
  const Blobs b = MakeBlobs(seed);
  const Dataset unlabeled = b.train.WithoutLabels();
  o.Require(!unlabeled.has_labels(), "labels still present");
  TrainPlan plan = BasePlan(seed, 3);
  plan.objective = ObjectiveSpec::KlOnly();
  const auto student = Student(seed, QuantizerKind::kEwgs, 2, BackwardRule::Ewgs(0.01));
  try {
    const auto r = TrainStudent(&b.teacher, student.Clone(), unlabeled, &b.test, plan);
    o.Require(!r.record.iterations.empty(), "sqakd produced no iterations");
  } catch (const Error& e) {
    o.Require(false, std::string("sqakd failed without labels: ") + e.what());
  }
  plan.objective = ObjectiveSpec::CeOnly();
  bool missing_labels = false;
  try {
    TrainStudent(&b.teacher, student.Clone(), unlabeled, &b.test, plan);
  } catch (const DataError& e) {
    missing_labels = e.fault() == DataFault::kMissingLabels;
  }
  o.Require(missing_labels, "ce on a labels-free loader did not raise missing-labels");
  if (o.pass) o.detail = "sqakd trains without labels; ce raises missing-labels";
  return o;
}

// --- 10 -------------------------------------------------------------------

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool BitEqual(const Tensor<float>& a, const Tensor<float>& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

Outcome Persistence() {
  Outcome o;
  const fs::path root = Scratch("persistence");
  ExperimentConfig cfg;
  cfg.dataset = "blobs";
  cfg.classes = 8;
  cfg.n_train = 800;
  cfg.n_test = 400;
  cfg.epochs = 4;
  cfg.lr = 1e-2;
  cfg.seed = 61;
  cfg.method = "ce";
  cfg.output_dir = (root / "teacher").string();
  const std::string teacher = RunTrainFp(cfg);

  cfg.method = "sqakd";
  std::string ckpt;
  for (const char* run : {"a", "b"}) {
    cfg.output_dir = (root / run).string();
    ckpt = RunTrainQat(cfg, teacher);
  }
  const std::string csv_a = Slurp(root / "a" / "metrics.csv");
  o.Require(!csv_a.empty() && csv_a == Slurp(root / "b" / "metrics.csv"),
            "metrics CSVs differ between identical runs");

  const Checkpoint loaded = LoadCheckpoint(ckpt);
  SaveCheckpoint(loaded, (root / "resaved").string());
  const Checkpoint again = LoadCheckpoint((root / "resaved").string());
  bool exact = loaded.network.layers().size() == again.network.layers().size();
  for (std::size_t i = 0; exact && i < loaded.network.layers().size(); ++i) {
    const auto& x = loaded.network.layers()[i];
    const auto& y = again.network.layers()[i];
    if (!x.parametric()) continue;
    exact = BitEqual(x.weight, y.weight) && BitEqual(x.bias, y.bias);
    for (auto q : {&Layer::weight_quantizer, &Layer::activation_quantizer}) {
      if (!(x.*q)) continue;
      for (std::size_t k = 0; exact && k < (x.*q)->params.size(); ++k) {
        exact = BitEqual((x.*q)->params[k], (y.*q)->params[k]);
      }
    }
  }
  for (const auto& entry : fs::directory_iterator(ckpt)) {
    if (entry.path().extension() != ".bin") continue;
    exact = exact && Slurp(entry.path()) ==
                         Slurp(root / "resaved" / entry.path().filename());
  }
  o.Require(exact, "checkpoint round trip is not bit-exact");

  cfg.output_dir = (root / "eval_src").string();
  const double src = RunEval(cfg, ckpt, true);
  const std::string exported = RunExportQuantized(ckpt, (root / "export").string());
  cfg.output_dir = (root / "eval_exp").string();
  const double exp = RunEval(cfg, exported, true);
  o.Require(src == exp, Fmt("export-then-eval %.6f vs source %.6f", exp, src));
  if (o.pass) {
    o.detail = "byte-identical CSVs, bit-exact round trip, export eval " + Fmt("%.4f", exp) +
               " == source " + Fmt("%.4f", src);
  }
  return o;
}

// --- 11 -------------------------------------------------------------------

Outcome Landscape() {
  Outcome o;
  // Quadratic toy: f = ||theta||^2 at theta = 0 with orthogonal directions.
  std::mt19937_64 rng(71);
  std::normal_distribution<double> gauss;
  const std::size_t n = 20;
  std::vector<double> theta(n, 0.0), d1(n), d2(n);
  for (auto& v : d1) v = gauss(rng);
  for (auto& v : d2) v = gauss(rng);
  double dot = 0, n1 = 0;
  for (std::size_t k = 0; k < n; ++k) {
    dot += d1[k] * d2[k];
    n1 += d1[k] * d1[k];
  }
  for (std::size_t k = 0; k < n; ++k) d2[k] -= dot / n1 * d1[k];
  double n2 = 0;
  for (const double v : d2) n2 += v * v;
  auto quadratic = [](std::span<const double> p) {
    double s = 0;
    for (const double v : p) s += v * v;
    return s;
  };
  SliceConfig cfg{1.5, 11, 0};
  const auto toy = SliceGrid(quadratic, theta, d1, d2, cfg);
  double toy_err = 0;
  for (std::size_t i = 0; i < cfg.resolution; ++i) {
    for (std::size_t j = 0; j < cfg.resolution; ++j) {
      const double u = toy.coords[i], v = toy.coords[j];
      toy_err = std::max(toy_err, std::abs(toy.loss[i][j] - (u * u * n1 + v * v * n2)));
    }
  }
  o.Require(toy_err <= 1e-6, Fmt("quadratic toy error %.3g", toy_err));

  // Trained checkpoint.
  const std::uint64_t seed = 72;
  const Blobs b = MakeBlobs(seed);
  TrainPlan plan = BasePlan(seed, 5);
  plan.objective = ObjectiveSpec::KlOnly();
  const Network student =
      TrainStudent(&b.teacher, Student(seed, QuantizerKind::kEwgs, 2, BackwardRule::Ewgs(0.01)),
                   b.train, &b.test, plan)
          .network;
  const ObjectiveSpec objective = ObjectiveSpec::KlOnly();
  const double reference = DatasetLoss(student, &b.teacher, b.train, objective, true);

  const auto flat = ExportLandscape(student, &b.teacher, b.train, objective, true, {0.0, 3, 5});
  double flat_err = 0;
  for (const auto& row : flat.loss) {
    for (const double v : row) flat_err = std::max(flat_err, std::abs(v - reference));
  }
  o.Require(flat.flagged.empty() && flat_err <= 1e-6, Fmt("zero-extent slice error %.3g", flat_err));

  const auto slice = ExportLandscape(student, &b.teacher, b.train, objective, true, {0.5, 7, 6});
  const double center = slice.loss[3][3];
  o.Require(std::abs(center - reference) <= 1e-6,
            Fmt("center %.9f vs eval-time loss %.9f", center, reference));
  const auto again = ExportLandscape(student, &b.teacher, b.train, objective, true, {0.5, 7, 6});
  bool same = true;
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 7; ++j) {
      same = same && std::bit_cast<std::uint64_t>(slice.loss[i][j]) ==
                         std::bit_cast<std::uint64_t>(again.loss[i][j]);
    }
  }
  o.Require(same, "landscape export is not deterministic");
  if (o.pass) {
    o.detail = Fmt("toy err %.2g, zero-extent err %.2g, center err %.2g", toy_err, flat_err,
                   std::abs(center - reference));
  }
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  Outcome (*run)();
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "quantization level structure", 10, LevelStructure},
      {2, "estimator reductions", 0, EstimatorReductions},
      {3, "gradient correctness", 60, GradientCorrectness},
      {4, "KL contract", 0, KlContract},
      {5, "lambda-sweep loss analysis", 300, LambdaSweep},
      {6, "SQAKD improvement over CE-only", 600, SqakdImprovement},
      {7, "teacher vs random initialization", 600, InitAblation},
      {8, "forward/backward decoupling", 300, Decoupling},
      {9, "self-supervision without labels", 0, SelfSupervision},
      {10, "determinism and persistence", 0, Persistence},
      {11, "landscape export", 0, Landscape},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome.pass = false;
      outcome.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_seconds > 0 && secs > c.budget_seconds) {
      outcome.pass = false;
      outcome.detail += Fmt("; runtime %.1fs over budget %.0fs", secs, c.budget_seconds);
    }
    std::printf("[%s] criterion %d: %s (%.1fs) %s\n", outcome.pass ? "PASS" : "FAIL", c.id,
                c.name, secs, outcome.detail.c_str());
    std::fflush(stdout);
    failures += !outcome.pass;
  }
  return failures == 0 ? 0 : 1;
}

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

#include "sqakd/training.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <thread>

#include "sqakd/ops.hpp"

namespace sqakd {

OptimizerKind ParseOptimizerKind(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + name + "'");
}

InitKind ParseInitKind(const std::string& name) {
  if (name == "teacher") return InitKind::kFromTeacher;
  if (name == "random") return InitKind::kRandom;
  throw ConfigError("unknown init scheme '" + name + "'");
}

void TrainPlan::Validate() const {
  objective.Validate();
  if (epochs < 1 && epochs != 0) throw ConfigError("epochs must be >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(initial_lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
}

std::size_t IterationsPerEpoch(std::size_t dataset_size, std::size_t batch_size) {
  return (dataset_size + batch_size - 1) / batch_size;
}

double LrAt(std::size_t iter, std::size_t total_iters, const TrainPlan& plan) {
  const double base = plan.initial_lr;
  if (iter < plan.warmup_iters) {
    return base * static_cast<double>(iter) / static_cast<double>(plan.warmup_iters);
  }
  if (total_iters == 0 || total_iters - 1 <= plan.warmup_iters) return base;
  const double span = static_cast<double>(total_iters - 1 - plan.warmup_iters);
  const double t = std::min(static_cast<double>(iter - plan.warmup_iters), span);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * t / span));
}

namespace {

void AppendNumber(std::string& line, double value) {
  if (std::isnan(value)) return;
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  line.append(buf, end);
}

double MeanIgnoringNan(const std::vector<IterationRecord>& rows, std::size_t epoch,
                       double IterationRecord::*field) {
  double total = 0;
  std::size_t count = 0;
  for (const auto& row : rows) {
    if (row.epoch != epoch || std::isnan(row.*field)) continue;
    total += row.*field;
    ++count;
  }
  return count ? total / static_cast<double>(count)
               : std::numeric_limits<double>::quiet_NaN();
}

class Optimizer {
 public:
  Optimizer(const TrainPlan& plan, const std::vector<Tensor<float>>& decayed,
            const std::vector<Tensor<float>>& undecayed)
      : plan_(plan) {
    for (const auto& p : decayed) slots_.push_back({p, true, {}, {}});
    for (const auto& p : undecayed) slots_.push_back({p, false, {}, {}});
    for (auto& s : slots_) {
      s.m.assign(s.param.size(), 0.0);
      s.v.assign(s.param.size(), 0.0);
    }
  }

  double GlobalGradNorm() const {
    double sq = 0;
    for (const auto& s : slots_) {
      for (const float g : s.param.grad()) sq += static_cast<double>(g) * g;
    }
    return std::sqrt(sq);
  }

  void ClipGradNorm(double max_norm) {
    if (max_norm <= 0) return;
    const double norm = GlobalGradNorm();
    if (!(norm > max_norm)) return;
    const float factor = static_cast<float>(max_norm / norm);
    for (auto& s : slots_) {
      if (!s.param.has_grad()) continue;
      for (float& g : s.param.mutable_grad()) g *= factor;
    }
  }

  void Step(double lr) {
    ++step_;
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step_));
    for (auto& s : slots_) {
      if (!s.param.has_grad()) continue;
      auto p = s.param.mutable_data();
      const auto grad = s.param.grad();
      const double wd = s.decay ? plan_.weight_decay : 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = static_cast<double>(grad[i]) + wd * p[i];
        double update;
        if (plan_.optimizer == OptimizerKind::kAdam) {
          s.m[i] = kBeta1 * s.m[i] + (1 - kBeta1) * g;
          s.v[i] = kBeta2 * s.v[i] + (1 - kBeta2) * g * g;
          update = (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + kEps);
        } else {
          s.m[i] = plan_.momentum * s.m[i] + g;
          update = s.m[i];
        }
        p[i] = static_cast<float>(p[i] - lr * update);
      }
    }
  }

  void ZeroGrad() {
    for (auto& s : slots_) s.param.ZeroGrad();
  }

 private:
  struct Slot {
    Tensor<float> param;
    bool decay;
    std::vector<double> m, v;
  };
  const TrainPlan& plan_;
  std::vector<Slot> slots_;
  std::size_t step_ = 0;
};

std::string GradientReport(const Network& net) {
  std::string report;
  const auto& layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!layers[i].parametric()) continue;
    double sq = 0;
    for (const float g : layers[i].weight.grad()) sq += static_cast<double>(g) * g;
    report += " layer" + std::to_string(i) + "|grad|=" + std::to_string(std::sqrt(sq));
  }
  return report;
}

bool GradientsFinite(const std::vector<Tensor<float>>& params) {
  for (const auto& p : params) {
    for (const float g : p.grad()) {
      if (!std::isfinite(g)) return false;
    }
  }
  return true;
}

// Shared loop for teacher and student training.
TrainResult RunTraining(const Network* teacher, Network net, bool quantized,
                        const Dataset& train, const Dataset* test,
                        const TrainPlan& plan) {
  plan.Validate();
  const auto started = std::chrono::steady_clock::now();
  const std::size_t n = train.size();
  if (n == 0) throw DataError(DataFault::kEmpty, "training set is empty");
  const ObjectiveSpec& objective = plan.objective;
  if (objective.needs_labels() && !train.has_labels()) {
    throw DataError(DataFault::kMissingLabels,
                    std::string("objective '") + ToString(objective.mode) +
                        "' requires labels but the training loader has none");
  }
  if (objective.needs_teacher() && teacher == nullptr) {
    throw MissingTeacherError("objective requires a teacher network");
  }

  net.SetRequiresGrad(true);
  const std::uint64_t teacher_hash = teacher ? teacher->ParameterHash() : 0;
  const std::size_t per_epoch = IterationsPerEpoch(n, plan.batch_size);
  const std::size_t total = per_epoch * plan.epochs;
  std::mt19937_64 shuffle_rng(plan.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(n);

  TrainResult result;
  std::size_t iter = 0;
  std::unique_ptr<Optimizer> optimizer;

  for (std::size_t epoch = 0; epoch < plan.epochs; ++epoch) {
    Network last_good = net.Clone();
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    for (std::size_t start = 0; start < n; start += plan.batch_size, ++iter) {
      const std::span<const std::size_t> idx(order.data() + start,
                                             std::min(plan.batch_size, n - start));
      const Tensor<float> x = train.Batch(idx);
      if (quantized && net.has_quantizers() && !net.quantizers_initialized()) {
        net.CalibrateQuantizers(x, plan.quantizer_init);
      }
      if (!optimizer) {
        optimizer = std::make_unique<Optimizer>(plan, net.Parameters(),
                                                net.QuantizerParameters());
      }
      std::optional<std::vector<int>> labels;
      if (train.has_labels()) labels = train.BatchLabels(idx);

      IterationRecord row;
      row.iter = iter;
      row.epoch = epoch;
      row.lr = LrAt(iter, total, plan);
      try {
        Tensor<float> teacher_logits;
        if (teacher) {
          NoGradGuard<float> guard;
          teacher_logits = teacher->Forward(x, false);
        }
        Tape<float> tape;
        const Tensor<float> logits = net.Forward(x, quantized);
        Tensor<float> ce, kl;
        if (labels) ce = CeLoss(logits, std::span<const int>(*labels));
        if (teacher) {
          kl = KlLoss(teacher_logits, logits, static_cast<float>(objective.temperature));
        }
        const Tensor<float> loss = MixLosses(ce, kl, objective);
        row.ce_loss = ce.defined() ? ce.item() : std::numeric_limits<double>::quiet_NaN();
        row.kl_loss = kl.defined() ? kl.item() : std::numeric_limits<double>::quiet_NaN();
        row.total_loss = loss.item();
        tape.Backward(loss);
      } catch (const NumericError& e) {
        throw DivergenceError("diverged at iteration " + std::to_string(iter) +
                                  " (epoch " + std::to_string(epoch) + "): " + e.what() +
                                  ";" + GradientReport(net),
                              std::move(last_good));
      }

      auto trainable = net.Parameters();
      const auto qparams = net.QuantizerParameters();
      trainable.insert(trainable.end(), qparams.begin(), qparams.end());
      if (!GradientsFinite(trainable)) {
        throw DivergenceError("non-finite gradient at iteration " + std::to_string(iter) +
                                  " (epoch " + std::to_string(epoch) + ");" +
                                  GradientReport(net),
                              std::move(last_good));
      }
      optimizer->ClipGradNorm(plan.grad_clip_norm);
      optimizer->Step(row.lr);
      optimizer->ZeroGrad();
      result.record.iterations.push_back(row);
    }

    if (teacher && teacher->ParameterHash() != teacher_hash) {
      throw Error(ErrorKind::kInternal, "teacher parameters changed during training");
    }
    EpochRecord epoch_row;
    epoch_row.epoch = epoch;
    if (train.has_labels()) epoch_row.train_acc = Evaluate(net, quantized, train);
    if (test) {
      epoch_row.test_acc = Evaluate(net, quantized, *test);
      if (!result.record.iterations.empty()) {
        result.record.iterations.back().test_acc = epoch_row.test_acc;
      }
    }
    result.record.epochs.push_back(epoch_row);
  }

  result.network = std::move(net);
  result.record.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace

void RunRecord::WriteCsv(std::ostream& out) const {
  out << "iter,epoch,ce_loss,kl_loss,total_loss,lr,test_acc\n";
  std::string line;
  for (const auto& row : iterations) {
    line = std::to_string(row.iter) + "," + std::to_string(row.epoch) + ",";
    AppendNumber(line, row.ce_loss);
    line += ",";
    AppendNumber(line, row.kl_loss);
    line += ",";
    AppendNumber(line, row.total_loss);
    line += ",";
    AppendNumber(line, row.lr);
    line += ",";
    if (row.test_acc) AppendNumber(line, *row.test_acc);
    out << line << "\n";
  }
}

void RunRecord::WriteCsv(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IOError("cannot write metrics to " + path);
  WriteCsv(out);
  if (!out) throw IOError("short write to " + path);
}

std::optional<double> RunRecord::final_test_accuracy() const {
  if (epochs.empty()) return std::nullopt;
  return epochs.back().test_acc;
}

double RunRecord::final_ce_loss() const {
  if (iterations.empty()) return std::numeric_limits<double>::quiet_NaN();
  return MeanIgnoringNan(iterations, iterations.back().epoch, &IterationRecord::ce_loss);
}

double RunRecord::final_kl_loss() const {
  if (iterations.empty()) return std::numeric_limits<double>::quiet_NaN();
  return MeanIgnoringNan(iterations, iterations.back().epoch, &IterationRecord::kl_loss);
}

double Evaluate(const Network& net, bool quantized, const Dataset& data) {
  const std::size_t n = data.size();
  if (n == 0) throw DataError(DataFault::kEmpty, "cannot evaluate on an empty dataset");
  if (!data.has_labels()) {
    throw DataError(DataFault::kMissingLabels, "evaluation requires labels");
  }
  NoGradGuard<float> guard;
  constexpr std::size_t kChunk = 512;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += kChunk) {
    idx.resize(std::min(kChunk, n - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto logits = net.Forward(data.Batch(idx), quantized);
    const std::size_t classes = logits.dim(1);
    const auto values = logits.data();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto row = values.subspan(i * classes, classes);
      const auto best = std::max_element(row.begin(), row.end()) - row.begin();
      correct += static_cast<int>(best) == (*data.labels)[idx[i]];
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

TrainResult TrainTeacher(Network net, const Dataset& train, const Dataset* test,
                         const TrainPlan& plan) {
  if (net.has_quantizers()) {
    throw ConfigError("a full-precision teacher must not carry quantizers");
  }
  if (plan.objective.mode != ObjectiveMode::kCeOnly) {
    throw ConfigError("teacher training uses the CE-only objective");
  }
  return RunTraining(nullptr, std::move(net), false, train, test, plan);
}

TrainResult TrainStudent(const Network* teacher, Network student,
                         const Dataset& train, const Dataset* test,
                         const TrainPlan& plan) {
  if (teacher) {
    if (teacher->has_quantizers()) {
      throw ConfigError("the teacher network must be full precision");
    }
    if (!teacher->SameTopology(student)) {
      throw ConfigError("teacher and student topologies differ");
    }
  }
  if (plan.init == InitKind::kFromTeacher) {
    if (!teacher) throw MissingTeacherError("init 'teacher' requires a teacher checkpoint");
    student.CopyWeightsFrom(*teacher);
  }
  return RunTraining(teacher, std::move(student), true, train, test, plan);
}

std::vector<TrainResult> SweepLambda(const Network& teacher, const Network& student,
                                     const Dataset& train, const Dataset* test,
                                     std::span<const double> lambdas,
                                     const TrainPlan& plan, std::size_t threads) {
  for (const double lambda : lambdas) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
      throw ConfigError("lambda values must lie in [0, 1]");
    }
  }
  std::vector<std::optional<TrainResult>> results(lambdas.size());
  std::vector<std::exception_ptr> errors(lambdas.size());
  auto run_arm = [&](std::size_t i) {
    try {
      TrainPlan arm = plan;
      arm.objective = ObjectiveSpec::FromLambda(lambdas[i], plan.objective.temperature);
      results[i] = TrainStudent(&teacher, student.Clone(), train, test, arm);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, lambdas.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < lambdas.size(); ++i) run_arm(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < lambdas.size(); i = next++) run_arm(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  std::vector<TrainResult> out;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    out.push_back(std::move(*results[i]));
  }
  return out;
}

}  // namespace sqakd

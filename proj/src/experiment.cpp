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

#include "sqakd/experiment.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"

namespace sqakd {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// splitmix64 finalizer; decorrelates the streams derived from one seed.
std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

enum : std::uint64_t { kTrainStream, kTestStream, kModelStream, kDirectionStream };

template <typename V>
std::function<void(const json&)> Bind(V& field) {
  return [&field](const json& value) { field = value.get<V>(); };
}

std::map<std::string, std::function<void(const json&)>> Fields(ExperimentConfig& c) {
  return {
      {"dataset", Bind(c.dataset)},
      {"n_train", Bind(c.n_train)},
      {"n_test", Bind(c.n_test)},
      {"classes", Bind(c.classes)},
      {"moons_noise", Bind(c.moons_noise)},
      {"idx_train_images", Bind(c.idx_train_images)},
      {"idx_train_labels", Bind(c.idx_train_labels)},
      {"idx_test_images", Bind(c.idx_test_images)},
      {"idx_test_labels", Bind(c.idx_test_labels)},
      {"train_labels", Bind(c.train_labels)},
      {"model", Bind(c.model)},
      {"hidden", Bind(c.hidden)},
      {"quantizer", Bind(c.quantizer)},
      {"backward", Bind(c.backward)},
      {"delta", Bind(c.delta)},
      {"weight_bits", Bind(c.weight_bits)},
      {"activation_bits", Bind(c.activation_bits)},
      {"quantize_first_last", Bind(c.quantize_first_last)},
      {"pact_activation_clip", Bind(c.pact_activation_clip)},
      {"method", Bind(c.method)},
      {"lambda", Bind(c.lambda)},
      {"temperature", Bind(c.temperature)},
      {"optimizer", Bind(c.optimizer)},
      {"lr", Bind(c.lr)},
      {"weight_decay", Bind(c.weight_decay)},
      {"momentum", Bind(c.momentum)},
      {"epochs", Bind(c.epochs)},
      {"batch_size", Bind(c.batch_size)},
      {"warmup_iters", Bind(c.warmup_iters)},
      {"grad_clip_norm", Bind(c.grad_clip_norm)},
      {"init", Bind(c.init)},
      {"landscape_extent", Bind(c.landscape_extent)},
      {"landscape_resolution", Bind(c.landscape_resolution)},
      {"seed", Bind(c.seed)},
      {"output_dir", Bind(c.output_dir)},
  };
}

void WriteRunManifest(const ExperimentConfig& config, const std::string& command,
                      json artifacts, json results, double seconds) {
  const json manifest = {{"command", command},
                         {"config", json::parse(ConfigToJson(config))},
                         {"artifacts", std::move(artifacts)},
                         {"results", std::move(results)},
                         {"wall_clock_seconds", seconds}};
  std::ofstream out(fs::path(config.output_dir) / "run.json", std::ios::trunc);
  if (!out) throw IOError("cannot write run.json in " + config.output_dir);
  out << manifest.dump(2) << "\n";
}

void EnsureDir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IOError("cannot create " + dir + ": " + ec.message());
}

Checkpoint LoadTeacher(const std::string& dir) {
  if (!fs::exists(fs::path(dir) / "manifest.json")) {
    throw MissingTeacherError("no teacher checkpoint at " + dir);
  }
  return LoadCheckpoint(dir);
}

json Optional(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json Nullable(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

json Summary(const RunRecord& record) {
  return {{"final_test_acc", Optional(record.final_test_accuracy())},
          {"final_ce_loss", Nullable(record.final_ce_loss())},
          {"final_kl_loss", Nullable(record.final_kl_loss())},
          {"iterations", record.iterations.size()}};
}

std::string LambdaTag(double lambda) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), lambda);
  return std::string(buf, end);
}

}  // namespace

ObjectiveSpec ExperimentConfig::Objective() const {
  if (method == "ce") return ObjectiveSpec::CeOnly();
  if (method == "sqakd") return ObjectiveSpec::KlOnly(temperature);
  if (method == "mixed") return ObjectiveSpec::FromLambda(lambda, temperature);
  throw ConfigError("unknown method '" + method + "' (expected ce, sqakd or mixed)");
}

TrainPlan ExperimentConfig::Plan() const {
  TrainPlan plan;
  plan.objective = Objective();
  plan.optimizer = ParseOptimizerKind(optimizer);
  plan.initial_lr = lr;
  plan.weight_decay = weight_decay;
  plan.momentum = momentum;
  plan.epochs = epochs;
  plan.batch_size = batch_size;
  plan.warmup_iters = warmup_iters;
  plan.seed = seed;
  plan.init = ParseInitKind(init);
  plan.grad_clip_norm = grad_clip_norm;
  plan.quantizer_init.pact_activation_clip = pact_activation_clip;
  return plan;
}

QuantizationPlan ExperimentConfig::Quantization() const {
  QuantizationPlan plan;
  plan.kind = ParseQuantizerKind(quantizer);
  plan.weight_bits = weight_bits;
  plan.activation_bits = activation_bits;
  const BackwardKind kind = ParseBackwardKind(backward);
  if (kind == BackwardKind::kCustom) {
    throw ConfigError("custom backward rules are not available from a config file");
  }
  plan.backward = kind == BackwardKind::kEwgs ? BackwardRule::Ewgs(delta) : BackwardRule::Ste();
  plan.backward.Validate();
  plan.quantize_first_last = quantize_first_last;
  return plan;
}

void ExperimentConfig::Validate() const {
  if (dataset != "blobs" && dataset != "moons" && dataset != "idx") {
    throw ConfigError("unknown dataset '" + dataset + "'");
  }
  if (dataset == "idx" && idx_train_images.empty()) {
    throw ConfigError("dataset 'idx' needs idx_train_images");
  }
  if (dataset != "idx") {
    if (classes < 2) throw ConfigError("classes must be at least 2");
    if (dataset == "moons" && classes != 2) throw ConfigError("moons has exactly 2 classes");
    if (n_train < classes || n_test < classes) {
      throw ConfigError("n_train and n_test must be at least the class count");
    }
  }
  if (model != "mlp" && model != "cnn") throw ConfigError("unknown model '" + model + "'");
  if (model == "mlp" && hidden == 0) throw ConfigError("hidden must be positive");
  for (const int bits : {weight_bits, activation_bits}) {
    if (bits < 1 || (bits > 8 && bits != 32)) {
      throw ConfigError("bit widths must be in [1, 8], or 32 for full precision");
    }
  }
  if (!(pact_activation_clip > 0)) throw ConfigError("pact_activation_clip must be positive");
  if (landscape_resolution == 0) throw ConfigError("landscape_resolution must be positive");
  if (!(landscape_extent >= 0)) throw ConfigError("landscape_extent must be non-negative");
  ParseQuantizerKind(quantizer);
  Quantization();
  Plan().Validate();
}

ExperimentConfig ParseConfig(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  if (!doc.contains("schema_version")) throw ConfigError("config lacks schema_version");
  ExperimentConfig config;
  auto fields = Fields(config);
  for (const auto& [key, value] : doc.items()) {
    if (key == "schema_version") {
      if (!value.is_number_integer() || value.get<int>() != kConfigSchemaVersion) {
        throw ConfigError("unsupported schema_version " + value.dump());
      }
      continue;
    }
    const auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("unknown config key '" + key + "'");
    try {
      it->second(value);
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + key + "' has the wrong type: " + e.what());
    }
  }
  config.Validate();
  return config;
}

ExperimentConfig LoadConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return ParseConfig(buffer.str());
}

std::string ConfigToJson(const ExperimentConfig& c) {
  const json doc = {{"schema_version", kConfigSchemaVersion},
                    {"dataset", c.dataset},
                    {"n_train", c.n_train},
                    {"n_test", c.n_test},
                    {"classes", c.classes},
                    {"moons_noise", c.moons_noise},
                    {"idx_train_images", c.idx_train_images},
                    {"idx_train_labels", c.idx_train_labels},
                    {"idx_test_images", c.idx_test_images},
                    {"idx_test_labels", c.idx_test_labels},
                    {"train_labels", c.train_labels},
                    {"model", c.model},
                    {"hidden", c.hidden},
                    {"quantizer", c.quantizer},
                    {"backward", c.backward},
                    {"delta", c.delta},
                    {"weight_bits", c.weight_bits},
                    {"activation_bits", c.activation_bits},
                    {"quantize_first_last", c.quantize_first_last},
                    {"pact_activation_clip", c.pact_activation_clip},
                    {"method", c.method},
                    {"lambda", c.lambda},
                    {"temperature", c.temperature},
                    {"optimizer", c.optimizer},
                    {"lr", c.lr},
                    {"weight_decay", c.weight_decay},
                    {"momentum", c.momentum},
                    {"epochs", c.epochs},
                    {"batch_size", c.batch_size},
                    {"warmup_iters", c.warmup_iters},
                    {"grad_clip_norm", c.grad_clip_norm},
                    {"init", c.init},
                    {"landscape_extent", c.landscape_extent},
                    {"landscape_resolution", c.landscape_resolution},
                    {"seed", c.seed},
                    {"output_dir", c.output_dir}};
  return doc.dump(2);
}

ExperimentData LoadExperimentData(const ExperimentConfig& config) {
  ExperimentData data;
  if (config.dataset == "idx") {
    data.train = LoadIdx(config.idx_train_images, config.idx_train_labels);
    data.test = config.idx_test_images.empty()
                    ? data.train
                    : LoadIdx(config.idx_test_images, config.idx_test_labels);
  } else {
    const auto kind = config.dataset == "blobs" ? SyntheticKind::kBlobs : SyntheticKind::kMoons;
    data.train = GenerateSynthetic(kind, config.n_train, config.classes,
                                   DeriveSeed(config.seed, kTrainStream), config.moons_noise);
    data.test = GenerateSynthetic(kind, config.n_test, config.classes,
                                  DeriveSeed(config.seed, kTestStream), config.moons_noise);
  }
  if (!config.train_labels) data.train = data.train.WithoutLabels();
  return data;
}

Network BuildNetwork(const ExperimentConfig& config, const Dataset& data) {
  const std::uint64_t seed = DeriveSeed(config.seed, kModelStream);
  std::size_t classes = data.num_classes;
  if (classes == 0) classes = config.classes;
  if (config.model == "mlp") {
    return Network::Mlp(data.sample_size(), config.hidden, classes, seed);
  }
  const Shape& s = data.sample_shape;
  if (s.size() != 3) {
    throw ConfigError("model 'cnn' needs [C,H,W] samples, dataset has " + ShapeToString(s));
  }
  return Network::Cnn(s[0], s[1], s[2], classes, seed);
}

std::string RunTrainFp(const ExperimentConfig& config) {
  ExperimentData data = LoadExperimentData(config);
  TrainPlan plan = config.Plan();
  plan.objective = ObjectiveSpec::CeOnly();
  TrainResult result = TrainTeacher(BuildNetwork(config, data.train), data.train, &data.test, plan);

  EnsureDir(config.output_dir);
  const std::string ckpt = (fs::path(config.output_dir) / "checkpoint").string();
  SaveCheckpoint({result.network, config.seed}, ckpt);
  const std::string csv = (fs::path(config.output_dir) / "metrics.csv").string();
  result.record.WriteCsv(csv);
  WriteRunManifest(config, "train-fp", {ckpt, csv}, Summary(result.record),
                   result.record.wall_clock_seconds);
  return ckpt;
}

std::string RunTrainQat(const ExperimentConfig& config,
                        const std::optional<std::string>& teacher_dir) {
  const TrainPlan plan = config.Plan();
  const bool needs_teacher =
      plan.objective.needs_teacher() || plan.init == InitKind::kFromTeacher;
  if (needs_teacher && !teacher_dir) {
    throw MissingTeacherError("method '" + config.method + "' with init '" + config.init +
                              "' requires --teacher");
  }
  std::optional<Checkpoint> teacher;
  if (teacher_dir) teacher = LoadTeacher(*teacher_dir);

  ExperimentData data = LoadExperimentData(config);
  Network student = BuildNetwork(config, data.train);
  student.Quantize(config.Quantization());
  TrainResult result = TrainStudent(teacher ? &teacher->network : nullptr, std::move(student),
                                    data.train, &data.test, plan);

  EnsureDir(config.output_dir);
  const std::string ckpt = (fs::path(config.output_dir) / "checkpoint").string();
  SaveCheckpoint({result.network, config.seed}, ckpt);
  const std::string csv = (fs::path(config.output_dir) / "metrics.csv").string();
  result.record.WriteCsv(csv);
  WriteRunManifest(config, "train-qat", {ckpt, csv}, Summary(result.record),
                   result.record.wall_clock_seconds);
  return ckpt;
}

std::vector<std::string> RunSweepLambda(const ExperimentConfig& config,
                                        const std::string& teacher_dir,
                                        const std::vector<double>& lambdas,
                                        std::size_t threads) {
  if (lambdas.empty()) throw ConfigError("lambda list is empty");
  const Checkpoint teacher = LoadTeacher(teacher_dir);
  ExperimentData data = LoadExperimentData(config);
  Network student = BuildNetwork(config, data.train);
  student.Quantize(config.Quantization());
  TrainPlan plan = config.Plan();
  plan.objective.temperature = config.temperature;
  auto results = SweepLambda(teacher.network, student, data.train, &data.test, lambdas,
                             plan, threads);

  EnsureDir(config.output_dir);
  std::vector<std::string> csvs;
  json artifacts = json::array(), summary = json::object();
  double seconds = 0;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    const std::string tag = LambdaTag(lambdas[i]);
    const fs::path csv = fs::path(config.output_dir) / ("metrics_lambda_" + tag + ".csv");
    results[i].record.WriteCsv(csv.string());
    const fs::path ckpt = fs::path(config.output_dir) / ("checkpoint_lambda_" + tag);
    SaveCheckpoint({results[i].network, config.seed}, ckpt.string());
    csvs.push_back(csv.string());
    artifacts.push_back(csv.string());
    artifacts.push_back(ckpt.string());
    summary[tag] = Summary(results[i].record);
    seconds += results[i].record.wall_clock_seconds;
  }
  WriteRunManifest(config, "sweep-lambda", artifacts, summary, seconds);
  return csvs;
}

double RunEval(const ExperimentConfig& config, const std::string& checkpoint_dir,
               bool quantized) {
  const Checkpoint ckpt = LoadCheckpoint(checkpoint_dir);
  const ExperimentData data = LoadExperimentData(config);
  const double acc = Evaluate(ckpt.network, quantized, data.test);
  EnsureDir(config.output_dir);
  const json report = {{"checkpoint", checkpoint_dir},
                       {"quantized", quantized},
                       {"test_accuracy", acc},
                       {"test_samples", data.test.size()}};
  std::ofstream out(fs::path(config.output_dir) / "eval.json", std::ios::trunc);
  if (!out) throw IOError("cannot write eval.json in " + config.output_dir);
  out << report.dump(2) << "\n";
  WriteRunManifest(config, "eval", {(fs::path(config.output_dir) / "eval.json").string()},
                   report, 0.0);
  return acc;
}

std::string RunExportQuantized(const std::string& checkpoint_dir,
                               const std::string& out_dir) {
  const Checkpoint source = LoadCheckpoint(checkpoint_dir);
  if (!source.network.quantizers_initialized()) {
    throw ConfigError("checkpoint " + checkpoint_dir + " has uncalibrated quantizers");
  }
  EnsureDir(out_dir);
  const std::string dst = (fs::path(out_dir) / "checkpoint").string();
  SaveCheckpoint({source.network.MaterializeQuantizedWeights(), source.seed}, dst);
  const json manifest = {{"command", "export-quantized"},
                         {"source", checkpoint_dir},
                         {"artifacts", {dst}}};
  std::ofstream out(fs::path(out_dir) / "run.json", std::ios::trunc);
  if (!out) throw IOError("cannot write run.json in " + out_dir);
  out << manifest.dump(2) << "\n";
  return dst;
}

std::string RunLandscape(const ExperimentConfig& config,
                         const std::string& checkpoint_dir,
                         const std::optional<std::string>& teacher_dir,
                         bool quantized) {
  const Checkpoint ckpt = LoadCheckpoint(checkpoint_dir);
  const ObjectiveSpec objective = config.Objective();
  std::optional<Checkpoint> teacher;
  if (objective.needs_teacher()) {
    if (!teacher_dir) throw MissingTeacherError("landscape objective requires --teacher");
    teacher = LoadTeacher(*teacher_dir);
  }
  const ExperimentData data = LoadExperimentData(config);
  SliceConfig cfg;
  cfg.extent = config.landscape_extent;
  cfg.resolution = config.landscape_resolution;
  cfg.seed = DeriveSeed(config.seed, kDirectionStream);
  const auto slice = ExportLandscape(ckpt.network, teacher ? &teacher->network : nullptr,
                                     data.train, objective, quantized, cfg);
  WriteLandscape(slice, config.output_dir);
  const std::string csv = (fs::path(config.output_dir) / "landscape.csv").string();
  WriteRunManifest(config, "landscape",
                   {csv, (fs::path(config.output_dir) / "landscape.json").string()},
                   {{"center_loss", slice.center_loss},
                    {"flagged_cells", slice.flagged.size()}},
                   0.0);
  return csv;
}

}  // namespace sqakd

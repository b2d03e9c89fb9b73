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

// Command-line front end. Talks to the library only through the C API.

#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sqakd/sqakd.h"

namespace {

struct Options {
  std::string config;
  std::string teacher;
  std::string out;
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  std::vector<double> lambdas;
  bool quantized = false;
};

int Fail(sqakd_status status, const char* what) {
  std::fprintf(stderr, "sqakd: %s failed (code %d): %s\n", what, static_cast<int>(status),
               sqakd_last_error());
  return static_cast<int>(status);
}

std::size_t SweepThreads() {
  const char* env = std::getenv("SQAKD_THREADS");
  if (!env || !*env) return 1;
  const long n = std::strtol(env, nullptr, 10);
  return n > 0 ? static_cast<std::size_t>(n) : 1;
}

// Owns a C-API string for the lifetime of one command.
struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { sqakd_free_string(p); }
};

const char* OrNull(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

int Run(const std::string& command, const Options& opt) {
  if (command == "export-quantized") {
    if (opt.checkpoint.empty() || opt.out.empty()) {
      std::fprintf(stderr, "sqakd: export-quantized needs --checkpoint and --out\n");
      return SQAKD_ERR_CONFIG;
    }
    OwnedString path;
    const auto st = sqakd_export_quantized(opt.checkpoint.c_str(), opt.out.c_str(), &path.p);
    if (st != SQAKD_OK) return Fail(st, command.c_str());
    std::printf("exported %s\n", path.p);
    return 0;
  }

  sqakd_config* config = nullptr;
  auto st = sqakd_config_load(opt.config.c_str(), &config);
  if (st != SQAKD_OK) return Fail(st, "loading config");
  struct ConfigGuard {
    sqakd_config* c;
    ~ConfigGuard() { sqakd_config_free(c); }
  } guard{config};
  if (opt.seed) sqakd_config_set_seed(config, *opt.seed);
  if (!opt.out.empty()) sqakd_config_set_output_dir(config, opt.out.c_str());

  if (command == "train-fp") {
    OwnedString path;
    st = sqakd_train_fp(config, &path.p);
    if (st == SQAKD_OK) std::printf("checkpoint %s\n", path.p);
  } else if (command == "train-qat") {
    OwnedString path;
    st = sqakd_train_qat(config, OrNull(opt.teacher), &path.p);
    if (st == SQAKD_OK) std::printf("checkpoint %s\n", path.p);
  } else if (command == "sweep-lambda") {
    std::size_t written = 0;
    st = sqakd_sweep_lambda(config, OrNull(opt.teacher), opt.lambdas.data(), opt.lambdas.size(),
                            SweepThreads(), &written);
    if (st == SQAKD_OK) std::printf("wrote %zu metrics files\n", written);
  } else if (command == "eval") {
    if (opt.checkpoint.empty()) {
      std::fprintf(stderr, "sqakd: eval needs --checkpoint\n");
      return SQAKD_ERR_CONFIG;
    }
    double acc = 0;
    st = sqakd_eval(config, opt.checkpoint.c_str(), opt.quantized ? 1 : 0, &acc);
    if (st == SQAKD_OK) std::printf("accuracy %.17g\n", acc);
  } else if (command == "landscape") {
    if (opt.checkpoint.empty()) {
      std::fprintf(stderr, "sqakd: landscape needs --checkpoint\n");
      return SQAKD_ERR_CONFIG;
    }
    OwnedString path;
    st = sqakd_landscape(config, opt.checkpoint.c_str(), OrNull(opt.teacher),
                         opt.quantized ? 1 : 0, &path.p);
    if (st == SQAKD_OK) std::printf("landscape %s\n", path.p);
  }
  return st == SQAKD_OK ? 0 : Fail(st, command.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantization-aware training with self-supervised distillation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", sqakd_version());
  Options opt;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* cfg = sub->add_option("--config", opt.config, "Experiment config (JSON)");
    if (needs_config) cfg->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "Output directory (overrides the config)");
    sub->add_option("--seed", seed, "Seed (overrides the config)");
  };

  auto* train_fp = app.add_subcommand("train-fp", "Train a full-precision teacher");
  add_common(train_fp, true);

  auto* train_qat = app.add_subcommand("train-qat", "Quantization-aware training of a student");
  add_common(train_qat, true);
  train_qat->add_option("--teacher", opt.teacher, "Teacher checkpoint directory");

  auto* sweep = app.add_subcommand("sweep-lambda", "One QAT run per CE/KL mixing weight");
  add_common(sweep, true);
  sweep->add_option("--teacher", opt.teacher, "Teacher checkpoint directory");
  sweep->add_option("--lambda-list", opt.lambdas, "Comma-separated lambda values")
      ->delimiter(',')
      ->required();

  auto* eval = app.add_subcommand("eval", "Test accuracy of a checkpoint");
  add_common(eval, true);
  eval->add_option("--checkpoint", opt.checkpoint, "Checkpoint directory")->required();
  eval->add_flag("--quantized", opt.quantized, "Evaluate through the quantizers");

  auto* exporter = app.add_subcommand("export-quantized", "Materialize quantized weights");
  exporter->add_option("--checkpoint", opt.checkpoint, "Checkpoint directory")->required();
  exporter->add_option("--out", opt.out, "Output directory")->required();

  auto* landscape = app.add_subcommand("landscape", "Export a 2-D loss-surface slice");
  add_common(landscape, true);
  landscape->add_option("--checkpoint", opt.checkpoint, "Checkpoint directory")->required();
  landscape->add_option("--teacher", opt.teacher, "Teacher checkpoint directory");
  landscape->add_flag("--quantized", opt.quantized, "Evaluate through the quantizers");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return SQAKD_ERR_CONFIG;
  }

  for (auto* sub : app.get_subcommands()) {
    for (auto* o : sub->get_options()) {
      if (o->get_name() == "--seed" && o->count() > 0) opt.seed = seed;
    }
    return Run(sub->get_name(), opt);
  }
  return SQAKD_ERR_CONFIG;
}

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

#include "sqakd/sqakd.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "sqakd/experiment.hpp"

struct sqakd_config {
  sqakd::ExperimentConfig config;
};

struct sqakd_model {
  sqakd::Checkpoint checkpoint;
};

namespace {

thread_local std::string last_error;

sqakd_status StatusOf(sqakd::ErrorKind kind) {
  switch (kind) {
    case sqakd::ErrorKind::kDimension:
    case sqakd::ErrorKind::kConfig: return SQAKD_ERR_CONFIG;
    case sqakd::ErrorKind::kData: return SQAKD_ERR_DATA;
    case sqakd::ErrorKind::kNumeric: return SQAKD_ERR_NUMERIC;
    case sqakd::ErrorKind::kIO: return SQAKD_ERR_IO;
    case sqakd::ErrorKind::kMissingTeacher: return SQAKD_ERR_MISSING_TEACHER;
    case sqakd::ErrorKind::kInternal: return SQAKD_ERR_INTERNAL;
  }
  return SQAKD_ERR_INTERNAL;
}

// Runs `body`, translating any exception into a status code plus message.
template <typename F>
sqakd_status Guard(F&& body) {
  try {
    body();
    last_error.clear();
    return SQAKD_OK;
  } catch (const sqakd::Error& e) {
    last_error = e.what();
    return StatusOf(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
  } catch (const std::exception& e) {
    last_error = e.what();
  } catch (...) {
    last_error = "unknown error";
  }
  return SQAKD_ERR_INTERNAL;
}

char* CopyString(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void Require(const void* p, const char* what) {
  if (!p) throw sqakd::ConfigError(std::string(what) + " must not be NULL");
}

std::optional<std::string> OptionalPath(const char* p) {
  if (!p || !*p) return std::nullopt;
  return std::string(p);
}

}  // namespace

extern "C" {

const char* sqakd_version(void) { return "0.1.0"; }

const char* sqakd_last_error(void) { return last_error.c_str(); }

void sqakd_free_string(char* s) { std::free(s); }

sqakd_status sqakd_config_load(const char* path, sqakd_config** out) {
  return Guard([&] {
    Require(path, "path");
    Require(out, "out");
    *out = new sqakd_config{sqakd::LoadConfig(path)};
  });
}

sqakd_status sqakd_config_parse(const char* json_text, sqakd_config** out) {
  return Guard([&] {
    Require(json_text, "json_text");
    Require(out, "out");
    *out = new sqakd_config{sqakd::ParseConfig(json_text)};
  });
}

sqakd_status sqakd_config_set_seed(sqakd_config* config, uint64_t seed) {
  return Guard([&] {
    Require(config, "config");
    config->config.seed = seed;
  });
}

sqakd_status sqakd_config_set_output_dir(sqakd_config* config, const char* dir) {
  return Guard([&] {
    Require(config, "config");
    Require(dir, "dir");
    config->config.output_dir = dir;
  });
}

sqakd_status sqakd_config_to_json(const sqakd_config* config, char** out) {
  return Guard([&] {
    Require(config, "config");
    Require(out, "out");
    *out = CopyString(sqakd::ConfigToJson(config->config));
  });
}

void sqakd_config_free(sqakd_config* config) { delete config; }

sqakd_status sqakd_model_load(const char* checkpoint_dir, sqakd_model** out) {
  return Guard([&] {
    Require(checkpoint_dir, "checkpoint_dir");
    Require(out, "out");
    *out = new sqakd_model{sqakd::LoadCheckpoint(checkpoint_dir)};
  });
}

sqakd_status sqakd_model_save(const sqakd_model* model, const char* checkpoint_dir) {
  return Guard([&] {
    Require(model, "model");
    Require(checkpoint_dir, "checkpoint_dir");
    sqakd::SaveCheckpoint(model->checkpoint, checkpoint_dir);
  });
}

sqakd_status sqakd_model_evaluate(const sqakd_model* model, const sqakd_config* config,
                                  int quantized, double* accuracy) {
  return Guard([&] {
    Require(model, "model");
    Require(config, "config");
    Require(accuracy, "accuracy");
    const auto data = sqakd::LoadExperimentData(config->config);
    *accuracy = sqakd::Evaluate(model->checkpoint.network, quantized != 0, data.test);
  });
}

sqakd_status sqakd_model_num_layers(const sqakd_model* model, size_t* out) {
  return Guard([&] {
    Require(model, "model");
    Require(out, "out");
    *out = model->checkpoint.network.layers().size();
  });
}

void sqakd_model_free(sqakd_model* model) { delete model; }

sqakd_status sqakd_train_fp(const sqakd_config* config, char** checkpoint_out) {
  return Guard([&] {
    Require(config, "config");
    const std::string path = sqakd::RunTrainFp(config->config);
    if (checkpoint_out) *checkpoint_out = CopyString(path);
  });
}

sqakd_status sqakd_train_qat(const sqakd_config* config, const char* teacher_dir,
                             char** checkpoint_out) {
  return Guard([&] {
    Require(config, "config");
    const std::string path = sqakd::RunTrainQat(config->config, OptionalPath(teacher_dir));
    if (checkpoint_out) *checkpoint_out = CopyString(path);
  });
}

sqakd_status sqakd_sweep_lambda(const sqakd_config* config, const char* teacher_dir,
                                const double* lambdas, size_t n_lambdas, size_t threads,
                                size_t* n_written) {
  return Guard([&] {
    Require(config, "config");
    const auto teacher = OptionalPath(teacher_dir);
    if (!teacher) throw sqakd::MissingTeacherError("the lambda sweep requires a teacher");
    if (n_lambdas > 0) Require(lambdas, "lambdas");
    const std::vector<double> list(lambdas, lambdas + n_lambdas);
    const auto csvs = sqakd::RunSweepLambda(config->config, *teacher, list, threads);
    if (n_written) *n_written = csvs.size();
  });
}

sqakd_status sqakd_eval(const sqakd_config* config, const char* checkpoint_dir,
                        int quantized, double* accuracy) {
  return Guard([&] {
    Require(config, "config");
    Require(checkpoint_dir, "checkpoint_dir");
    const double acc = sqakd::RunEval(config->config, checkpoint_dir, quantized != 0);
    if (accuracy) *accuracy = acc;
  });
}

sqakd_status sqakd_export_quantized(const char* checkpoint_dir, const char* out_dir,
                                    char** checkpoint_out) {
  return Guard([&] {
    Require(checkpoint_dir, "checkpoint_dir");
    Require(out_dir, "out_dir");
    const std::string path = sqakd::RunExportQuantized(checkpoint_dir, out_dir);
    if (checkpoint_out) *checkpoint_out = CopyString(path);
  });
}

sqakd_status sqakd_landscape(const sqakd_config* config, const char* checkpoint_dir,
                             const char* teacher_dir, int quantized, char** csv_out) {
  return Guard([&] {
    Require(config, "config");
    Require(checkpoint_dir, "checkpoint_dir");
    const std::string path = sqakd::RunLandscape(config->config, checkpoint_dir,
                                                 OptionalPath(teacher_dir), quantized != 0);
    if (csv_out) *csv_out = CopyString(path);
  });
}

}  // extern "C"

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

#ifndef SQAKD_SQAKD_H_
#define SQAKD_SQAKD_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SQAKD_API __declspec(dllexport)
#elif defined(__GNUC__)
#define SQAKD_API __attribute__((visibility("default")))
#else
#define SQAKD_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as the CLI's process exit codes. */
typedef enum {
  SQAKD_OK = 0,
  SQAKD_ERR_INTERNAL = 1,
  SQAKD_ERR_CONFIG = 2,
  SQAKD_ERR_DATA = 3,
  SQAKD_ERR_NUMERIC = 4,
  SQAKD_ERR_IO = 5,
  SQAKD_ERR_MISSING_TEACHER = 6
} sqakd_status;

typedef struct sqakd_config sqakd_config;
typedef struct sqakd_model sqakd_model;

SQAKD_API const char* sqakd_version(void);

/* Message of the most recent failure on the calling thread, or "". */
SQAKD_API const char* sqakd_last_error(void);

/* Strings returned through char** out-parameters are owned by the caller. */
SQAKD_API void sqakd_free_string(char* s);

SQAKD_API sqakd_status sqakd_config_load(const char* path, sqakd_config** out);
SQAKD_API sqakd_status sqakd_config_parse(const char* json_text,
                                          sqakd_config** out);
SQAKD_API sqakd_status sqakd_config_set_seed(sqakd_config* config,
                                             uint64_t seed);
SQAKD_API sqakd_status sqakd_config_set_output_dir(sqakd_config* config,
                                                   const char* dir);
SQAKD_API sqakd_status sqakd_config_to_json(const sqakd_config* config,
                                            char** out);
SQAKD_API void sqakd_config_free(sqakd_config* config);

SQAKD_API sqakd_status sqakd_model_load(const char* checkpoint_dir,
                                        sqakd_model** out);
SQAKD_API sqakd_status sqakd_model_save(const sqakd_model* model,
                                        const char* checkpoint_dir);
/* Test-set accuracy of `model` on the data described by `config`. */
SQAKD_API sqakd_status sqakd_model_evaluate(const sqakd_model* model,
                                            const sqakd_config* config,
                                            int quantized, double* accuracy);
SQAKD_API sqakd_status sqakd_model_num_layers(const sqakd_model* model,
                                              size_t* out);
SQAKD_API void sqakd_model_free(sqakd_model* model);

/* Experiment commands. Artifacts go under the config's output directory;
 * `teacher_dir` may be NULL where a teacher is optional. */
SQAKD_API sqakd_status sqakd_train_fp(const sqakd_config* config,
                                      char** checkpoint_out);
SQAKD_API sqakd_status sqakd_train_qat(const sqakd_config* config,
                                       const char* teacher_dir,
                                       char** checkpoint_out);
SQAKD_API sqakd_status sqakd_sweep_lambda(const sqakd_config* config,
                                          const char* teacher_dir,
                                          const double* lambdas,
                                          size_t n_lambdas, size_t threads,
                                          size_t* n_written);
SQAKD_API sqakd_status sqakd_eval(const sqakd_config* config,
                                  const char* checkpoint_dir, int quantized,
                                  double* accuracy);
SQAKD_API sqakd_status sqakd_export_quantized(const char* checkpoint_dir,
                                              const char* out_dir,
                                              char** checkpoint_out);
SQAKD_API sqakd_status sqakd_landscape(const sqakd_config* config,
                                       const char* checkpoint_dir,
                                       const char* teacher_dir, int quantized,
                                       char** csv_out);

#ifdef __cplusplus
}
#endif

#endif  // SQAKD_SQAKD_H_

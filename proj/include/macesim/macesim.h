/* Copyright 2026 The macesim Authors. All Rights Reserved.

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

/* C interface to the macesim simulator.
 *
 * Every function returns a macesim_status. On failure the message of the
 * most recent error on the calling thread is available from
 * macesim_last_error() until the next failing call on that thread.
 *
 * Functions that return text take (buf, cap, needed): the text and a NUL are
 * copied when cap is large enough, *needed (when non-NULL) always receives the
 * required size including the NUL, and MACESIM_ERR_BUFFER is returned when
 * the buffer is too small. buf may be NULL with cap 0 to query the size. */

#ifndef MACESIM_MACESIM_H_
#define MACESIM_MACESIM_H_

#include <stddef.h>

#if defined(MACESIM_BUILDING_LIBRARY)
#define MACESIM_API __attribute__((visibility("default")))
#else
#define MACESIM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values 0, 2, 3 and 4 double as the CLI exit codes. */
typedef enum macesim_status {
  MACESIM_OK = 0,
  MACESIM_ERR_INVALID_ARG = 1,
  MACESIM_ERR_CONFIG = 2,
  MACESIM_ERR_CONTRACT = 3,
  MACESIM_ERR_MISMATCH = 4,
  MACESIM_ERR_IO = 5,
  MACESIM_ERR_PARSE = 6,
  MACESIM_ERR_CALIBRATION = 7,
  MACESIM_ERR_DOMAIN = 8,
  MACESIM_ERR_BUFFER = 9,
  MACESIM_ERR_INTERNAL = 10
} macesim_status;

typedef struct macesim_config macesim_config;
typedef struct macesim_run macesim_run;

MACESIM_API const char* macesim_version(void);
MACESIM_API const char* macesim_last_error(void);
MACESIM_API const char* macesim_status_name(macesim_status status);

/* Configs. */
MACESIM_API macesim_status macesim_config_load(const char* path, macesim_config** out);
MACESIM_API macesim_status macesim_config_parse(const char* text, macesim_config** out);
MACESIM_API macesim_status macesim_config_clone(const macesim_config* cfg, macesim_config** out);
/* key is "section.key" as in the config file. Cross-field rules are checked
 * by macesim_config_validate and by every function that consumes the config. */
MACESIM_API macesim_status macesim_config_set(macesim_config* cfg, const char* key,
                                              const char* value);
MACESIM_API macesim_status macesim_config_validate(const macesim_config* cfg);
/* 16 hex digits. */
MACESIM_API macesim_status macesim_config_hash(const macesim_config* cfg, char* buf, size_t cap,
                                               size_t* needed);
MACESIM_API macesim_status macesim_config_serialize(const macesim_config* cfg, char* buf,
                                                    size_t cap, size_t* needed);
/* The configured output root (report.out_dir). */
MACESIM_API macesim_status macesim_config_out_dir(const macesim_config* cfg, char* buf,
                                                  size_t cap, size_t* needed);
MACESIM_API void macesim_config_free(macesim_config* cfg);

/* Generates (or loads) the config's trace and writes it to path. */
MACESIM_API macesim_status macesim_gen_trace(const macesim_config* cfg, const char* path,
                                             size_t* n_requests);

/* Runs. */
MACESIM_API macesim_status macesim_run_create(const macesim_config* cfg, macesim_run** out);
/* Writes the run's artifacts under out_root/<config hash>/; the directory is
 * returned in buf. */
MACESIM_API macesim_status macesim_run_write(const macesim_run* run, const char* out_root,
                                             char* buf, size_t cap, size_t* needed);
/* Named scalar from summary.json "metrics" (e.g. "throughput_tok_s"). */
MACESIM_API macesim_status macesim_run_metric(const macesim_run* run, const char* name,
                                              double* value);
/* The run's metrics.csv data row. */
MACESIM_API macesim_status macesim_run_metrics_row(const macesim_run* run, char* buf, size_t cap,
                                                   size_t* needed);
MACESIM_API macesim_status macesim_run_summary_json(const macesim_run* run, char* buf,
                                                    size_t cap, size_t* needed);
MACESIM_API void macesim_run_free(macesim_run* run);

/* Compares finished run directories; writes the table and SVG charts into
 * out_dir and returns the markdown table. MACESIM_ERR_MISMATCH when the runs
 * replayed different traces and force is 0. */
MACESIM_API macesim_status macesim_compare(const char* const* run_dirs, size_t n_runs,
                                           const char* out_dir, int force, char* buf,
                                           size_t cap, size_t* needed);

/* Grid sweep. Each axis is "section.key=v1,v2,...". threads 0 means
 * MACE_SIM_THREADS or the hardware concurrency. Writes every run plus
 * out_root/sweep_metrics.csv. */
MACESIM_API macesim_status macesim_sweep(const macesim_config* base, const char* const* axes,
                                         size_t n_axes, const char* out_root, unsigned threads,
                                         size_t* n_runs);

/* Fits a cost profile to a CSV with header
 * "workload,batch_size,tokens,latency_ms,memory_mb" and writes it as
 * key=value text to out_path (skipped when NULL). The residual report is
 * returned in buf. */
MACESIM_API macesim_status macesim_calibrate(const char* csv_path, const char* out_path,
                                             char* buf, size_t cap, size_t* needed);

#ifdef __cplusplus
}
#endif

#endif /* MACESIM_MACESIM_H_ */

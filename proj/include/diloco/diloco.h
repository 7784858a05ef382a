/*
 * Copyright 2026 The diloco-cpp Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef DILOCO_DILOCO_H_
#define DILOCO_DILOCO_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DLC_API __declspec(dllexport)
#else
#define DLC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dlc_status {
  DLC_OK = 0,
  DLC_ERR_INVALID_ARGUMENT = 1,
  DLC_ERR_CONFIG = 2,
  DLC_ERR_IO = 3,
  DLC_ERR_DIMENSION = 4,
  DLC_ERR_PROTOCOL = 5,
  DLC_ERR_NETWORK = 6,
  DLC_ERR_NUMERIC = 7,
  DLC_ERR_INTERNAL = 8
} dlc_status;

typedef struct dlc_config dlc_config;
typedef struct dlc_run dlc_run;

/* Receives each metrics row as a CSV line (no newline). */
typedef void (*dlc_row_fn)(const char* csv_line, void* user);
/* Receives transport log lines. */
typedef void (*dlc_log_fn)(const char* line, void* user);

DLC_API const char* dlc_version(void);

/* Message of the last failed call on this thread; "" if none. */
DLC_API const char* dlc_last_error(void);

DLC_API const char* dlc_status_name(dlc_status status);

/* Column header of the metrics CSV. */
DLC_API const char* dlc_csv_header(void);

/* preset may be NULL for the defaults. */
DLC_API dlc_status dlc_config_create(const char* preset, dlc_config** out);
DLC_API void dlc_config_free(dlc_config* cfg);

/* Merges a key = value file or a JSON run sidecar. */
DLC_API dlc_status dlc_config_load(dlc_config* cfg, const char* path);
DLC_API dlc_status dlc_config_set(dlc_config* cfg, const char* key,
                                  const char* value);

/* Copies a NUL-terminated value into buf. *needed (optional) receives the
 * size including the NUL; DLC_ERR_INVALID_ARGUMENT if cap is too small.
 * buf = NULL with cap = 0 only reports *needed. The other buf/cap/needed
 * functions below follow the same rules. */
DLC_API dlc_status dlc_config_get(const dlc_config* cfg, const char* key,
                                  char* buf, size_t cap, size_t* needed);

/* Parses every key; the message names the first offending key. */
DLC_API dlc_status dlc_config_validate(const dlc_config* cfg);

/* Resolved configuration as key = value text. */
DLC_API dlc_status dlc_config_to_text(const dlc_config* cfg, char* buf,
                                      size_t cap, size_t* needed);
DLC_API dlc_status dlc_config_hash(const dlc_config* cfg, uint64_t* out);

/* Comma-separated preset names. */
DLC_API dlc_status dlc_preset_names(char* buf, size_t cap, size_t* needed);

/* Pretraining plus the outer loop; writes CSV, JSON sidecar, resolved
 * config and a parameter checkpoint into out_dir. out may be NULL. */
DLC_API dlc_status dlc_train(const dlc_config* cfg, const char* out_dir,
                             dlc_row_fn on_row, void* user, dlc_run** out);

/* One run per comma-separated value of axis (H, k, drop_prob, prune_frac,
 * pretrain_steps, outer_opt, data_regime) plus a summary CSV whose path is
 * copied into summary_path (may be NULL). */
DLC_API dlc_status dlc_sweep(const dlc_config* cfg, const char* axis,
                             const char* values, const char* out_dir,
                             dlc_row_fn on_row, void* user, char* summary_path,
                             size_t cap);

/* TCP coordinator: pretrains, serves T outer steps, writes the run files. */
DLC_API dlc_status dlc_coordinator_serve(const dlc_config* cfg,
                                         const char* bind_addr,
                                         const char* out_dir,
                                         dlc_row_fn on_row, dlc_log_fn on_log,
                                         void* user, dlc_run** out);

/* TCP worker; returns after the coordinator's SHUTDOWN. */
DLC_API dlc_status dlc_worker_run(const dlc_config* cfg,
                                  const char* connect_addr, uint32_t worker_id,
                                  dlc_log_fn on_log, void* user);

/* Validation perplexity of a checkpoint written by a run. */
DLC_API dlc_status dlc_evaluate(const dlc_config* cfg, const char* params_path,
                                double* ppl);

DLC_API void dlc_run_free(dlc_run* run);
/* NaN if the run had no evaluation. */
DLC_API double dlc_run_final_ppl(const dlc_run* run);
DLC_API size_t dlc_run_param_count(const dlc_run* run);
/* Copies min(cap, param_count) parameters. */
DLC_API size_t dlc_run_params(const dlc_run* run, double* buf, size_t cap);
DLC_API size_t dlc_run_row_count(const dlc_run* run);
DLC_API dlc_status dlc_run_row(const dlc_run* run, size_t index, char* buf,
                               size_t cap, size_t* needed);
DLC_API uint64_t dlc_run_rounds(const dlc_run* run);
DLC_API uint64_t dlc_run_bytes(const dlc_run* run);
DLC_API uint64_t dlc_run_total_inner_compute(const dlc_run* run);
DLC_API const char* dlc_run_csv_path(const dlc_run* run);

#ifdef __cplusplus
}
#endif

#endif /* DILOCO_DILOCO_H_ */

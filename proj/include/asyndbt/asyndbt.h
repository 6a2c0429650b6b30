/* Copyright 2026 The AsynDBT Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the AsynDBT library. Every function that can fail returns
 * an adbt_status; the message of the most recent failure on the calling
 * thread is available from adbt_last_error(). Strings returned through
 * `char**` out-parameters are owned by the caller and released with
 * adbt_string_free().
 */
#ifndef ASYNDBT_ASYNDBT_H_
#define ASYNDBT_ASYNDBT_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define ADBT_API __declspec(dllexport)
#else
#define ADBT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum adbt_status {
  ADBT_OK = 0,
  ADBT_ERR_INVALID_ARGUMENT = 1,
  ADBT_ERR_CONFIG = 2,
  ADBT_ERR_EVALUATOR = 3, /* retryable */
  ADBT_ERR_INVARIANT = 4,
  ADBT_ERR_IO = 5,
  ADBT_ERR_SHAPE_TOO_LARGE = 6,
  ADBT_ERR_MALFORMED_ASSIGNMENT = 7,
  ADBT_ERR_MISMATCH = 8, /* replay found a divergent record */
  ADBT_ERR_INTERNAL = 9
} adbt_status;

typedef struct adbt_config adbt_config;
typedef struct adbt_result adbt_result;

ADBT_API const char* adbt_version(void);
ADBT_API const char* adbt_last_error(void);
ADBT_API void adbt_string_free(char* s);

/* Process exit code conventionally used for a status (0, 1, 2, 3 or 4). */
ADBT_API int adbt_exit_code(adbt_status status);

/* Configuration */
ADBT_API adbt_status adbt_config_load(const char* path, adbt_config** out);
ADBT_API adbt_status adbt_config_from_json(const char* text, adbt_config** out);
ADBT_API void adbt_config_free(adbt_config* cfg);
ADBT_API adbt_status adbt_config_set_seed(adbt_config* cfg, uint64_t seed);
ADBT_API adbt_status adbt_config_set_iterations(adbt_config* cfg, uint64_t iterations);
ADBT_API adbt_status adbt_config_set_output_dir(adbt_config* cfg, const char* dir);
/* "tcp:HOST:PORT" or "stdio:CMD"; every worker then uses a remote evaluator. */
ADBT_API adbt_status adbt_config_set_evaluator_endpoint(adbt_config* cfg, const char* endpoint);
/* The config with all defaults filled in. */
ADBT_API adbt_status adbt_config_to_json(const adbt_config* cfg, char** out);

/* Runs the configured mode. With write_files nonzero the trace and summary
 * CSV are written to the output directory. */
ADBT_API adbt_status adbt_run(const adbt_config* cfg, int write_files, adbt_result** out);
ADBT_API void adbt_result_free(adbt_result* result);
ADBT_API double adbt_result_final_loss(const adbt_result* result);
ADBT_API uint64_t adbt_result_iterations(const adbt_result* result);
ADBT_API double adbt_result_clock(const adbt_result* result);
ADBT_API adbt_status adbt_result_summary_json(const adbt_result* result, char** out);
/* The full JSONL trace, header first. */
ADBT_API adbt_status adbt_result_trace(const adbt_result* result, char** out);

/* Enumerated optimum, optimal loss and exact gradients at the uniform
 * policy, as JSON. */
ADBT_API adbt_status adbt_oracle_report(const adbt_config* cfg, char** out);

/* Re-executes the run recorded in a trace file and compares it record by
 * record. Returns ADBT_ERR_MISMATCH on divergence; `report` (optional)
 * receives a JSON description either way. */
ADBT_API adbt_status adbt_replay(const char* trace_path, char** report);

/* Euclidean projection onto the probability simplex. `out` holds n values. */
ADBT_API adbt_status adbt_project_simplex(const double* x, size_t n, double* out);

#ifdef __cplusplus
}
#endif

#endif /* ASYNDBT_ASYNDBT_H_ */

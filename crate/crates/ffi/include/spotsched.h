#ifndef SPOTSCHED_H
#define SPOTSCHED_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SpotschedStatus {
  SPOTSCHED_STATUS_OK = 0,
  SPOTSCHED_STATUS_NULL_POINTER = 1,
  SPOTSCHED_STATUS_INVALID_UTF8 = 2,
  SPOTSCHED_STATUS_CONFIG = 3,
  SPOTSCHED_STATUS_IO = 4,
  SPOTSCHED_STATUS_SIMULATION = 5,
  SPOTSCHED_STATUS_PANIC = 6,
} SpotschedStatus;

// Opaque run configuration.
typedef struct SpotschedConfig SpotschedConfig;

// Opaque result of one run.
typedef struct SpotschedResult SpotschedResult;

typedef struct SpotschedCapacity {
  uint32_t k;
  uint32_t t;
  uint32_t retained_on_demand;
} SpotschedCapacity;

// Headline numbers of a finished run.
typedef struct SpotschedStats {
  uint64_t tasks;
  uint64_t short_tasks;
  uint64_t long_tasks;
  double short_mean_s;
  double short_max_s;
  double long_mean_s;
  double long_max_s;
  double avg_active_transient;
  uint32_t max_active_transient;
  double r_normalized_on_demand;
  double savings_fraction;
  uint64_t transient_lifetimes;
  uint64_t revoked;
  uint32_t k;
  uint32_t t;
  double end_s;
} SpotschedStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failure on this thread, or null. The
// pointer stays valid until the next failing call on the same thread.
const char *spotsched_last_error(void);

// Library version as a static NUL-terminated string.
const char *spotsched_version(void);

// Transient budget and partition sizes for `N` short-only servers of
// which a fraction `p` may be replaced at cost ratio `r`.
//
// # Safety
// `out` must point to writable memory for one `SpotschedCapacity`.
enum SpotschedStatus spotsched_capacity(double r,
                                        uint32_t n,
                                        double p,
                                        struct SpotschedCapacity *out);

// Creates a configuration from a named preset, `desk` or `paper`; null
// means `desk`.
//
// # Safety
// `preset` must be null or a NUL-terminated string; `out` must be writable.
enum SpotschedStatus spotsched_config_new(const char *preset, struct SpotschedConfig **out);

// Applies one `key = value` setting, using the same keys as the command
// line and config files.
//
// # Safety
// `config` must come from `spotsched_config_new`; `key` and `value` must be
// NUL-terminated strings.
enum SpotschedStatus spotsched_config_set(struct SpotschedConfig *config,
                                          const char *key,
                                          const char *value);

// # Safety
// `config` must be null or come from `spotsched_config_new`, and not be
// used afterwards.
void spotsched_config_free(struct SpotschedConfig *config);

// Runs the simulation. With a non-null `out_dir` the usual artifacts are
// written there as well.
//
// # Safety
// `config` must be a live handle, `out_dir` null or a NUL-terminated path,
// and `out` writable.
enum SpotschedStatus spotsched_run(const struct SpotschedConfig *config,
                                   const char *out_dir,
                                   struct SpotschedResult **out);

// # Safety
// `result` must be a live handle and `out` writable.
enum SpotschedStatus spotsched_result_stats(const struct SpotschedResult *result,
                                            struct SpotschedStats *out);

// Writes `summary.json`, `tasks.csv`, `cdf_short.csv` and
// `transients.csv` for a finished run.
//
// # Safety
// `result` must be a live handle and `dir` a NUL-terminated path.
enum SpotschedStatus spotsched_result_write(const struct SpotschedResult *result, const char *dir);

// # Safety
// `result` must be null or come from `spotsched_run`, and not be used
// afterwards.
void spotsched_result_free(struct SpotschedResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPOTSCHED_H */

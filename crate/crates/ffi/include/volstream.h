#ifndef VOLSTREAM_H
#define VOLSTREAM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum VsStatus {
  VS_STATUS_OK = 0,
  VS_STATUS_NULL_POINTER = 1,
  VS_STATUS_INVALID_INPUT = 2,
  VS_STATUS_IO = 3,
  VS_STATUS_INVARIANT = 4,
  VS_STATUS_PANIC = 5,
} VsStatus;

/**
 * Simulation settings.
 */
typedef struct VsConfig VsConfig;

/**
 * Per-chunk and per-session results of one run.
 */
typedef struct VsReport VsReport;

/**
 * Bandwidth and pose traces for one session.
 */
typedef struct VsTraces VsTraces;

typedef struct VsSummary {
  size_t chunks;
  bool truncated;
  double mean_q1;
  double total_q2;
  double mean_q3;
  double mean_q4;
  double total_qoe;
  double mean_qoe;
  uint64_t total_bytes;
  double startup_delay;
  size_t stall_chunks;
  double mean_d_t;
} VsSummary;

typedef struct VsChunk {
  size_t chunk;
  double request_time;
  uint64_t bytes;
  double tau;
  double buffer_before;
  double buffer_after;
  double wait;
  double d_t;
  double eta_star;
  size_t visible_tiles;
  double q1;
  double q2;
  double q3;
  double q4;
  double qoe;
} VsChunk;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failed call on this thread; empty after a
 * successful call. Valid until the next call on the same thread.
 */
const char *vs_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *vs_version(void);

/**
 * Default settings.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for a handle.
 */
enum VsStatus vs_config_default(struct VsConfig **out);

/**
 * Settings parsed from TOML text. Relative trace paths resolve against the
 * working directory.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` as in [`vs_config_default`].
 */
enum VsStatus vs_config_from_toml(const char *toml, struct VsConfig **out);

/**
 * Settings loaded from a TOML file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` as in [`vs_config_default`].
 */
enum VsStatus vs_config_load(const char *path, struct VsConfig **out);

/**
 * Switches between history-based (`false`) and oracle (`true`) prediction.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum VsStatus vs_config_set_oracle(struct VsConfig *config, bool oracle);

/**
 * # Safety
 * `config` must be null or a handle not yet freed.
 */
void vs_config_free(struct VsConfig *config);

/**
 * Reads a `t_s,mbps` bandwidth CSV and a `t_s,x,y,z,qw,qx,qy,qz` pose CSV,
 * using the content volume from `config`.
 *
 * # Safety
 * `config` must be a live handle, the paths NUL-terminated strings.
 */
enum VsStatus vs_traces_load(const struct VsConfig *config,
                             const char *bandwidth_csv,
                             const char *pose_csv,
                             struct VsTraces **out);

/**
 * Generates synthetic traces. `motion` is `far-orbit`, `close-in` or
 * `crossing`; `bandwidth` is `low`, `mid` or `high`.
 *
 * # Safety
 * `config` must be a live handle, the names NUL-terminated strings.
 */
enum VsStatus vs_traces_synthetic(const struct VsConfig *config,
                                  const char *motion,
                                  const char *bandwidth,
                                  double duration_s,
                                  uint64_t seed,
                                  struct VsTraces **out);

/**
 * Writes the traces as `bandwidth.csv` and `pose.csv` under `dir`.
 *
 * # Safety
 * `traces` must be a live handle, `dir` a NUL-terminated string.
 */
enum VsStatus vs_traces_write(const struct VsTraces *traces, const char *dir);

/**
 * # Safety
 * `traces` must be null or a handle not yet freed.
 */
void vs_traces_free(struct VsTraces *traces);

/**
 * Simulates one session. `scheme` is `proposed`, `rate_utility`,
 * `viewport_utility` or `distance_tile`.
 *
 * # Safety
 * `config` and `traces` must be live handles, `scheme` a NUL-terminated
 * string, `out` valid for writing a handle.
 */
enum VsStatus vs_run_session(const struct VsConfig *config,
                             const struct VsTraces *traces,
                             const char *scheme,
                             struct VsReport **out);

/**
 * # Safety
 * `report` must be a live handle and `out` valid for writing.
 */
enum VsStatus vs_report_summary(const struct VsReport *report, struct VsSummary *out);

/**
 * Number of chunks in the report; 0 for a null handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
size_t vs_report_chunk_count(const struct VsReport *report);

/**
 * # Safety
 * `report` must be a live handle and `out` valid for writing.
 */
enum VsStatus vs_report_chunk(const struct VsReport *report, size_t index, struct VsChunk *out);

/**
 * Writes `chunks.csv` (or `chunks.json`) and `summary.json` under `dir`.
 *
 * # Safety
 * `report` must be a live handle, `dir` a NUL-terminated string.
 */
enum VsStatus vs_report_write(const struct VsReport *report, const char *dir, bool json);

/**
 * # Safety
 * `report` must be null or a handle not yet freed.
 */
void vs_report_free(struct VsReport *report);

/**
 * Boundary point density at `distance` meters under the parametric
 * density model `eta = (v0 / v)^alpha`.
 *
 * # Safety
 * `out` must be valid for writing.
 */
enum VsStatus vs_acuity_boundary_pld(double d0,
                                     double v0,
                                     double ppi_device,
                                     double theta_arcmin,
                                     double alpha,
                                     double distance,
                                     double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOLSTREAM_H */

#ifndef JGW_H
#define JGW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum JgwStatus {
  JGW_STATUS_OK = 0,
  // The solver stopped at its iteration cap; the result is still valid.
  JGW_STATUS_NOT_CONVERGED = 1,
  JGW_STATUS_NULL_POINTER = 2,
  JGW_STATUS_INVALID_ARGUMENT = 3,
  JGW_STATUS_INVALID_CONFIG = 4,
  JGW_STATUS_INVALID_SPACE = 5,
  JGW_STATUS_NUMERICAL = 6,
  JGW_STATUS_IO = 7,
  JGW_STATUS_PARSE = 8,
  JGW_STATUS_BUFFER_TOO_SMALL = 9,
  JGW_STATUS_PANIC = 10,
} JgwStatus;

// Solver parameters.
typedef struct JgwConfig JgwConfig;

// A transport plan with the report of the solve that produced it.
typedef struct JgwResult JgwResult;

// A clustered metric measure space.
typedef struct JgwSpace JgwSpace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null if none failed.
// The pointer stays valid until the next failing call on this thread.
const char *jgw_last_error(void);

// Library version as a static NUL-terminated string.
const char *jgw_version(void);

// Builds a space from `n_points` row-major points of dimension `dim`.
// `cluster_of[i]` in `0..n_clusters` assigns point `i`; every cluster must
// be nonempty. `weights` (length `n_points`) and `masses` (length
// `n_clusters`) may be null for uniform weights and masses proportional to
// cluster weight.
//
// # Safety
// Non-null pointers must be valid for the stated lengths; `out` must be
// writable.
enum JgwStatus jgw_space_from_points(const double *points,
                                     size_t n_points,
                                     size_t dim,
                                     const uint32_t *cluster_of,
                                     size_t n_clusters,
                                     const double *weights,
                                     const double *masses,
                                     struct JgwSpace **out);

// Reads a point-cloud CSV (`x,y[,z],cluster[,weight]`).
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum JgwStatus jgw_space_read(const char *path, struct JgwSpace **out);

// Number of points, or 0 for a null handle.
//
// # Safety
// `space` must be null or a live handle.
size_t jgw_space_num_points(const struct JgwSpace *space);

// Number of clusters, or 0 for a null handle.
//
// # Safety
// `space` must be null or a live handle.
size_t jgw_space_num_clusters(const struct JgwSpace *space);

// # Safety
// `space` must be null or a handle not yet freed.
void jgw_space_free(struct JgwSpace *space);

// Default solver parameters.
//
// # Safety
// `out` must be writable.
enum JgwStatus jgw_config_new(struct JgwConfig **out);

// Reads solver parameters from a JSON file; missing keys keep defaults.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum JgwStatus jgw_config_read(const char *path, struct JgwConfig **out);

// # Safety
// `config` must be null or a live handle.
enum JgwStatus jgw_config_set_epsilon(struct JgwConfig *config, double epsilon);

// Continuation start; a value of 0 or less turns continuation off.
//
// # Safety
// `config` must be null or a live handle.
enum JgwStatus jgw_config_set_epsilon_start(struct JgwConfig *config, double epsilon_start);

// # Safety
// `config` must be null or a live handle.
enum JgwStatus jgw_config_set_eta(struct JgwConfig *config, double eta);

// # Safety
// `config` must be null or a live handle.
enum JgwStatus jgw_config_set_max_outer_iters(struct JgwConfig *config, size_t iters);

// # Safety
// `config` must be null or a live handle.
enum JgwStatus jgw_config_set_restarts(struct JgwConfig *config, uint32_t restarts);

// # Safety
// `config` must be null or a live handle.
enum JgwStatus jgw_config_set_seed(struct JgwConfig *config, uint64_t seed);

// # Safety
// `config` must be null or a live handle.
enum JgwStatus jgw_config_set_paper_literal_signs(struct JgwConfig *config, bool enabled);

// # Safety
// `config` must be null or a handle not yet freed.
void jgw_config_free(struct JgwConfig *config);

// Solves `source` against `target`. `config` may be null for defaults.
// Returns [`JgwStatus::NotConverged`] with a valid `*out` when the
// iteration cap was hit.
//
// # Safety
// Handles must be live; `out` must be writable.
enum JgwStatus jgw_solve(const struct JgwSpace *source,
                         const struct JgwSpace *target,
                         const struct JgwConfig *config,
                         struct JgwResult **out);

// Unregularized objective in input distance units; NaN for a null handle.
//
// # Safety
// `result` must be null or a live handle.
double jgw_result_objective(const struct JgwResult *result);

// # Safety
// `result` must be null or a live handle.
bool jgw_result_converged(const struct JgwResult *result);

// # Safety
// `result` must be null or a live handle.
size_t jgw_result_outer_iters(const struct JgwResult *result);

// Writes the plan's row and column counts.
//
// # Safety
// `result` must be a live handle; `rows` and `cols` writable.
enum JgwStatus jgw_result_shape(const struct JgwResult *result, size_t *rows, size_t *cols);

// Copies the plan row-major into `buffer` of `len` doubles.
//
// # Safety
// `result` must be a live handle; `buffer` valid for `len` writes.
enum JgwStatus jgw_result_copy_plan(const struct JgwResult *result, double *buffer, size_t len);

// Writes the plan as a sparse coupling CSV.
//
// # Safety
// `result` must be a live handle; `path` a NUL-terminated string.
enum JgwStatus jgw_result_write_coupling(const struct JgwResult *result, const char *path);

// # Safety
// `result` must be null or a handle not yet freed.
void jgw_result_free(struct JgwResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JGW_H */

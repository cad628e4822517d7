#ifndef VOCOVAR_H
#define VOCOVAR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

// Result of every fallible call. Values match the `vocovar` CLI exit codes.
typedef enum VcvStatus {
  VCV_STATUS_OK = 0,
  // Null pointer, bad UTF-8, out-of-range index.
  VCV_STATUS_INVALID_ARGUMENT = 2,
  // Parse, validation or degenerate-scenario error.
  VCV_STATUS_VALIDATION = 3,
  // Singular system, cheirality violation, non-SPD matrix.
  VCV_STATUS_NUMERICAL = 4,
  VCV_STATUS_IO = 5,
  // A Rust panic was caught at the boundary.
  VCV_STATUS_INTERNAL = 70,
} VcvStatus;

// Loaded or simulated keyframe dataset.
typedef struct VcvDataset VcvDataset;

// Optimized poses with their marginal covariances.
typedef struct VcvSolution VcvSolution;

// Per-keyframe D-opt trend.
typedef struct VcvTrend VcvTrend;

typedef struct VcvSolveOptions {
  // Add priors on the first two keyframes to fix the gauge.
  bool gauge;
  double gauge_rot_sigma;
  double gauge_trans_sigma;
  double tol;
  uint32_t max_iters;
  // Levenberg-Marquardt damping.
  bool damping;
} VcvSolveOptions;

typedef struct VcvTrendEntry {
  size_t keyframe;
  double logdet;
  size_t num_edges;
  size_t max_backlink_span;
} VcvTrendEntry;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next `vcv_*` call on the same thread.
const char *vcv_last_error_message(void);

// Library version, static storage.
const char *vcv_version(void);

struct VcvSolveOptions vcv_solve_options_default(void);

// Loads a dataset file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum VcvStatus vcv_dataset_load(const char *path, struct VcvDataset **out);

// Parses dataset text held in memory.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum VcvStatus vcv_dataset_parse(const char *text, struct VcvDataset **out);

// Simulates a dataset from a TOML scenario spec given as a string.
//
// # Safety
// `spec_toml` must be a NUL-terminated string; `out` must be writable.
enum VcvStatus vcv_dataset_simulate(const char *spec_toml, struct VcvDataset **out);

// Writes the dataset in the text format.
//
// # Safety
// `ds` must be a live dataset handle; `path` a NUL-terminated string.
enum VcvStatus vcv_dataset_save(const struct VcvDataset *ds, const char *path);

// Number of keyframes, 0 for a null handle.
//
// # Safety
// `ds` must be null or a live dataset handle.
size_t vcv_dataset_num_keyframes(const struct VcvDataset *ds);

// Number of flow measurements, 0 for a null handle.
//
// # Safety
// `ds` must be null or a live dataset handle.
size_t vcv_dataset_num_measurements(const struct VcvDataset *ds);

// # Safety
// `ds` must be null or a handle not yet freed.
void vcv_dataset_free(struct VcvDataset *ds);

// Optimizes the dataset graph and factors its information matrix.
// `opts` may be null for the defaults.
//
// # Safety
// `ds` must be a live dataset handle, `opts` null or valid, `out` writable.
enum VcvStatus vcv_solve(const struct VcvDataset *ds,
                         const struct VcvSolveOptions *opts,
                         struct VcvSolution **out);

// Number of optimized keyframe poses.
//
// # Safety
// `sol` must be null or a live solution handle.
size_t vcv_solution_num_poses(const struct VcvSolution *sol);

// Solver iterations, whether it converged, and the final cost.
//
// # Safety
// `sol` must be a live solution handle; the out pointers may be null.
enum VcvStatus vcv_solution_summary(const struct VcvSolution *sol,
                                    size_t *iterations,
                                    bool *converged,
                                    double *final_cost);

// Camera-to-world pose as `qw qx qy qz tx ty tz` into `out[7]`.
//
// # Safety
// `sol` must be a live solution handle; `out` must hold 7 doubles.
enum VcvStatus vcv_solution_pose(const struct VcvSolution *sol, size_t keyframe, double *out);

// 6×6 marginal covariance of a pose, row-major into `out[36]`, tangent
// order rotation then translation.
//
// # Safety
// `sol` must be a live solution handle; `out` must hold 36 doubles.
enum VcvStatus vcv_solution_marginal(const struct VcvSolution *sol, size_t keyframe, double *out);

// `log det` of a pose's marginal covariance.
//
// # Safety
// `sol` must be a live solution handle; `out` must be writable.
enum VcvStatus vcv_solution_logdet(const struct VcvSolution *sol, size_t keyframe, double *out);

// # Safety
// `sol` must be null or a handle not yet freed.
void vcv_solution_free(struct VcvSolution *sol);

// D-opt of the newest pose over growing keyframe windows. `opts` may be null.
//
// # Safety
// `ds` must be a live dataset handle, `opts` null or valid, `out` writable.
enum VcvStatus vcv_trend(const struct VcvDataset *ds,
                         const struct VcvSolveOptions *opts,
                         struct VcvTrend **out);

// # Safety
// `trend` must be null or a live trend handle.
size_t vcv_trend_len(const struct VcvTrend *trend);

// # Safety
// `trend` must be a live trend handle; `out` must be writable.
enum VcvStatus vcv_trend_entry(const struct VcvTrend *trend,
                               size_t index,
                               struct VcvTrendEntry *out);

// # Safety
// `trend` must be null or a handle not yet freed.
void vcv_trend_free(struct VcvTrend *trend);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOCOVAR_H */

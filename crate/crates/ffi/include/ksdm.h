#ifndef KSDM_H
#define KSDM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KsdmStatKind {
  KSDM_STAT_KIND_U = 0,
  KSDM_STAT_KIND_V = 1,
} KsdmStatKind;

/**
 * Result code of every fallible call.
 */
typedef enum KsdmStatus {
  KSDM_STATUS_OK = 0,
  KSDM_STATUS_NULL_POINTER = 1,
  KSDM_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Malformed JSON or an unsupported manifold/family combination.
   */
  KSDM_STATUS_CONFIG = 3,
  /**
   * Numerical failure, including an indefinite U-statistic fit.
   */
  KSDM_STATUS_NUMERIC = 4,
  /**
   * A Rust panic was caught at the boundary.
   */
  KSDM_STATUS_INTERNAL = 5,
} KsdmStatus;

/**
 * Minimum-KSD estimator for an exponential family.
 */
typedef struct KsdmEstimator KsdmEstimator;

/**
 * Stein kernel of a fixed model.
 */
typedef struct KsdmStein KsdmStein;

typedef struct KsdmGofResult {
  /**
   * `n` times the weighted statistic.
   */
  double statistic;
  double quantile;
  double p_value;
  bool reject;
  /**
   * The U-statistic fit was indefinite and its stationary point was used.
   */
  bool nonconvex;
  size_t clipped_eigenvalues;
} KsdmGofResult;

typedef struct KsdmFitInfo {
  double objective;
  double min_eigenvalue;
  size_t null_space_rank;
} KsdmFitInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library from the same thread.
 */
const char *ksdm_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ksdm_version(void);

/**
 * Build a Stein kernel from
 * `{"manifold": {...}, "family": {...}, "kernel": {...}}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum KsdmStatus ksdm_stein_new(const char *json, struct KsdmStein **out_handle);

/**
 * # Safety
 * `h` must come from [`ksdm_stein_new`] and not be used afterwards.
 */
void ksdm_stein_free(struct KsdmStein *h);

/**
 * Row and column count of a point.
 *
 * # Safety
 * `h` must be a live handle; `rows` and `cols` must be writable.
 */
enum KsdmStatus ksdm_stein_point_shape(const struct KsdmStein *h, size_t *rows, size_t *cols);

/**
 * `kappa_p(X, Y)` for two row-major points.
 *
 * # Safety
 * `x` and `y` must hold one point each; `result` must be writable.
 */
enum KsdmStatus ksdm_stein_eval(const struct KsdmStein *h,
                                const double *x,
                                const double *y,
                                double *result);

/**
 * U- and V-statistics of `n` points. `log_weights` may be null for an
 * unweighted sample.
 *
 * # Safety
 * `points` must hold `n` points and `log_weights`, if not null, `n` doubles.
 */
enum KsdmStatus ksdm_stein_stats(const struct KsdmStein *h,
                                 const double *points,
                                 size_t n,
                                 const double *log_weights,
                                 double *u_stat,
                                 double *v_stat);

/**
 * Goodness-of-fit test of the handle's model itself (no fitting).
 *
 * # Safety
 * As [`ksdm_stein_stats`]; `result` must be writable.
 */
enum KsdmStatus ksdm_stein_gof(const struct KsdmStein *h,
                               const double *points,
                               size_t n,
                               const double *log_weights,
                               enum KsdmStatKind kind,
                               double beta,
                               size_t n_sim,
                               uint64_t seed,
                               struct KsdmGofResult *result);

/**
 * Build an estimator from
 * `{"manifold": {...}, "family": "matrix_fisher", "kernel": {...}}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out_handle` must be writable.
 */
enum KsdmStatus ksdm_estimator_new(const char *json, struct KsdmEstimator **out_handle);

/**
 * # Safety
 * `h` must come from [`ksdm_estimator_new`] and not be used afterwards.
 */
void ksdm_estimator_free(struct KsdmEstimator *h);

/**
 * Length of the natural parameter vector: column-major `vec(A)` before
 * `vec(F)`.
 *
 * # Safety
 * `h` must be a live handle; `dim` must be writable.
 */
enum KsdmStatus ksdm_estimator_dim(const struct KsdmEstimator *h, size_t *dim);

/**
 * Minimum-KSD estimate into `theta` (`theta_len` must equal the dimension).
 * An indefinite U-statistic system returns [`KsdmStatus::Numeric`] and
 * still writes its stationary point.
 *
 * # Safety
 * As [`ksdm_stein_stats`]; `theta` must hold `theta_len` doubles; `info`
 * may be null.
 */
enum KsdmStatus ksdm_estimator_fit(const struct KsdmEstimator *h,
                                   const double *points,
                                   size_t n,
                                   const double *log_weights,
                                   enum KsdmStatKind kind,
                                   double *theta,
                                   size_t theta_len,
                                   struct KsdmFitInfo *info);

/**
 * Composite goodness-of-fit test of the family. With `use_stationary` an
 * indefinite U-statistic fit continues with its stationary point instead of
 * failing.
 *
 * # Safety
 * As [`ksdm_stein_stats`]; `result` must be writable.
 */
enum KsdmStatus ksdm_estimator_gof(const struct KsdmEstimator *h,
                                   const double *points,
                                   size_t n,
                                   const double *log_weights,
                                   enum KsdmStatKind kind,
                                   double beta,
                                   size_t n_sim,
                                   uint64_t seed,
                                   bool use_stationary,
                                   struct KsdmGofResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KSDM_H */

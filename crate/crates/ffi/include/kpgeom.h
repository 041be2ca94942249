#ifndef KPGEOM_H
#define KPGEOM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KpgStatus {
  KPG_STATUS_OK = 0,
  KPG_STATUS_NULL_POINTER = 1,
  /**
   * Malformed input or a violated precondition.
   */
  KPG_STATUS_INVALID = 2,
  /**
   * A numerical procedure failed on valid input.
   */
  KPG_STATUS_NUMERICAL = 3,
  KPG_STATUS_IO = 4,
  KPG_STATUS_PANIC = 5,
} KpgStatus;

/**
 * KP cone with base and unit axis.
 */
typedef struct KpgCone KpgCone;

/**
 * Weighted point cloud in R⁴.
 */
typedef struct KpgMeasure KpgMeasure;

/**
 * A point cloud or an analytic set, as an argument of distance functionals.
 */
typedef struct KpgSet KpgSet;

/**
 * Second moments at (x, r). Matrices are row-major.
 */
typedef struct KpgMoments {
  double b[4];
  double q[16];
  double trace;
  /**
   * Ascending.
   */
  double eigenvalues[4];
  /**
   * Eigenvector of the largest eigenvalue.
   */
  double axis[4];
} KpgMoments;

/**
 * A value and an upper bound on its discretization error.
 */
typedef struct KpgEstimate {
  double value;
  double error;
} KpgEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *kpg_last_error_message(void);

/**
 * Library version string (static).
 */
const char *kpg_version(void);

/**
 * Builds a measure from `n` points stored as 4n contiguous coordinates.
 * `weights` may be null for unit weights.
 *
 * # Safety
 * `coords` must hold 4n doubles, `weights` n doubles when non-null.
 */
enum KpgStatus kpg_measure_new(const double *coords,
                               const double *weights,
                               uintptr_t n,
                               uintptr_t dimension,
                               struct KpgMeasure **out);

/**
 * Reads a measure file (CSV with header x1,x2,x3,x4[,weight], or JSON).
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
enum KpgStatus kpg_measure_read(const char *path, struct KpgMeasure **out);

/**
 * H³-uniform samples of a KP cone in B(base, extent).
 *
 * # Safety
 * `base` and `axis` must hold 4 doubles.
 */
enum KpgStatus kpg_sample_cone(const double *base,
                               const double *axis,
                               double extent,
                               uintptr_t n,
                               uint64_t seed,
                               struct KpgMeasure **out);

/**
 * # Safety
 * `mu` must come from this library or be null.
 */
void kpg_measure_free(struct KpgMeasure *mu);

/**
 * Number of points; 0 for null.
 *
 * # Safety
 * `mu` must be a live handle or null.
 */
uintptr_t kpg_measure_len(const struct KpgMeasure *mu);

/**
 * # Safety
 * `mu` must be a live handle; `x` must hold 4 doubles.
 */
enum KpgStatus kpg_moments(const struct KpgMeasure *mu,
                           const double *x,
                           double r,
                           struct KpgMoments *out);

/**
 * # Safety
 * `base` and `axis` must hold 4 doubles.
 */
enum KpgStatus kpg_cone_new(const double *base, const double *axis, struct KpgCone **out);

/**
 * Cone based at x with the top eigenvector of the moments as axis. Fails
 * with [`KpgStatus::Numerical`] when λ₄ − λ₃ ≤ `gap_min`. `gap` may be null.
 *
 * # Safety
 * `mu` must be a live handle; `x` must hold 4 doubles.
 */
enum KpgStatus kpg_cone_from_moments(const struct KpgMeasure *mu,
                                     const double *x,
                                     double r,
                                     double gap_min,
                                     struct KpgCone **out,
                                     double *gap);

/**
 * # Safety
 * `c` must come from this library or be null.
 */
void kpg_cone_free(struct KpgCone *c);

/**
 * Writes the base and unit axis (4 doubles each; either may be null).
 *
 * # Safety
 * `c` must be a live handle.
 */
enum KpgStatus kpg_cone_get(const struct KpgCone *c, double *base, double *axis);

/**
 * Euclidean distance from p to the cone.
 *
 * # Safety
 * `c` must be a live handle; `p` must hold 4 doubles.
 */
enum KpgStatus kpg_cone_distance(const struct KpgCone *c, const double *p, double *out);

/**
 * Support of a measure as a distance argument.
 *
 * # Safety
 * `mu` must be a live handle.
 */
enum KpgStatus kpg_set_from_measure(const struct KpgMeasure *mu, struct KpgSet **out);

/**
 * # Safety
 * `c` must be a live handle.
 */
enum KpgStatus kpg_set_from_cone(const struct KpgCone *c, struct KpgSet **out);

/**
 * Hyperplane through `point` with the given normal.
 *
 * # Safety
 * `point` and `normal` must hold 4 doubles.
 */
enum KpgStatus kpg_set_from_hyperplane(const double *point,
                                       const double *normal,
                                       struct KpgSet **out);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void kpg_set_free(struct KpgSet *s);

/**
 * Two-sided relative distance D^{x,r}(a, b).
 *
 * # Safety
 * `a`, `b` must be live handles; `x` must hold 4 doubles.
 */
enum KpgStatus kpg_relative_hausdorff(const struct KpgSet *a,
                                      const struct KpgSet *b,
                                      const double *x,
                                      double r,
                                      struct KpgEstimate *out);

/**
 * Doubling deviation at (x, r) on the default τ grid and radius mesh.
 *
 * # Safety
 * `mu` must be a live handle; `x` must hold 4 doubles.
 */
enum KpgStatus kpg_doubling_deviation(const struct KpgMeasure *mu,
                                      const double *x,
                                      double r,
                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KPGEOM_H */

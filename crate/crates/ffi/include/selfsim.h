#ifndef SELFSIM_H
#define SELFSIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum SelfsimStatus {
  SELFSIM_STATUS_OK = 0,
  SELFSIM_STATUS_NULL_POINTER = 1,
  SELFSIM_STATUS_INVALID_ARGUMENT = 2,
  SELFSIM_STATUS_NUMERICAL = 3,
  SELFSIM_STATUS_NOT_FOUND = 4,
  SELFSIM_STATUS_PANIC = 5,
} SelfsimStatus;

/**
 * Dimensions p, q of the symmetry group SO(p)×SO(q).
 */
typedef struct SelfsimParams SelfsimParams;

/**
 * A profile curve (r(s), u(s)) in the quarter plane.
 */
typedef struct SelfsimProfile SelfsimProfile;

/**
 * One sample of a profile curve.
 */
typedef struct SelfsimPoint {
  double s;
  double r;
  double u;
  double theta;
  double k;
} SelfsimPoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *selfsim_version(void);

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *selfsim_last_error(void);

/**
 * Creates a parameter handle for SO(p)×SO(q).
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
enum SelfsimStatus selfsim_params_new(size_t p, size_t q, struct SelfsimParams **out);

/**
 * Releases a parameter handle; null is ignored.
 *
 * # Safety
 * `params` must come from [`selfsim_params_new`] and not be freed twice.
 */
void selfsim_params_free(struct SelfsimParams *params);

/**
 * Slope λ_s of the minimal cone u = λ_s r.
 *
 * # Safety
 * `params` must be a live handle and `out` writable.
 */
enum SelfsimStatus selfsim_cone_slope(const struct SelfsimParams *params, double *out);

/**
 * Asymptotic slope of the expander from (0, a) and its error bar.
 *
 * # Safety
 * `params` must be a live handle; `slope` and `error_bar` writable (the latter may be null).
 */
enum SelfsimStatus selfsim_expander_slope(const struct SelfsimParams *params,
                                          double a,
                                          double *slope,
                                          double *error_bar);

/**
 * Smallest aperture (radians) of rotationally symmetric expanders in R^n.
 *
 * # Safety
 * `alpha` must be writable.
 */
enum SelfsimStatus selfsim_critical_angle(size_t n, double *alpha);

/**
 * Axis height a_k of the k-th shrinker (k ≥ 1).
 *
 * # Safety
 * `params` must be a live handle and `a` writable.
 */
enum SelfsimStatus selfsim_shrinker_height(const struct SelfsimParams *params, size_t k, double *a);

/**
 * Profile of the k-th shrinker, truncated at its trusted radius.
 *
 * # Safety
 * `params` must be a live handle and `out` writable.
 */
enum SelfsimStatus selfsim_shrinker_profile(const struct SelfsimParams *params,
                                            size_t k,
                                            struct SelfsimProfile **out);

/**
 * Profile of the expander from (0, a).
 *
 * # Safety
 * `params` must be a live handle and `out` writable.
 */
enum SelfsimStatus selfsim_expander_profile(const struct SelfsimParams *params,
                                            double a,
                                            struct SelfsimProfile **out);

/**
 * Minimal profile from (0, 1).
 *
 * # Safety
 * `params` must be a live handle and `out` writable.
 */
enum SelfsimStatus selfsim_companion_profile(const struct SelfsimParams *params,
                                             struct SelfsimProfile **out);

/**
 * Profile of the round sphere of the given radius.
 *
 * # Safety
 * `params` must be a live handle and `out` writable.
 */
enum SelfsimStatus selfsim_sphere_profile(const struct SelfsimParams *params,
                                          double radius,
                                          size_t samples,
                                          struct SelfsimProfile **out);

/**
 * Number of samples of a profile; 0 for null.
 *
 * # Safety
 * `profile` must be null or a live handle.
 */
size_t selfsim_profile_len(const struct SelfsimProfile *profile);

/**
 * Copies sample `index` into `out`.
 *
 * # Safety
 * `profile` must be a live handle and `out` writable.
 */
enum SelfsimStatus selfsim_profile_point(const struct SelfsimProfile *profile,
                                         size_t index,
                                         struct SelfsimPoint *out);

/**
 * Gaussian density of the profile's hypersurface at time t for the kernel
 * centred at (x0_r, x0_u) and time t0 > t.
 *
 * # Safety
 * `profile` must be a live handle; `phi` writable; `tail_bound` writable or null.
 */
enum SelfsimStatus selfsim_gaussian_density(const struct SelfsimProfile *profile,
                                            double x0_r,
                                            double x0_u,
                                            double t0,
                                            double t,
                                            double *phi,
                                            double *tail_bound);

/**
 * Releases a profile handle; null is ignored.
 *
 * # Safety
 * `profile` must come from this library and not be freed twice.
 */
void selfsim_profile_free(struct SelfsimProfile *profile);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SELFSIM_H */

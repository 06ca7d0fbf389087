/* C ABI for the fracmc Monte Carlo fractional-derivative estimators.
 *
 * Link against the fracmc_ffi cdylib/staticlib. All functions return an
 * error code (FRACMC_OK on success) and write results through out
 * pointers. Handles are opaque and must be freed exactly once with
 * fracmc_estimator_free.
 */

#ifndef FRACMC_H
#define FRACMC_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Error codes. */
#define FRACMC_OK 0
#define FRACMC_ERR_NULL_POINTER 1
#define FRACMC_ERR_INVALID_ORDER 2
#define FRACMC_ERR_INVALID_ARGUMENT 3
#define FRACMC_ERR_ESTIMATE_FAILED 4

/* Uniform stream kinds. */
#define FRACMC_STREAM_PSEUDO 0
#define FRACMC_STREAM_SOBOL 1
#define FRACMC_STREAM_HALTON 2

/* Opaque estimator handle. */
typedef struct FracmcEstimator FracmcEstimator;

/* Scalar field callback: evaluates f at x. `user` is passed through
 * unchanged. */
typedef double (*fracmc_field_fn)(double x, void *user);

/* Creates an estimator of fractional order `alpha` (non-integer, in
 * (0,1) or (1,2)) with N approximation points and K repeats per
 * estimate. `stream` selects the uniform source; `seed` applies to the
 * pseudo-random stream. On success *out owns the new handle. */
int32_t fracmc_estimator_new(double alpha,
                             size_t n,
                             size_t k,
                             int32_t stream,
                             uint64_t seed,
                             FracmcEstimator **out);

/* Frees a handle. Null is a no-op. */
void fracmc_estimator_free(FracmcEstimator *handle);

/* Left-sided Gruenwald-Letnikov derivative of order alpha over [lb, x]. */
int32_t fracmc_gl_left(FracmcEstimator *handle,
                       fracmc_field_fn f,
                       void *user,
                       double x,
                       double lb,
                       double *out);

/* Right-sided Gruenwald-Letnikov derivative of order alpha over [x, ub]. */
int32_t fracmc_gl_right(FracmcEstimator *handle,
                        fracmc_field_fn f,
                        void *user,
                        double x,
                        double ub,
                        double *out);

/* Riesz-type derivative 1/(2 cos(pi*alpha/2)) * (left + right) for
 * orders in (1,2); requires lb < x < ub. */
int32_t fracmc_riesz(FracmcEstimator *handle,
                     fracmc_field_fn f,
                     void *user,
                     double x,
                     double lb,
                     double ub,
                     double *out);

/* Caputo time derivative of order alpha in (0,1) at t > 0; `u0` is the
 * initial value u(0). */
int32_t fracmc_caputo(FracmcEstimator *handle,
                      fracmc_field_fn u,
                      void *user,
                      double t,
                      double u0,
                      double *out);

/* Library version as a static NUL-terminated string. */
const char *fracmc_version(void);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* FRACMC_H */

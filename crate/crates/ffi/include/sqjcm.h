#ifndef SQJCM_H
#define SQJCM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of a call. Nonzero values match the command-line exit codes where
 both exist.
 */
typedef enum SqjcmStatus {
  SQJCM_STATUS_OK = 0,
  /*
   A required pointer argument was null.
   */
  SQJCM_STATUS_NULL_ARGUMENT = 1,
  /*
   An argument was outside the domain of the operation.
   */
  SQJCM_STATUS_DOMAIN = 2,
  /*
   A series failed to converge.
   */
  SQJCM_STATUS_CONVERGENCE = 3,
  /*
   The truncated photon-number space was too small.
   */
  SQJCM_STATUS_TRUNCATION = 4,
  /*
   A caller-provided buffer was too short.
   */
  SQJCM_STATUS_BUFFER_TOO_SMALL = 6,
  /*
   An unexpected internal failure.
   */
  SQJCM_STATUS_INTERNAL = 7,
} SqjcmStatus;

/*
 Model parameters: displacement `α = a e^{iθ}`, squeezing `ζ = r e^{iφ}`,
 initial amplitude `β = b e^{iχ}`, coupling `λ` and detuning `Δ`.
 */
typedef struct SqjcmParams SqjcmParams;

/*
 Expansion coefficients of the initial field with tail bookkeeping.
 */
typedef struct SqjcmSeries SqjcmSeries;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message describing the most recent failure on this thread, or null. The
 pointer stays valid until the next call on the same thread.
 */
const char *sqjcm_last_error(void);

/*
 Library version as a static nul-terminated string.
 */
const char *sqjcm_version(void);

/*
 Validates parameters and stores a new handle in `*out`. Phases are
 reduced to `[0, 2π)`.

 # Safety
 `out` must be null or valid for writing one pointer.
 */
enum SqjcmStatus sqjcm_params_new(double a,
                                  double theta,
                                  double r,
                                  double phi,
                                  double b,
                                  double chi,
                                  double lambda,
                                  double delta,
                                  struct SqjcmParams **out);

/*
 Releases a parameter handle. Null is ignored.

 # Safety
 `params` must be null or a handle from [`sqjcm_params_new`] not yet freed.
 */
void sqjcm_params_free(struct SqjcmParams *params);

/*
 Whether `φ = 2θ = 2χ` holds (mod 2π); 0 for a null handle.

 # Safety
 `params` must be null or a live handle.
 */
bool sqjcm_params_is_phase_aligned(const struct SqjcmParams *params);

/*
 Builds the coefficient series with `1 − Σ|b_n|² < tail_target` and stores
 a new handle in `*out`.

 # Safety
 `params` must be a live handle and `out` valid for writing one pointer.
 */
enum SqjcmStatus sqjcm_series_build(const struct SqjcmParams *params,
                                    double tail_target,
                                    struct SqjcmSeries **out);

/*
 Releases a series handle. Null is ignored.

 # Safety
 `series` must be null or a handle from [`sqjcm_series_build`] not yet freed.
 */
void sqjcm_series_free(struct SqjcmSeries *series);

/*
 Number of stored coefficients, `n_max + 1`; 0 for a null handle.

 # Safety
 `series` must be null or a live handle.
 */
size_t sqjcm_series_len(const struct SqjcmSeries *series);

/*
 Estimated probability beyond the stored coefficients; NaN for a null
 handle.

 # Safety
 `series` must be null or a live handle.
 */
double sqjcm_series_tail_mass(const struct SqjcmSeries *series);

/*
 Copies real and imaginary parts of `b_n` into `re` and `im`, each of
 length `len ≥ sqjcm_series_len(series)`.

 # Safety
 `re` and `im` must be valid for writing `len` values.
 */
enum SqjcmStatus sqjcm_series_coefficients(const struct SqjcmSeries *series,
                                           double *re,
                                           double *im,
                                           size_t len);

/*
 Ground-state probability at each of the `len` strictly increasing times
 `lambda_t` (units of `λt`), written to `out`. Uses the detuning stored in
 `params`.

 # Safety
 `times` and `out` must be valid for `len` values.
 */
enum SqjcmStatus sqjcm_ground_prob(const struct SqjcmParams *params,
                                   const struct SqjcmSeries *series,
                                   const double *times,
                                   size_t len,
                                   double *out);

/*
 Ground-state probability for an unsqueezed coherent field of amplitude `b`.

 # Safety
 `times` and `out` must be valid for `len` values.
 */
enum SqjcmStatus sqjcm_ground_prob_jcm(double b, const double *times, size_t len, double *out);

/*
 Ground-state probability by direct integration in a photon-number space of
 dimension `retained`, escalating up to 2048 when truncation is detected.

 # Safety
 `times` and `out` must be valid for `len` values.
 */
enum SqjcmStatus sqjcm_evolve(const struct SqjcmParams *params,
                              size_t retained,
                              const double *times,
                              size_t len,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SQJCM_H */

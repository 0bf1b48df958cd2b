#ifndef DELAYQ_H
#define DELAYQ_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum DelayqStatus {
  DELAYQ_STATUS_OK = 0,
  DELAYQ_STATUS_NULL_POINTER = 1,
  DELAYQ_STATUS_INVALID_UTF8 = 2,
  DELAYQ_STATUS_INVALID_PARAMETER = 3,
  DELAYQ_STATUS_CONFIG = 4,
  DELAYQ_STATUS_DIMENSION = 5,
  DELAYQ_STATUS_UNSUPPORTED = 6,
  DELAYQ_STATUS_NON_EXPONENTIAL_DELAY = 7,
  DELAYQ_STATUS_SCOPE = 8,
  DELAYQ_STATUS_NUMERICAL = 9,
  DELAYQ_STATUS_BUFFER_TOO_SMALL = 10,
  DELAYQ_STATUS_IO = 11,
  DELAYQ_STATUS_PANIC = 99,
} DelayqStatus;

// Opaque model handle.
typedef struct DelayqModel DelayqModel;

// Opaque memoized moment table.
typedef struct DelayqMoments DelayqMoments;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *delayq_version(void);

// Message of the last failed call on this thread, or NULL. Valid until the next call.
const char *delayq_last_error_message(void);

// Parses a model from NUL-terminated JSON.
//
// # Safety
// `json` must be a valid C string and `out` a valid pointer.
enum DelayqStatus delayq_model_from_json(const char *json, struct DelayqModel **out);

// Releases a model. NULL is ignored.
//
// # Safety
// `model` must come from `delayq_model_from_json` and not be used afterwards.
void delayq_model_free(struct DelayqModel *model);

// Number of customer types `k`.
//
// # Safety
// Pointers must be valid.
enum DelayqStatus delayq_model_k(const struct DelayqModel *model, size_t *out);

// Creates a moment table; needs exponential delays with one common rate.
//
// # Safety
// Pointers must be valid.
enum DelayqStatus delayq_moments_new(const struct DelayqModel *model, struct DelayqMoments **out);

// Releases a moment table. NULL is ignored.
//
// # Safety
// `table` must come from `delayq_moments_new` and not be used afterwards.
void delayq_moments_free(struct DelayqMoments *table);

// Stationary moment `chi_n` for the index `n[0..k]`.
//
// # Safety
// `n` must point to `k` entries; other pointers must be valid.
enum DelayqStatus delayq_chi(struct DelayqMoments *table, const uint32_t *n, size_t k, double *out);

// Uniform bound `R_n >= sup_t M~_n(t)`.
//
// # Safety
// `n` must point to `k` entries; other pointers must be valid.
enum DelayqStatus delayq_bound_r(const struct DelayqModel *model,
                                 const uint32_t *n,
                                 size_t k,
                                 double *out);

// `M~_n` on the grid `0, h, ..., t_max` (Richardson-extrapolated).
//
// Writes the number of grid points to `len`. When `values` is NULL or
// `capacity` is too small nothing else is written and `BufferTooSmall` is
// returned, so callers can size the buffer with a first call.
//
// # Safety
// `values` must hold `capacity` doubles when not NULL; other pointers must be valid.
enum DelayqStatus delayq_transient(const struct DelayqModel *model,
                                   const uint32_t *n,
                                   size_t k,
                                   double h,
                                   double t_max,
                                   double *values,
                                   size_t capacity,
                                   size_t *len);

// Limiting workload mean and its covariance with the queue size.
//
// # Safety
// Pointers must be valid.
enum DelayqStatus delayq_workload_limits(const struct DelayqModel *model,
                                         double *mean,
                                         double *cov);

// Limit `chi` and coefficient `A*` of `e^{-mu t}` in the expansion of the
// first moment of type `type_index` (zero-based), all roots kept.
//
// # Safety
// Pointers must be valid.
enum DelayqStatus delayq_expansion_first(const struct DelayqModel *model,
                                         size_t type_index,
                                         double *chi,
                                         double *a_star);

// Monte Carlo estimate of `M~_n(t)` with its standard error.
//
// # Safety
// `n` must point to `k` entries; other pointers must be valid.
enum DelayqStatus delayq_simulate_moment(const struct DelayqModel *model,
                                         const uint32_t *n,
                                         size_t k,
                                         double t,
                                         size_t reps,
                                         uint64_t seed,
                                         double *estimate,
                                         double *std_error);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DELAYQ_H */

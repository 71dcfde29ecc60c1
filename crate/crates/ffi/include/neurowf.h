#ifndef NEUROWF_H
#define NEUROWF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NwfStatus {
  NWF_STATUS_OK = 0,
  NWF_STATUS_NULL_POINTER = 1,
  NWF_STATUS_INVALID_INPUT = 2,
  NWF_STATUS_INSUFFICIENT_DATA = 3,
  NWF_STATUS_NUMERICAL = 4,
  NWF_STATUS_IO = 5,
  NWF_STATUS_PANIC = 6,
} NwfStatus;

typedef enum NwfLabel {
  NWF_LABEL_CONTROL = 0,
  NWF_LABEL_MTBI = 1,
} NwfLabel;

/**
 * Fitted model bundle.
 */
typedef struct NwfModel NwfModel;

/**
 * Quantile function on the 1025-level grid.
 */
typedef struct NwfQuantile NwfQuantile;

typedef struct NwfDecision {
  enum NwfLabel label;
  /**
   * Distance to the control prototype.
   */
  double d1;
  /**
   * Distance to the mTBI prototype.
   */
  double d2;
  double k;
} NwfDecision;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL after a success.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *nwf_last_error_message(void);

/**
 * Static NUL-terminated version string.
 */
const char *nwf_version(void);

/**
 * Number of quantile levels in every quantile function (1025).
 */
size_t nwf_quantile_levels(void);

/**
 * Estimates a quantile function from raw samples.
 * `n_grid` must be a power of two; pass 0 for the defaults (4096 bins,
 * padding 0.1).
 *
 * # Safety
 * `samples` must point to `n` readable doubles; `out` must be writable.
 */
enum NwfStatus nwf_quantile_estimate(const double *samples,
                                     size_t n,
                                     size_t n_grid,
                                     double pad_fraction,
                                     struct NwfQuantile **out);

/**
 * Wraps caller-provided nondecreasing values on the standard grid.
 *
 * # Safety
 * `values` must point to `len` readable doubles; `out` must be writable.
 */
enum NwfStatus nwf_quantile_from_values(const double *values, size_t len, struct NwfQuantile **out);

/**
 * Copies the quantile values into `dst`, which must hold `nwf_quantile_levels()` doubles.
 *
 * # Safety
 * `q` must be a live handle; `dst` must point to `len` writable doubles.
 */
enum NwfStatus nwf_quantile_values(const struct NwfQuantile *q, double *dst, size_t len);

/**
 * 2-Wasserstein distance between two quantile functions.
 *
 * # Safety
 * `a` and `b` must be live handles; `out` must be writable.
 */
enum NwfStatus nwf_wasserstein_distance(const struct NwfQuantile *a,
                                        const struct NwfQuantile *b,
                                        double *out);

/**
 * # Safety
 * `q` must be NULL or a handle not yet freed.
 */
void nwf_quantile_free(struct NwfQuantile *q);

/**
 * Loads a model bundle written by `neurowf fit`.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
 */
enum NwfStatus nwf_model_load(const char *path, struct NwfModel **out);

/**
 * Parses a model bundle from JSON bytes.
 *
 * # Safety
 * `json` must point to `len` readable bytes; `out` must be writable.
 */
enum NwfStatus nwf_model_from_json(const uint8_t *json, size_t len, struct NwfModel **out);

/**
 * Selected decision threshold `k`.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum NwfStatus nwf_model_threshold(const struct NwfModel *model, double *out);

/**
 * Covariate dimension expected by [`nwf_model_classify`].
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum NwfStatus nwf_model_covariate_dim(const struct NwfModel *model, size_t *out);

/**
 * Classifies one subject given its quantile function and covariates.
 *
 * # Safety
 * `model` and `q` must be live handles; `covariates` must point to `p`
 * readable doubles; `out` must be writable.
 */
enum NwfStatus nwf_model_classify(const struct NwfModel *model,
                                  const struct NwfQuantile *q,
                                  const double *covariates,
                                  size_t p,
                                  struct NwfDecision *out);

/**
 * Estimates the subject's quantile function with the model's settings, then classifies.
 *
 * # Safety
 * `model` must be a live handle; `samples` must point to `n` readable
 * doubles and `covariates` to `p`; `out` must be writable.
 */
enum NwfStatus nwf_model_classify_samples(const struct NwfModel *model,
                                          const double *samples,
                                          size_t n,
                                          const double *covariates,
                                          size_t p,
                                          struct NwfDecision *out);

/**
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void nwf_model_free(struct NwfModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NEUROWF_H */

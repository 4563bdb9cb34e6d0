#ifndef AUGFORGET_H
#define AUGFORGET_H

/* Generated by cbindgen from augforget-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every FFI call.
 */
typedef enum {
  AF_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  AF_STATUS_NULL_POINTER = 1,
  /**
   * A parameter was outside its valid range.
   */
  AF_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Buffer lengths or shapes disagree.
   */
  AF_STATUS_LENGTH_MISMATCH = 3,
  /**
   * Cosine alignment was requested on a zero-norm vector.
   */
  AF_STATUS_ZERO_NORM = 4,
  /**
   * File I/O failed.
   */
  AF_STATUS_IO_ERROR = 5,
  /**
   * A checkpoint was malformed (magic, version, or size).
   */
  AF_STATUS_BAD_FORMAT = 6,
  /**
   * A path was not valid UTF-8.
   */
  AF_STATUS_BAD_PATH = 7,
} AfStatus;

/**
 * Opaque classifier handle.
 */
typedef struct AfModel AfModel;

/**
 * Library version as a static NUL-terminated string; do not free.
 */
const char *af_version(void);

/**
 * Short static name for a status code; do not free.
 */
const char *af_status_name(AfStatus status);

/**
 * Creates a He-initialized model from `n_sizes` layer widths and a seed.
 *
 * # Safety
 * `layer_sizes` must point to `n_sizes` readable u32 values and `out` must
 * be a valid pointer; the returned handle must be released with
 * [`af_model_free`].
 */
AfStatus af_model_new(const uint32_t *layer_sizes, uintptr_t n_sizes, uint64_t seed, AfModel **out);

/**
 * Loads a model from a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer; the
 * returned handle must be released with [`af_model_free`].
 */
AfStatus af_model_load(const char *path, AfModel **out);

/**
 * Writes the model to a checkpoint file.
 *
 * # Safety
 * `model` must be a live handle from this library and `path` a
 * NUL-terminated string.
 */
AfStatus af_model_save(const AfModel *model, const char *path);

/**
 * Reports the total parameter count N.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
AfStatus af_model_param_count(const AfModel *model, uintptr_t *out);

/**
 * Copies the canonical flat parameters into `buf` (length must equal N).
 *
 * # Safety
 * `model` must be a live handle; `buf` must point to `len` writable f64s.
 */
AfStatus af_model_get_params(const AfModel *model, double *buf, uintptr_t len);

/**
 * Overwrites the model parameters from `buf` (length must equal N).
 *
 * # Safety
 * `model` must be a live handle; `buf` must point to `len` readable f64s.
 */
AfStatus af_model_set_params(AfModel *model, const double *buf, uintptr_t len);

/**
 * Releases a model handle. Null is a no-op.
 *
 * # Safety
 * `model` must be null or a handle produced by this library, not yet freed.
 */
void af_model_free(AfModel *model);

/**
 * Fraction of coordinates whose gradient signs differ (zero is its own
 * sign).
 *
 * # Safety
 * `g1` and `g2` must point to `len` readable f64s; `out` must be writable.
 */
AfStatus af_sign_discrepancy(const double *g1, const double *g2, uintptr_t len, double *out);

/**
 * Cosine similarity between two gradients; fails on zero-norm input.
 *
 * # Safety
 * `g1` and `g2` must point to `len` readable f64s; `out` must be writable.
 */
AfStatus af_cosine_alignment(const double *g1, const double *g2, uintptr_t len, double *out);

/**
 * Linear CKA between two row-major feature matrices sharing `rows` probe
 * rows.
 *
 * # Safety
 * `x` must point to `rows * x_cols` readable f64s, `y` to `rows * y_cols`;
 * `out` must be writable.
 */
AfStatus af_linear_cka(const double *x,
                       uintptr_t rows,
                       uintptr_t x_cols,
                       const double *y,
                       uintptr_t y_cols,
                       double *out);

/**
 * Per-parameter absolute drift |theta - theta_s|.
 *
 * # Safety
 * `theta` and `theta_s` must point to `len` readable f64s; `out` must point
 * to `len` writable f64s.
 */
AfStatus af_drift(const double *theta, const double *theta_s, uintptr_t len, double *out);

/**
 * Writes the 0/1 mask selecting the top p% drift entries into `out_mask`.
 *
 * # Safety
 * `d` must point to `len` readable f64s; `out_mask` to `len` writable
 * bytes.
 */
AfStatus af_top_p_mask(const double *d, uintptr_t len, double p, uint8_t *out_mask);

/**
 * Selective averaging: masked coordinates become (theta + theta_s)/2,
 * unmasked pass through.
 *
 * # Safety
 * `theta`, `theta_s`, and `mask` must point to `len` readable elements;
 * `out` must point to `len` writable f64s.
 */
AfStatus af_selective_merge(const double *theta,
                            const double *theta_s,
                            const uint8_t *mask,
                            uintptr_t len,
                            double *out);

/**
 * One full merge tick in place: ranks |theta - theta_s|, averages the top
 * p% of `theta` toward `theta_s`, then refreshes `theta_s` to the merged
 * weights (the scheduler's snapshot rule).
 *
 * # Safety
 * `theta` and `theta_s` must point to `len` writable f64s.
 */
AfStatus af_merge_by_drift(double *theta, double *theta_s, uintptr_t len, double p);

#endif /* AUGFORGET_H */

#ifndef APMIONET_H
#define APMIONET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ApmStatus {
  APM_STATUS_OK = 0,
  APM_STATUS_NULL_POINTER = 1,
  APM_STATUS_INVALID_ARGUMENT = 2,
  APM_STATUS_IO = 3,
  APM_STATUS_FORMAT = 4,
  APM_STATUS_NUMERIC = 5,
  APM_STATUS_PANIC = 6,
} ApmStatus;

/**
 * Trained operator triple.
 */
typedef struct ApmModel ApmModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread ("" after a success).
 * The pointer stays valid until the next call into the library.
 */
const char *apm_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *apm_version(void);

/**
 * Load a checkpoint file written by the `train` command.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum ApmStatus apm_model_load(const char *path, struct ApmModel **out);

/**
 * Load a checkpoint from memory.
 *
 * # Safety
 * `bytes` must point to `len` readable bytes and `out` be writable.
 */
enum ApmStatus apm_model_load_bytes(const uint8_t *bytes, size_t len, struct ApmModel **out);

/**
 * Freshly initialized triple with the given sizes, as training starts from.
 *
 * # Safety
 * `out` must be a writable pointer.
 */
enum ApmStatus apm_model_init(uint64_t seed,
                              size_t width,
                              size_t depth,
                              size_t latent,
                              size_t sensors_x,
                              size_t sensors_v,
                              double period,
                              struct ApmModel **out);

/**
 * Serialize a model in checkpoint format. With `buf` null (or too small)
 * only the required size is written to `len_out`.
 *
 * # Safety
 * `model` must be a live handle; `buf` null or `cap` writable bytes.
 */
enum ApmStatus apm_model_save_bytes(const struct ApmModel *model,
                                    uint8_t *buf,
                                    size_t cap,
                                    size_t *len_out);

/**
 * Expected sensor counts: `f0` takes `sensors_x * sensors_v` values
 * (row-major in x), `h` takes `sensors_x`.
 *
 * # Safety
 * `model` must be a live handle; the outputs writable or null.
 */
enum ApmStatus apm_model_sensor_sizes(const struct ApmModel *model, size_t *f0_len, size_t *h_len);

/**
 * Number of trainable parameters.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum ApmStatus apm_model_num_params(const struct ApmModel *model, size_t *out);

/**
 * Evaluate the model for one input couple at `n_points` points given as
 * `(t, x, v)` triples. Each non-null output receives `n_points` values:
 * `f`, `ρ`, `φ` and `E = -∂xφ`.
 *
 * # Safety
 * All non-null pointers must reference arrays of the stated lengths.
 */
enum ApmStatus apm_model_eval(const struct ApmModel *model,
                              const double *f0_sensors,
                              size_t f0_len,
                              const double *h_sensors,
                              size_t h_len,
                              const double *points,
                              size_t n_points,
                              double *f_out,
                              double *rho_out,
                              double *phi_out,
                              double *e_out);

/**
 * Release a model handle. Null is ignored.
 *
 * # Safety
 * `model` must come from one of the load/init functions and not be used
 * afterwards.
 */
void apm_model_free(struct ApmModel *model);

/**
 * Solve `-φ'' = rhs` on `n` periodic nodes of a period of length `period`
 * (the mean of `rhs` is removed). Either output may be null.
 *
 * # Safety
 * `rhs` must hold `n` values and each non-null output `n` slots.
 */
enum ApmStatus apm_poisson_periodic(const double *rhs,
                                    size_t n,
                                    double period,
                                    double *phi_out,
                                    double *e_out);

/**
 * `sqrt(Σ|pred − ref|² / Σ|ref|²)` over `n` values.
 *
 * # Safety
 * `pred` and `reference` must hold `n` values; `out` must be writable.
 */
enum ApmStatus apm_relative_l2(const double *pred, const double *reference, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* APMIONET_H */

#ifndef SSDGM_H
#define SSDGM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SsdgmStatus {
  SSDGM_STATUS_OK = 0,
  SSDGM_STATUS_NULL_POINTER = 1,
  SSDGM_STATUS_INVALID_ARGUMENT = 2,
  SSDGM_STATUS_IO = 3,
  SSDGM_STATUS_PARSE = 4,
  SSDGM_STATUS_DIMENSION = 5,
  SSDGM_STATUS_NUMERIC = 6,
  SSDGM_STATUS_UNSUPPORTED = 7,
  SSDGM_STATUS_PANIC = 8,
} SsdgmStatus;

typedef enum SsdgmMethod {
  SSDGM_METHOD_DNN = 0,
  SSDGM_METHOD_SSLPE = 1,
  SSDGM_METHOD_SSLAPD = 2,
} SsdgmMethod;

/**
 * Opaque trained model.
 */
typedef struct SsdgmModel SsdgmModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or an empty string.
 * The pointer stays valid until the next call on the same thread.
 */
const char *ssdgm_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ssdgm_version(void);

/**
 * Loads a checkpoint file into `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SsdgmStatus ssdgm_model_load(const char *path, struct SsdgmModel **out);

/**
 * Parses checkpoint text into `*out`.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SsdgmStatus ssdgm_model_parse(const char *text, struct SsdgmModel **out);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void ssdgm_model_free(struct SsdgmModel *model);

/**
 * Number of classes, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t ssdgm_model_num_classes(const struct SsdgmModel *model);

/**
 * Input dimension, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t ssdgm_model_input_dim(const struct SsdgmModel *model);

/**
 * Latent dimension, or 0 for the baseline and null handles.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t ssdgm_model_latent_dim(const struct SsdgmModel *model);

/**
 * Writes the model's method to `*out`.
 *
 * # Safety
 * `model` must be null or a live handle; `out` must be valid.
 */
enum SsdgmStatus ssdgm_model_method(const struct SsdgmModel *model, enum SsdgmMethod *out);

/**
 * Predictive class probabilities for `n` points.
 *
 * `x` holds `n * input_dim` values and `out_probs` receives
 * `n * num_classes`. Generative models run `chains` Gibbs chains of
 * `gibbs_steps` sweeps seeded by `seed`; `vote` selects label voting over
 * probability averaging. The baseline ignores the sampling arguments.
 *
 * # Safety
 * Buffers must hold the sizes above; `model` must be a live handle.
 */
enum SsdgmStatus ssdgm_predict(const struct SsdgmModel *model,
                               const double *x,
                               size_t n,
                               size_t gibbs_steps,
                               size_t chains,
                               uint64_t seed,
                               bool vote,
                               double *out_probs);

/**
 * Draws `n` ancestral samples from a generative model.
 *
 * `out_x` receives `n * input_dim` values, `out_y` `n` labels, and
 * `out_z`, if not null, `n * latent_dim` values.
 *
 * # Safety
 * Buffers must hold the sizes above; `model` must be a live handle.
 */
enum SsdgmStatus ssdgm_generate(const struct SsdgmModel *model,
                                size_t n,
                                uint64_t seed,
                                double *out_x,
                                size_t *out_y,
                                double *out_z);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SSDGM_H */

#ifndef IMGNILM_H
#define IMGNILM_H

/* Generated by cbindgen from the imgnilm-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * The call succeeded.
 */
#define IMGNILM_OK 0

/**
 * A required pointer argument was null.
 */
#define IMGNILM_ERR_NULL_ARGUMENT 1

/**
 * The file could not be read.
 */
#define IMGNILM_ERR_IO 2

/**
 * The arguments or file contents failed validation.
 */
#define IMGNILM_ERR_INVALID 3

/**
 * An internal invariant broke; the library state is still sound.
 */
#define IMGNILM_ERR_PANIC 4

/**
 * A loaded classifier. Create with `imgnilm_model_load`, destroy with
 * `imgnilm_model_free`; safe to share across threads for prediction.
 */
typedef struct ImgnilmModel ImgnilmModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The library version as a static nul-terminated string.
 */
const char *imgnilm_version(void);

/**
 * Load a model checkpoint from `path` (UTF-8) into `*out_model`.
 *
 * On failure `*out_model` is untouched and the error message is written
 * to `err` (up to `err_cap` bytes including the terminator).
 *
 * # Safety
 * `path` must point to a nul-terminated string; `out_model` must be a
 * valid pointer; `err` may be null.
 */
int32_t imgnilm_model_load(const char *path,
                           struct ImgnilmModel **out_model,
                           char *err,
                           size_t err_cap);

/**
 * Release a model returned by `imgnilm_model_load`. A null pointer is a
 * no-op.
 *
 * # Safety
 * `model` must be a pointer from `imgnilm_model_load` that has not been
 * freed already.
 */
void imgnilm_model_free(struct ImgnilmModel *model);

/**
 * Side length of the square RGB input the model expects, or 0 if `model`
 * is null.
 *
 * # Safety
 * `model` must be null or a live pointer from `imgnilm_model_load`.
 */
size_t imgnilm_model_input_side(const struct ImgnilmModel *model);

/**
 * Classify a raw RGB8 image of exactly side × side × 3 bytes, row-major.
 *
 * Writes 0 (appliance absent) or 1 (appliance active) to `out_label` and
 * the two class probabilities to `out_probs` (length 2); either output
 * pointer may be null to skip it.
 *
 * # Safety
 * `model` must be live; `pixels` must point to `pixels_len` readable
 * bytes; `out_probs`, when non-null, must have room for two doubles.
 */
int32_t imgnilm_predict_rgb(const struct ImgnilmModel *model,
                            const uint8_t *pixels,
                            size_t pixels_len,
                            int32_t *out_label,
                            double *out_probs,
                            char *err,
                            size_t err_cap);

/**
 * Classify a PNG held in memory. The decoded image must match the
 * model's input side; outputs are as in `imgnilm_predict_rgb`.
 *
 * # Safety
 * `model` must be live; `png` must point to `png_len` readable bytes.
 */
int32_t imgnilm_predict_png(const struct ImgnilmModel *model,
                            const uint8_t *png,
                            size_t png_len,
                            int32_t *out_label,
                            double *out_probs,
                            char *err,
                            size_t err_cap);

/**
 * Pixel dimensions of a heatmap with the given window and step: one
 * column per hour, one row per step within the hour.
 *
 * # Safety
 * `out_rows` and `out_cols` must be valid pointers; `err` may be null.
 */
int32_t imgnilm_heatmap_dims(uint32_t window_hours,
                             uint32_t step_seconds,
                             size_t *out_rows,
                             size_t *out_cols,
                             char *err,
                             size_t err_cap);

/**
 * Encode one window of power samples (watts, `period_seconds` apart) as
 * heatmap pixels: z-score normalized, clamped, and colormapped. Writes
 * rows × cols × 3 RGB bytes (see `imgnilm_heatmap_dims`) to `out_rgb`.
 *
 * `values_len` must equal the window's sample count,
 * `window_hours · 3600 / period_seconds`.
 *
 * # Safety
 * `values` must point to `values_len` readable doubles; `out_rgb` must
 * have room for `out_cap` bytes.
 */
int32_t imgnilm_encode_heatmap(const double *values,
                               size_t values_len,
                               int64_t period_seconds,
                               uint32_t window_hours,
                               uint32_t step_seconds,
                               uint8_t *out_rgb,
                               size_t out_cap,
                               char *err,
                               size_t err_cap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IMGNILM_H */

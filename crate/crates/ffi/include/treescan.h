#ifndef TREESCAN_H
#define TREESCAN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TreescanStatus {
  TREESCAN_STATUS_OK = 0,
  TREESCAN_STATUS_NULL_POINTER = 1,
  TREESCAN_STATUS_INVALID_ARGUMENT = 2,
  TREESCAN_STATUS_CONFIG = 3,
  TREESCAN_STATUS_IMAGE = 4,
  TREESCAN_STATUS_COMPUTE = 5,
  TREESCAN_STATUS_OUT_OF_RANGE = 6,
  TREESCAN_STATUS_PANIC = 7,
} TreescanStatus;

/**
 * A seeded backbone ready to run forward passes.
 */
typedef struct TreescanEngine TreescanEngine;

/**
 * Output of one forward pass.
 */
typedef struct TreescanResult TreescanResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or an empty string. The
 * pointer stays valid until the next failing call on this thread.
 */
const char *treescan_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *treescan_version(void);

/**
 * Builds an engine from a JSON run configuration (keys `seed`, `alpha`,
 * `background_phi`, `patch_pitch`, `samples_per_side`, `stages`). A null
 * `config_json` selects the tiny preset with seed 0.
 *
 * # Safety
 * `config_json` must be null or a NUL-terminated string; `out` must be a
 * valid pointer to write the handle to.
 */
enum TreescanStatus treescan_engine_new(const char *config_json, struct TreescanEngine **out);

/**
 * # Safety
 * `engine` must be null or a handle from [`treescan_engine_new`] that has
 * not been freed.
 */
void treescan_engine_free(struct TreescanEngine *engine);

/**
 * Runs the backbone on an interleaved 8-bit RGB image of `width × height`
 * pixels (`3 · width · height` bytes, row-major).
 *
 * # Safety
 * `engine` must be a live handle, `rgb` must point to `3 · width · height`
 * readable bytes, and `out` must be a valid pointer.
 */
enum TreescanStatus treescan_engine_forward(const struct TreescanEngine *engine,
                                            const uint8_t *rgb,
                                            size_t width,
                                            size_t height,
                                            struct TreescanResult **out);

/**
 * # Safety
 * `result` must be null or a handle from [`treescan_engine_forward`] that
 * has not been freed.
 */
void treescan_result_free(struct TreescanResult *result);

/**
 * # Safety
 * `result` must be a live handle and `count` a valid pointer.
 */
enum TreescanStatus treescan_result_stage_count(const struct TreescanResult *result, size_t *count);

/**
 * Shape of stage `index` (0-based) as height, width, channels.
 *
 * # Safety
 * `result` must be a live handle; the output pointers must be valid.
 */
enum TreescanStatus treescan_result_stage_shape(const struct TreescanResult *result,
                                                size_t index,
                                                size_t *height,
                                                size_t *width,
                                                size_t *channels);

/**
 * Borrowed view of stage `index` as row-major `height × width × channels`
 * doubles; valid until the result is freed.
 *
 * # Safety
 * `result` must be a live handle; the output pointers must be valid.
 */
enum TreescanStatus treescan_result_stage_data(const struct TreescanResult *result,
                                               size_t index,
                                               const double **data,
                                               size_t *len);

/**
 * Borrowed first-stage patch mask, row-major `rows × cols`, 1 for
 * foreground; valid until the result is freed.
 *
 * # Safety
 * `result` must be a live handle; the output pointers must be valid.
 */
enum TreescanStatus treescan_result_mask(const struct TreescanResult *result,
                                         const uint8_t **mask,
                                         size_t *rows,
                                         size_t *cols);

/**
 * Normalized-cut value of the first-stage partition; NaN when the stage
 * has a single patch and therefore no cut.
 *
 * # Safety
 * `result` must be a live handle and `value` a valid pointer.
 */
enum TreescanStatus treescan_result_ncut(const struct TreescanResult *result, double *value);

/**
 * Fraction of first-stage patches labelled foreground.
 *
 * # Safety
 * `result` must be a live handle and `value` a valid pointer.
 */
enum TreescanStatus treescan_result_foreground_fraction(const struct TreescanResult *result,
                                                        double *value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TREESCAN_H */

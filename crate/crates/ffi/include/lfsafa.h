#ifndef LFSAFA_H
#define LFSAFA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LfsafaStatus {
  LFSAFA_STATUS_OK = 0,
  LFSAFA_STATUS_NULL_POINTER = 1,
  LFSAFA_STATUS_INVALID_ARGUMENT = 2,
  LFSAFA_STATUS_SHAPE_MISMATCH = 3,
  LFSAFA_STATUS_CHECKPOINT = 4,
  LFSAFA_STATUS_IO = 5,
  LFSAFA_STATUS_INTERNAL = 6,
  LFSAFA_STATUS_PANIC = 7,
} LfsafaStatus;

/**
 * Opaque inference model.
 */
typedef struct LfsafaModel LfsafaModel;

/**
 * Static properties of a loaded model.
 */
typedef struct LfsafaModelInfo {
  size_t scale;
  /**
   * Channels the backbone processes (1 for luma models).
   */
  size_t channels;
  /**
   * Angular resolution required by the adaptation module, 0 without one.
   */
  size_t angular;
} LfsafaModelInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads a backbone checkpoint and, when `adapt_path` is non-null, an
 * adaptation checkpoint. On success `*out` owns a new model.
 *
 * # Safety
 * Paths must be NUL-terminated strings; `out` must be writable.
 */
enum LfsafaStatus lfsafa_model_load(const char *backbone_path,
                                    const char *adapt_path,
                                    struct LfsafaModel **out);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must come from [`lfsafa_model_load`] and not be used afterwards.
 */
void lfsafa_model_free(struct LfsafaModel *model);

/**
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum LfsafaStatus lfsafa_model_info(const struct LfsafaModel *model, struct LfsafaModelInfo *out);

/**
 * Super-resolves an `angular x angular` light field.
 *
 * `views` holds `[angular, angular, channels, height, width]` floats in
 * `[0, 1]`; `channels` is 1 (luma) or 3 (RGB). `out` receives the same
 * layout at `scale` times the spatial size and must hold exactly
 * `angular^2 * channels * (scale*height) * (scale*width)` floats.
 *
 * # Safety
 * `views` must point to the declared number of floats and `out` to `out_len`.
 */
enum LfsafaStatus lfsafa_super_resolve(const struct LfsafaModel *model,
                                       const float *views,
                                       size_t angular,
                                       size_t channels,
                                       size_t height,
                                       size_t width,
                                       float *out,
                                       size_t out_len);

/**
 * PSNR in dB of two single-channel `height x width` images in `[0, 1]`.
 * Identical images give positive infinity.
 *
 * # Safety
 * Both images must hold `height * width` floats; `out` must be writable.
 */
enum LfsafaStatus lfsafa_psnr(const float *reference,
                              const float *test,
                              size_t height,
                              size_t width,
                              double *out);

/**
 * SSIM of two single-channel `height x width` images in `[0, 1]`.
 *
 * # Safety
 * Both images must hold `height * width` floats; `out` must be writable.
 */
enum LfsafaStatus lfsafa_ssim(const float *reference,
                              const float *test,
                              size_t height,
                              size_t width,
                              double *out);

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *lfsafa_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *lfsafa_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LFSAFA_H */

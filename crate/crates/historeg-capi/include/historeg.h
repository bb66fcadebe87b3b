#ifndef HISTOREG_H
#define HISTOREG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible API call.
 */
typedef enum HistoregStatus {
  /**
   * The call succeeded.
   */
  HISTOREG_STATUS_OK = 0,
  /**
   * A pointer was null or a value was out of range.
   */
  HISTOREG_STATUS_INVALID_ARGUMENT = 1,
  /**
   * A file could not be read, decoded, or written.
   */
  HISTOREG_STATUS_IO_ERROR = 2,
  /**
   * Registration itself failed or panicked.
   */
  HISTOREG_STATUS_RUNTIME_ERROR = 3,
} HistoregStatus;

/**
 * Opaque preprocessed image pyramid.
 */
typedef struct HistoregImage HistoregImage;

/**
 * Opaque registration outcome: the composed transform, both image grids,
 * and per-step diagnostics.
 */
typedef struct HistoregResult HistoregResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread. Valid until
 * the next failing call on the same thread; never null.
 */
const char *historeg_last_error_message(void);

/**
 * Builds a registration-ready image from 8-bit grayscale pixels, row-major,
 * `width * height` bytes.
 *
 * # Safety
 * `data` must point to `width * height` readable bytes and `out` must be a
 * valid location to store the new handle.
 */
enum HistoregStatus historeg_image_from_gray8(const uint8_t *data,
                                              uintptr_t width,
                                              uintptr_t height,
                                              struct HistoregImage **out);

/**
 * Builds a registration-ready image from interleaved 8-bit RGB pixels,
 * row-major, `width * height * 3` bytes.
 *
 * # Safety
 * `data` must point to `width * height * 3` readable bytes and `out` must
 * be a valid location to store the new handle.
 */
enum HistoregStatus historeg_image_from_rgb8(const uint8_t *data,
                                             uintptr_t width,
                                             uintptr_t height,
                                             struct HistoregImage **out);

/**
 * Loads an image file (PNG/JPEG/TIFF or a pyramid cache written by the
 * `historeg` CLI) and preprocesses it.
 *
 * # Safety
 * `path` must be a null-terminated UTF-8 string and `out` a valid location
 * to store the new handle.
 */
enum HistoregStatus historeg_image_from_file(const char *path, struct HistoregImage **out);

/**
 * Releases an image handle. Null is ignored.
 *
 * # Safety
 * `image` must be a handle from a `historeg_image_*` constructor that has
 * not been freed yet.
 */
void historeg_image_free(struct HistoregImage *image);

/**
 * Registers `template` onto `reference` and returns a result handle.
 *
 * `config_ini` is the text of a configuration file (defaults when null);
 * `steps` selects pipeline steps as an ascending subset of "123" (all
 * three when null).
 *
 * # Safety
 * `reference` and `template_` must be live image handles; `config_ini` and
 * `steps` must be null or null-terminated UTF-8 strings; `out` must be a
 * valid location to store the new handle.
 */
enum HistoregStatus historeg_register(const struct HistoregImage *reference,
                                      const struct HistoregImage *template_,
                                      const char *config_ini,
                                      const char *steps,
                                      struct HistoregResult **out);

/**
 * Copies the rigid pre-alignment as `[angle, tx, ty, cx, cy]` into `out`.
 * Fails with `InvalidArgument` when step 1 did not run.
 *
 * # Safety
 * `result` must be a live result handle and `out` must point to five
 * writable doubles.
 */
enum HistoregStatus historeg_result_rigid(const struct HistoregResult *result, double *out);

/**
 * Copies the affine row-major coefficients `[a00, a01, b0, a10, a11, b1]`
 * (physical coordinates) into `out`.
 *
 * # Safety
 * `result` must be a live result handle and `out` must point to six
 * writable doubles.
 */
enum HistoregStatus historeg_result_affine(const struct HistoregResult *result, double *out);

/**
 * Number of pipeline steps that ran.
 *
 * # Safety
 * `result` must be a live result handle.
 */
uintptr_t historeg_result_step_count(const struct HistoregResult *result);

/**
 * Diagnostics of one executed step by index: which pipeline step it was
 * (1-3), the NGF distance before and after at that step's finest level, and
 * whether the step's result was discarded for not improving (1) or kept
 * (0). Null output pointers are skipped.
 *
 * # Safety
 * `result` must be a live result handle; non-null output pointers must be
 * writable.
 */
enum HistoregStatus historeg_result_step_report(const struct HistoregResult *result,
                                                uintptr_t index,
                                                uint8_t *step,
                                                double *initial_ngf,
                                                double *final_ngf,
                                                uint8_t *reverted);

/**
 * Maps `count` landmarks from reference pixel coordinates into template
 * pixel coordinates. `xy_in` and `xy_out` are interleaved `[x0, y0, x1,
 * y1, ...]` arrays of `2 * count` doubles; they may alias.
 *
 * # Safety
 * `result` must be a live result handle; `xy_in` must point to `2 * count`
 * readable doubles and `xy_out` to `2 * count` writable doubles.
 */
enum HistoregStatus historeg_result_map_points(const struct HistoregResult *result,
                                               const double *xy_in,
                                               uintptr_t count,
                                               double *xy_out);

/**
 * Saves the result as a transform file readable by the `historeg` CLI.
 *
 * # Safety
 * `result` must be a live result handle and `path` a null-terminated UTF-8
 * string.
 */
enum HistoregStatus historeg_result_save(const struct HistoregResult *result, const char *path);

/**
 * Releases a result handle. Null is ignored.
 *
 * # Safety
 * `result` must be a handle from `historeg_register` that has not been
 * freed yet.
 */
void historeg_result_free(struct HistoregResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HISTOREG_H */

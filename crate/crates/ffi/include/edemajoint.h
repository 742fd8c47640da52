#ifndef EDEMAJOINT_H
#define EDEMAJOINT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of severity classes, and the length of every probability buffer.
 */
#define EDJ_NUM_CLASSES 4

/**
 * Level written by [`edj_label_report`] when no keyword matched.
 */
#define EDJ_UNLABELED -1

typedef enum {
  EDJ_STATUS_OK = 0,
  EDJ_STATUS_NULL_ARGUMENT = 1,
  EDJ_STATUS_INVALID_UTF8 = 2,
  EDJ_STATUS_IO = 3,
  EDJ_STATUS_INTEGRITY = 4,
  EDJ_STATUS_UNSUPPORTED_VERSION = 5,
  EDJ_STATUS_SHAPE = 6,
  EDJ_STATUS_INVALID_ARGUMENT = 7,
  EDJ_STATUS_DEGENERATE_INPUT = 8,
  EDJ_STATUS_EMPTY_DOCUMENT = 9,
  EDJ_STATUS_NUMERIC = 10,
  EDJ_STATUS_PANIC = 11,
} EdjStatus;

/**
 * A loaded checkpoint. Only ever handled through a pointer.
 */
typedef struct EdjModel EdjModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library from the same thread.
 */
const char *edj_last_error(void);

/**
 * Static, nul-terminated library version.
 */
const char *edj_version(void);

/**
 * Loads a checkpoint file. On success `*out` owns a model that must be
 * released with [`edj_model_free`].
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a writable pointer.
 */
EdjStatus edj_model_load(const char *path, EdjModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from [`edj_model_load`] and not be used afterwards.
 */
void edj_model_free(EdjModel *model);

/**
 * Side length of the square images the model expects, or 0 for null.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t edj_model_image_size(const EdjModel *model);

/**
 * Severity probabilities for one grayscale image, row-major with values in
 * `[0, 1]`. Writes [`EDJ_NUM_CLASSES`] values to `out_probs`.
 *
 * # Safety
 * `pixels` must hold `height * width` values and `out_probs` room for four.
 */
EdjStatus edj_model_infer(const EdjModel *model,
                          const double *pixels,
                          size_t height,
                          size_t width,
                          double *out_probs);

/**
 * Labels one raw report with the built-in keyword rules. Writes the level
 * in `0..=3`, or [`EDJ_UNLABELED`] when nothing matched.
 *
 * # Safety
 * `text` must be a nul-terminated string and `out_level` writable.
 */
EdjStatus edj_label_report(const char *text, int32_t *out_level);

/**
 * Area under the ROC curve with tied scores counted as one half. A nonzero
 * label byte marks a positive.
 *
 * # Safety
 * `scores` and `labels` must each hold `n` values.
 */
EdjStatus edj_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * Unweighted mean of the per-class F1 over all four classes.
 *
 * # Safety
 * `predicted` and `gold` must each hold `n` values.
 */
EdjStatus edj_macro_f1(const uint8_t *predicted, const uint8_t *gold, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EDEMAJOINT_H */

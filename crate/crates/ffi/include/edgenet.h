#ifndef EDGENET_H
#define EDGENET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EdgenetStatus {
  EDGENET_STATUS_OK = 0,
  EDGENET_STATUS_NULL_POINTER = 1,
  EDGENET_STATUS_INVALID_ARGUMENT = 2,
  EDGENET_STATUS_IO = 3,
  EDGENET_STATUS_FORMAT = 4,
  EDGENET_STATUS_DIMENSION_MISMATCH = 5,
  EDGENET_STATUS_SINGLE_CLASS = 6,
  EDGENET_STATUS_PANIC = 7,
} EdgenetStatus;

typedef enum EdgenetModelKind {
  EDGENET_MODEL_KIND_DENSE = 0,
  EDGENET_MODEL_KIND_SPARSE = 1,
  EDGENET_MODEL_KIND_QUANTIZED = 2,
} EdgenetModelKind;

/**
 * Loaded model with its float inference weights.
 */
typedef struct EdgenetModel EdgenetModel;

/**
 * Ratios in `[0, 1]`; `degenerate` is 1 when some denominator was zero.
 */
typedef struct EdgenetMetrics {
  double accuracy;
  double far;
  double precision;
  double detection_rate;
  double f1;
  uint8_t degenerate;
} EdgenetMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *edgenet_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *edgenet_version(void);

/**
 * Loads a model file. On success `*out` owns a handle that must be passed
 * to `edgenet_model_free`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum EdgenetStatus edgenet_model_load(const char *path, struct EdgenetModel **out);

/**
 * # Safety
 * `model` must come from `edgenet_model_load` and not be used afterwards.
 */
void edgenet_model_free(struct EdgenetModel *model);

/**
 * Number of values one record must contain; 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t edgenet_model_input_len(const struct EdgenetModel *model);

/**
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum EdgenetStatus edgenet_model_kind(const struct EdgenetModel *model, enum EdgenetModelKind *out);

/**
 * Scores `n_rows` records stored row-major in `values`
 * (`n_rows * edgenet_model_input_len` doubles) into `out_probs`.
 *
 * # Safety
 * `values` must hold `n_rows * row_len` doubles and `out_probs` `n_rows`.
 */
enum EdgenetStatus edgenet_model_predict(const struct EdgenetModel *model,
                                         const double *values,
                                         size_t n_rows,
                                         size_t row_len,
                                         double *out_probs);

/**
 * Writes an int8 copy of a dense or sparse model file using the default
 * quantization range.
 *
 * # Safety
 * Both paths must be NUL-terminated strings.
 */
enum EdgenetStatus edgenet_quantize_file(const char *input, const char *output);

/**
 * Detection metrics from confusion counts.
 *
 * # Safety
 * `out` must be writable.
 */
enum EdgenetStatus edgenet_metrics(uint64_t tp,
                                   uint64_t tn,
                                   uint64_t fp,
                                   uint64_t fn_,
                                   struct EdgenetMetrics *out);

/**
 * Area under the ROC curve of `scores` against 0/1 `labels`.
 *
 * # Safety
 * `scores` and `labels` must hold `n` elements; `out` must be writable.
 */
enum EdgenetStatus edgenet_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EDGENET_H */

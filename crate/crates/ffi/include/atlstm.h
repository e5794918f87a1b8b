#ifndef ATLSTM_H
#define ATLSTM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AtlstmStatus {
  ATLSTM_STATUS_OK = 0,
  ATLSTM_STATUS_NULL_ARGUMENT = 1,
  ATLSTM_STATUS_INVALID_UTF8 = 2,
  ATLSTM_STATUS_IO = 3,
  ATLSTM_STATUS_BAD_CHECKPOINT = 4,
  ATLSTM_STATUS_INVALID_SAMPLE = 5,
  ATLSTM_STATUS_NUMERIC = 6,
  ATLSTM_STATUS_PANIC = 7,
} AtlstmStatus;

/**
 * A loaded model. Opaque to C.
 */
typedef struct AtlstmModel AtlstmModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads a checkpoint file. On success `*out` receives a handle that must be
 * released with [`atlstm_model_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AtlstmStatus atlstm_model_load(const char *path, struct AtlstmModel **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must come from [`atlstm_model_load`] and not be used afterwards.
 */
void atlstm_model_free(struct AtlstmModel *model);

/**
 * Number of trainable scalars, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
uint64_t atlstm_model_param_count(const struct AtlstmModel *model);

/**
 * Days per window the model expects, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
uint32_t atlstm_model_window(const struct AtlstmModel *model);

/**
 * Vocabulary fingerprint stored in the checkpoint. The string lives as long
 * as the handle; null for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
const char *atlstm_model_vocab_hash(const struct AtlstmModel *model);

/**
 * Scores one window sample given as JSON, writing the up and down
 * probabilities.
 *
 * # Safety
 * `model` must be a live handle, `sample_json` a NUL-terminated string and
 * `p_up` / `p_down` valid pointers.
 */
enum AtlstmStatus atlstm_model_predict_json(const struct AtlstmModel *model,
                                            const char *sample_json,
                                            double *p_up,
                                            double *p_down);

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library from the same thread.
 */
const char *atlstm_last_error(void);

/**
 * Library version, NUL-terminated and static.
 */
const char *atlstm_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ATLSTM_H */

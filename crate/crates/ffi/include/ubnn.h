#ifndef UBNN_H
#define UBNN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a fallible call.
typedef enum UbnStatus {
  UBN_STATUS_OK = 0,
  // A required pointer argument was null.
  UBN_STATUS_NULL_POINTER = 1,
  // The file could not be read.
  UBN_STATUS_IO = 2,
  // The bytes are not a valid model or forest.
  UBN_STATUS_FORMAT = 3,
  // Input length or an output buffer does not match the model.
  UBN_STATUS_SHAPE = 4,
  // The path is not valid UTF-8.
  UBN_STATUS_INVALID_PATH = 5,
  // Internal error; the handle is left unchanged.
  UBN_STATUS_PANIC = 6,
} UbnStatus;

// A loaded random forest.
typedef struct UbnForest UbnForest;

// A loaded binary neural network.
typedef struct UbnNetwork UbnNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Static description of a status code.
const char *ubn_status_message(enum UbnStatus status);

// Description of the last failure on this thread. Valid until the next
// failing call on the same thread.
const char *ubn_last_error(void);

// Loads a `UBN1` file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum UbnStatus ubn_network_load(const char *path, struct UbnNetwork **out);

// Parses `UBN1` bytes.
//
// # Safety
// `data` must point to `len` readable bytes and `out` must be valid.
enum UbnStatus ubn_network_from_bytes(const uint8_t *data, size_t len, struct UbnNetwork **out);

// # Safety
// `net` must be null or a handle from this library not yet freed.
void ubn_network_free(struct UbnNetwork *net);

// Input window shape: `timesteps * channels` int8 values, time-major.
//
// # Safety
// `net` must be a live handle; the out pointers must be valid.
enum UbnStatus ubn_network_input_shape(const struct UbnNetwork *net,
                                       size_t *timesteps,
                                       size_t *channels);

// Number of output classes, or 0 for a null handle.
//
// # Safety
// `net` must be null or a live handle.
size_t ubn_network_num_classes(const struct UbnNetwork *net);

// Classifies one window of `len` int8 values. Writes the class to
// `class_out` and, when `scores` is not null, the `n_scores` Q16.16 class
// scores (`n_scores` must equal the class count).
//
// # Safety
// `input` must point to `len` values, `scores` to `n_scores` slots, and
// `net` must be a live handle.
enum UbnStatus ubn_network_predict(const struct UbnNetwork *net,
                                   const int8_t *input,
                                   size_t len,
                                   size_t *class_out,
                                   int64_t *scores,
                                   size_t n_scores);

// Loads a `URF1` file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum UbnStatus ubn_forest_load(const char *path, struct UbnForest **out);

// Parses `URF1` bytes.
//
// # Safety
// `data` must point to `len` readable bytes and `out` must be valid.
enum UbnStatus ubn_forest_from_bytes(const uint8_t *data, size_t len, struct UbnForest **out);

// # Safety
// `forest` must be null or a handle from this library not yet freed.
void ubn_forest_free(struct UbnForest *forest);

// # Safety
// `forest` must be null or a live handle.
size_t ubn_forest_num_features(const struct UbnForest *forest);

// # Safety
// `forest` must be null or a live handle.
size_t ubn_forest_num_classes(const struct UbnForest *forest);

// Classifies one vector of quantized features.
//
// # Safety
// `features` must point to `len` values and `forest` must be a live handle.
enum UbnStatus ubn_forest_predict(const struct UbnForest *forest,
                                  const int8_t *features,
                                  size_t len,
                                  size_t *class_out);

// Extracts features from a raw 32 x 3 window (time-major), quantizes them
// and classifies.
//
// # Safety
// `window` must point to `len` values and `forest` must be a live handle.
enum UbnStatus ubn_forest_predict_window(const struct UbnForest *forest,
                                         const int32_t *window,
                                         size_t len,
                                         size_t *class_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UBNN_H */

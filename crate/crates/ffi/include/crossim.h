#ifndef CROSSIM_H
#define CROSSIM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CrossimStatus {
  CROSSIM_STATUS_OK = 0,
  CROSSIM_STATUS_NULL_POINTER = 1,
  CROSSIM_STATUS_INVALID_DATA = 2,
  CROSSIM_STATUS_SHAPE_MISMATCH = 3,
  CROSSIM_STATUS_ALIGNMENT_UNAVAILABLE = 4,
  CROSSIM_STATUS_DEGENERATE_INPUT = 5,
  CROSSIM_STATUS_NUMERICAL_FAILURE = 6,
  CROSSIM_STATUS_INVALID_PARAM = 7,
  CROSSIM_STATUS_FORMAT = 8,
  CROSSIM_STATUS_MISSING_ARTIFACT = 9,
  CROSSIM_STATUS_IO = 10,
  CROSSIM_STATUS_PANIC = 11,
} CrossimStatus;

typedef enum CrossimIndex {
  CROSSIM_INDEX_ANC = 0,
  CROSSIM_INDEX_CKA = 1,
  CROSSIM_INDEX_CCA = 2,
  CROSSIM_INDEX_SVCCA = 3,
  CROSSIM_INDEX_PWCCA = 4,
} CrossimIndex;

/**
 * Activation matrix, examples by neurons.
 */
typedef struct CrossimMatrix CrossimMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *crossim_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *crossim_version(void);

/**
 * Copies `rows * cols` row-major doubles into a new matrix.
 *
 * # Safety
 * `data` must point to `rows * cols` readable doubles; `out` must be writable.
 */
enum CrossimStatus crossim_matrix_new(const double *data,
                                      size_t rows,
                                      size_t cols,
                                      struct CrossimMatrix **out);

/**
 * Reads a `.npy` dump (2-D, float32 or float64).
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CrossimStatus crossim_matrix_read_npy(const char *path, struct CrossimMatrix **out);

/**
 * Writes the matrix as a float64 `.npy` file.
 *
 * # Safety
 * `m` must be a live handle and `path` a NUL-terminated string.
 */
enum CrossimStatus crossim_matrix_write_npy(const struct CrossimMatrix *m, const char *path);

/**
 * Row count, or 0 for a null handle.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
size_t crossim_matrix_rows(const struct CrossimMatrix *m);

/**
 * Column count, or 0 for a null handle.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
size_t crossim_matrix_cols(const struct CrossimMatrix *m);

/**
 * Copies the matrix out row-major into `buffer` (`len >= rows * cols`).
 *
 * # Safety
 * `m` must be a live handle; `buffer` must hold `len` writable doubles.
 */
enum CrossimStatus crossim_matrix_copy(const struct CrossimMatrix *m, double *buffer, size_t len);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `m` must be null or a handle not yet freed.
 */
void crossim_matrix_free(struct CrossimMatrix *m);

/**
 * Scores `x` against `y` with one index. Inputs are raw activations; columns
 * are centered internally. `svcca_threshold` is only read for SVCCA and must
 * lie in (0, 1]. ANC zero-fills degenerate neurons.
 *
 * # Safety
 * `x` and `y` must be live handles; `score` must be writable.
 */
enum CrossimStatus crossim_similarity(const struct CrossimMatrix *x,
                                      const struct CrossimMatrix *y,
                                      enum CrossimIndex index,
                                      double svcca_threshold,
                                      double *score);

/**
 * Per-neuron |correlation| of aligned neuron pairs, written to `out`
 * (`len >= cols`). Returns the mean through `mean` (may be null) and the
 * number of zero-variance neuron pairs through `degenerate` (may be null).
 *
 * # Safety
 * `x` and `y` must be live handles; `out` must hold `len` writable doubles.
 */
enum CrossimStatus crossim_anc_components(const struct CrossimMatrix *x,
                                          const struct CrossimMatrix *y,
                                          double *out,
                                          size_t len,
                                          double *mean,
                                          size_t *degenerate);

/**
 * Fraction of rows of `x` whose cosine nearest row in `y` is the row with
 * the same index.
 *
 * # Safety
 * `x` and `y` must be live handles; `accuracy` must be writable.
 */
enum CrossimStatus crossim_matching_accuracy(const struct CrossimMatrix *x,
                                             const struct CrossimMatrix *y,
                                             double *accuracy);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CROSSIM_H */

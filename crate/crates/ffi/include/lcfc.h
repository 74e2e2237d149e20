#ifndef LCFC_H
#define LCFC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define LCFC_BACKEND_KM 0

#define LCFC_BACKEND_KMED 1

#define LCFC_BACKEND_FCM 2

#define LCFC_BACKEND_SC 3

#define LCFC_BACKEND_NMF 4

#define LCFC_BACKEND_DBSCAN 5

#define LCFC_BACKEND_HC 6

#define LCFC_PARTITION_IID 0

/**
 * `param` is the fraction drawn from the client's designated class.
 */
#define LCFC_PARTITION_SKEW 1

/**
 * `param` is the Dirichlet concentration.
 */
#define LCFC_PARTITION_DIRICHLET 2

typedef enum LcfcStatus {
  LCFC_STATUS_OK = 0,
  LCFC_STATUS_NULL_POINTER = 1,
  LCFC_STATUS_INVALID_ARGUMENT = 2,
  LCFC_STATUS_INFEASIBLE = 3,
  LCFC_STATUS_DATA_ERROR = 4,
  LCFC_STATUS_BUFFER_TOO_SMALL = 5,
  LCFC_STATUS_PANIC = 6,
} LcfcStatus;

/**
 * Dense `n x n` squared-distance matrix.
 */
typedef struct LcfcMatrix LcfcMatrix;

/**
 * Public coding agreement: field, client count, segments and noise.
 */
typedef struct LcfcScheme LcfcScheme;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, static storage.
 */
const char *lcfc_version(void);

/**
 * Message for the last failed call on this thread, or null.
 *
 * The pointer stays valid until the next `lcfc_*` call on the same thread.
 */
const char *lcfc_last_error(void);

/**
 * Builds a scheme with the default evaluation nodes.
 *
 * `p = 0` selects the default Mersenne prime `2^61 - 1`.
 */
enum LcfcStatus lcfc_scheme_new(uint64_t p,
                                uint32_t q,
                                size_t m,
                                size_t l,
                                size_t t,
                                struct LcfcScheme **out);

void lcfc_scheme_free(struct LcfcScheme *scheme);

/**
 * Minimum number of client reports needed to decode, or 0 for a null handle.
 */
size_t lcfc_scheme_threshold(const struct LcfcScheme *scheme);

/**
 * Runs the full protocol in process on `n` samples of `d` features
 * (row-major) and returns the decoded squared-distance matrix.
 *
 * `labels` may be null for [`LCFC_PARTITION_IID`]; the skewed partitions
 * need one class id per sample.
 */
enum LcfcStatus lcfc_reconstruct(const struct LcfcScheme *scheme,
                                 const double *data,
                                 size_t n,
                                 size_t d,
                                 const size_t *labels,
                                 uint32_t partition,
                                 double param,
                                 uint64_t seed,
                                 struct LcfcMatrix **out);

/**
 * Wraps a caller-supplied symmetric matrix with a zero diagonal.
 */
enum LcfcStatus lcfc_matrix_from_dense(const double *data, size_t n, struct LcfcMatrix **out);

void lcfc_matrix_free(struct LcfcMatrix *matrix);

/**
 * Side length, or 0 for a null handle.
 */
size_t lcfc_matrix_n(const struct LcfcMatrix *matrix);

enum LcfcStatus lcfc_matrix_get(const struct LcfcMatrix *matrix, size_t i, size_t j, double *out);

/**
 * Copies the matrix row-major into `buf`, which must hold `n * n` values.
 */
enum LcfcStatus lcfc_matrix_copy(const struct LcfcMatrix *matrix, double *buf, size_t len);

/**
 * Clusters the matrix with backend defaults and writes one label per
 * sample into `labels` (`len >= n`). DBSCAN noise is reported as -1.
 */
enum LcfcStatus lcfc_cluster(const struct LcfcMatrix *matrix,
                             uint32_t backend,
                             size_t k,
                             uint64_t seed,
                             int64_t *labels,
                             size_t len);

/**
 * Cohen's kappa after optimally matching predicted clusters to classes.
 */
enum LcfcStatus lcfc_kappa(const int64_t *pred, const size_t *truth, size_t n, double *out);

/**
 * Normalized mutual information, geometric-mean normalization.
 */
enum LcfcStatus lcfc_nmi(const int64_t *pred, const size_t *truth, size_t n, double *out);

/**
 * Name of a backend id, static storage, or null if unknown.
 */
const char *lcfc_backend_name(uint32_t backend);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LCFC_H */

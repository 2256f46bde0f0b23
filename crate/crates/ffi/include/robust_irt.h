#ifndef ROBUST_IRT_H
#define ROBUST_IRT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define RIRT_PENALTY_L0 0

#define RIRT_PENALTY_L1 1

#define RIRT_PENALTY_NONE 2

#define RIRT_VOTE_NAY 0

#define RIRT_VOTE_YEA 1

#define RIRT_VOTE_MISSING -1

typedef enum RirtStatus {
  RirtStatus_Ok = 0,
  RirtStatus_NullPointer = 1,
  RirtStatus_InvalidArgument = 2,
  RirtStatus_DataError = 3,
  RirtStatus_Divergence = 4,
  RirtStatus_IoError = 5,
  RirtStatus_BufferTooSmall = 6,
  RirtStatus_Panic = 7,
} RirtStatus;

/**
 * Fitted model handle; keeps the ids of the matrix it was fitted to.
 */
typedef struct RirtFit RirtFit;

/**
 * Roll-call matrix handle.
 */
typedef struct RirtVotes RirtVotes;

/**
 * Fit settings. Start from `rirt_fit_options_default`.
 */
typedef struct RirtFitOptions {
  /**
   * One of the `RIRT_PENALTY_*` constants.
   */
  int32_t penalty;
  /**
   * Sparsity level; `INFINITY` disables the shifts.
   */
  double lambda;
  size_t dim;
  uint64_t seed;
  /**
   * Nonzero: start l0 fits from a preliminary fit at `preliminary_lambda`.
   */
  int32_t preliminary;
  double preliminary_lambda;
  size_t max_iter;
  double epsilon;
} RirtFitOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *rirt_last_error(void);

void rirt_clear_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rirt_version(void);

/**
 * Builds a matrix from `n_legislators × n_bills` row-major `RIRT_VOTE_*` codes.
 *
 * # Safety
 * `votes` must point to `n_legislators * n_bills` readable bytes; `out` must be writable.
 */
enum RirtStatus rirt_votes_new(const int8_t *votes,
                               size_t n_legislators,
                               size_t n_bills,
                               struct RirtVotes **out);

/**
 * Reads a roll-call CSV.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum RirtStatus rirt_votes_read_csv(const char *path, struct RirtVotes **out);

/**
 * # Safety
 * `votes` must be null or a handle from this library, not yet freed.
 */
void rirt_votes_free(struct RirtVotes *votes);

/**
 * # Safety
 * `votes` must be a live handle; the out pointers must be writable.
 */
enum RirtStatus rirt_votes_dims(const struct RirtVotes *votes,
                                size_t *n_legislators,
                                size_t *n_bills);

/**
 * Defaults: l0, λ = 3, one dimension, seed 0, preliminary fit at λ = 2.
 */
struct RirtFitOptions rirt_fit_options_default(void);

/**
 * Fits the model. The result is standardized but not sign-anchored.
 *
 * # Safety
 * `votes` and `options` must be valid pointers; `out` must be writable.
 */
enum RirtStatus rirt_fit(const struct RirtVotes *votes,
                         const struct RirtFitOptions *options,
                         struct RirtFit **out);

/**
 * # Safety
 * `fit` must be null or a handle from this library, not yet freed.
 */
void rirt_fit_free(struct RirtFit *fit);

/**
 * # Safety
 * `fit` must be a live handle; the out pointers must be writable.
 */
enum RirtStatus rirt_fit_dims(const struct RirtFit *fit,
                              size_t *n_legislators,
                              size_t *n_bills,
                              size_t *dim);

/**
 * Copies θ (`n_legislators × dim`, row-major) into `out`.
 *
 * # Safety
 * `fit` must be a live handle and `out` must hold `len` doubles.
 */
enum RirtStatus rirt_fit_theta(const struct RirtFit *fit, double *out, size_t len);

/**
 * Copies α (`n_bills`) into `out`.
 *
 * # Safety
 * `fit` must be a live handle and `out` must hold `len` doubles.
 */
enum RirtStatus rirt_fit_alpha(const struct RirtFit *fit, double *out, size_t len);

/**
 * Copies β (`n_bills × dim`, row-major) into `out`.
 *
 * # Safety
 * `fit` must be a live handle and `out` must hold `len` doubles.
 */
enum RirtStatus rirt_fit_beta(const struct RirtFit *fit, double *out, size_t len);

/**
 * Number of nonzero shifts; 0 for a null handle.
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
size_t rirt_fit_gamma_nnz(const struct RirtFit *fit);

/**
 * Copies the nonzero shifts as parallel arrays of legislator index, bill
 * index and value, in (legislator, bill) order.
 *
 * # Safety
 * `fit` must be a live handle; each array must hold `len` elements.
 */
enum RirtStatus rirt_fit_gamma(const struct RirtFit *fit,
                               size_t *rows,
                               size_t *cols,
                               double *values,
                               size_t len);

/**
 * Iteration count and convergence flag of the main run.
 *
 * # Safety
 * `fit` must be a live handle; the out pointers must be writable.
 */
enum RirtStatus rirt_fit_status(const struct RirtFit *fit, size_t *iterations, int32_t *converged);

/**
 * Writes the fit document (JSON) to `path`.
 *
 * # Safety
 * `fit` must be a live handle and `path` a NUL-terminated string.
 */
enum RirtStatus rirt_fit_write_json(const struct RirtFit *fit, const char *path);

/**
 * `λ = sqrt(2 ln((1-π)/π))` for `0 < π < 1/2`.
 *
 * # Safety
 * `out` must be writable.
 */
enum RirtStatus rirt_lambda_from_pi(double pi, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROBUST_IRT_H */

#ifndef KRYLOVRL_H
#define KRYLOVRL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every exported function.
 */
typedef enum KrlStatus {
  KRL_STATUS_OK = 0,
  /**
   * Null pointer, bad parameter or block size out of range.
   */
  KRL_STATUS_INVALID_ARGUMENT = 1,
  /**
   * File could not be read.
   */
  KRL_STATUS_IO = 2,
  /**
   * Malformed or unsupported file contents.
   */
  KRL_STATUS_FORMAT = 3,
  /**
   * Sizes of the inputs disagree.
   */
  KRL_STATUS_DIMENSION = 4,
  /**
   * The solver stopped before reaching the tolerance. Outputs are filled.
   */
  KRL_STATUS_NOT_CONVERGED = 5,
  /**
   * Policy file version, shape or parse problem.
   */
  KRL_STATUS_POLICY = 6,
  /**
   * Unexpected internal failure.
   */
  KRL_STATUS_INTERNAL = 7,
} KrlStatus;

/**
 * Opaque sparse matrix handle.
 */
typedef struct KrlMatrix KrlMatrix;

/**
 * Opaque block-size policy handle.
 */
typedef struct KrlPolicy KrlPolicy;

/**
 * Solver settings.
 */
typedef struct KrlSolverOptions {
  double tol;
  size_t restart;
  size_t max_cycles;
  /**
   * Non-zero to run Gram-Schmidt twice per step.
   */
  int32_t reorthogonalize;
} KrlSolverOptions;

/**
 * What a solve reports besides the solution.
 */
typedef struct KrlSolveSummary {
  int32_t converged;
  size_t cycles;
  size_t matvecs;
  double final_rel_residual;
} KrlSolveSummary;

/**
 * European call pricing grid.
 */
typedef struct KrlBsParams {
  double sigma;
  double rate;
  double strike;
  double s_max;
  /**
   * Number of price subintervals.
   */
  size_t m;
  double expiry;
  size_t steps;
} KrlBsParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *krl_last_error_message(void);

/**
 * Default solver settings: tolerance 1e-8, restart 20, 200 cycles,
 * reorthogonalization on.
 */
struct KrlSolverOptions krl_solver_options_default(void);

/**
 * Builds a matrix from `nnz` coordinate entries. Duplicates are summed.
 *
 * # Safety
 * `rows`, `cols` and `values` must each point to `nnz` readable elements and
 * `out` must be a valid pointer.
 */
enum KrlStatus krl_matrix_from_triplets(size_t n_rows,
                                        size_t n_cols,
                                        size_t nnz,
                                        const size_t *rows,
                                        const size_t *cols,
                                        const double *values,
                                        struct KrlMatrix **out);

/**
 * Reads a coordinate Matrix Market file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum KrlStatus krl_matrix_read_mm(const char *path, struct KrlMatrix **out);

/**
 * Releases a matrix. Null is ignored.
 *
 * # Safety
 * `m` must be null or a handle obtained from this library and not yet freed.
 */
void krl_matrix_free(struct KrlMatrix *m);

/**
 * Dimensions and stored nonzeros. Any output pointer may be null.
 *
 * # Safety
 * `m` must be a live handle; non-null outputs must be valid pointers.
 */
enum KrlStatus krl_matrix_dims(const struct KrlMatrix *m,
                               size_t *n_rows,
                               size_t *n_cols,
                               size_t *nnz);

/**
 * Solves `A x = b` with a constant block size `k`. `options` may be null for
 * defaults and `summary` may be null. `x_out` receives `n` values.
 *
 * # Safety
 * `m` must be a live handle, `b` and `x_out` must hold `n` elements.
 */
enum KrlStatus krl_solve_constant(const struct KrlMatrix *m,
                                  const double *b,
                                  size_t n,
                                  size_t block_size,
                                  const struct KrlSolverOptions *options,
                                  double *x_out,
                                  struct KrlSolveSummary *summary);

/**
 * Solves `A x = b` with the block size chosen each cycle by `policy`.
 *
 * # Safety
 * As [`krl_solve_constant`]; `policy` must be a live handle.
 */
enum KrlStatus krl_solve_policy(const struct KrlMatrix *m,
                                const struct KrlPolicy *policy,
                                const double *b,
                                size_t n,
                                const struct KrlSolverOptions *options,
                                double *x_out,
                                struct KrlSolveSummary *summary);

/**
 * Loads a policy file written by the `train` command.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum KrlStatus krl_policy_load(const char *path, struct KrlPolicy **out);

/**
 * Releases a policy. Null is ignored.
 *
 * # Safety
 * `p` must be null or a handle obtained from this library and not yet freed.
 */
void krl_policy_free(struct KrlPolicy *p);

/**
 * Prices a European call at `spot` by implicit finite differences with a
 * constant block size, and alongside it the closed-form value. Either
 * output may be null.
 *
 * # Safety
 * `params` must be valid; non-null outputs must be valid pointers.
 */
enum KrlStatus krl_bs_price(const struct KrlBsParams *params,
                            double spot,
                            size_t block_size,
                            double *fd_price,
                            double *analytic_price);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KRYLOVRL_H */

#ifndef OCP_H
#define OCP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OcpMethod {
  OCP_METHOD_NEWTON = 0,
  OCP_METHOD_NEWTON_EPS = 1,
  OCP_METHOD_NEWTON_RAS = 2,
  OCP_METHOD_NEWTON_RAS_EPS = 3,
  OCP_METHOD_RASPEN = 4,
  OCP_METHOD_RASPEN_EPS = 5,
} OcpMethod;

typedef enum OcpStatus {
  OCP_STATUS_OK = 0,
  OCP_STATUS_NULL_POINTER = 1,
  OCP_STATUS_INVALID_ARGUMENT = 2,
  OCP_STATUS_DIMENSION_MISMATCH = 3,
  OCP_STATUS_NUMERICAL_FAILURE = 4,
  OCP_STATUS_NOT_CONVERGED = 5,
  OCP_STATUS_PANIC = 6,
} OcpStatus;

/**
 * Opaque problem handle.
 */
typedef struct OcpProblem OcpProblem;

/**
 * Opaque solution handle.
 */
typedef struct OcpSolution OcpSolution;

/**
 * Parameters of the manufactured test problem.
 */
typedef struct OcpProblemParams {
  size_t n;
  double kappa;
  double nu;
  double mu;
  double k_tilde;
  double eps_construct;
} OcpProblemParams;

/**
 * Solver settings. `direct_linear` replaces GMRES by a banded LU in the
 * monolithic Newton methods.
 */
typedef struct OcpSolveOptions {
  enum OcpMethod method;
  double eps0;
  double eps_min;
  double gamma;
  double sigma;
  double tol;
  double inner_tol;
  size_t subdomain_rows;
  size_t subdomain_cols;
  size_t overlap;
  size_t max_outer;
  size_t threads;
  bool direct_linear;
} OcpSolveOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *ocp_last_error_message(void);

struct OcpProblemParams ocp_problem_params_default(void);

struct OcpSolveOptions ocp_solve_options_default(void);

/**
 * Builds the manufactured problem whose exact discrete solution is known.
 *
 * # Safety
 * `params` must point to a valid `OcpProblemParams` and `out` to writable
 * storage for one pointer.
 */
enum OcpStatus ocp_problem_new(const struct OcpProblemParams *params, struct OcpProblem **out);

/**
 * # Safety
 * `problem` must be null or a pointer returned by `ocp_problem_new` that has
 * not been freed.
 */
void ocp_problem_free(struct OcpProblem *problem);

/**
 * Length of the stacked `(y, p)` vector, or 0 for a null handle.
 *
 * # Safety
 * `problem` must be null or a live problem handle.
 */
size_t ocp_problem_dim(const struct OcpProblem *problem);

/**
 * Copies the manufactured `(y, p)` into `buf` of length `len`.
 *
 * # Safety
 * `problem` must be a live handle and `buf` valid for `len` writes.
 */
enum OcpStatus ocp_problem_reference(const struct OcpProblem *problem, double *buf, size_t len);

/**
 * Evaluates the smoothed optimality residual at `x` into `out`.
 *
 * # Safety
 * `x` and `out` must be valid for `len` reads and writes respectively.
 */
enum OcpStatus ocp_residual(const struct OcpProblem *problem,
                            const double *x,
                            double eps,
                            double *out,
                            size_t len);

/**
 * Solves `problem` from the zero initial guess. A solution handle is written
 * to `out` even when the iteration does not converge; the status is then
 * `NotConverged`.
 *
 * # Safety
 * `problem` must be a live handle, `opts` null (defaults) or valid, and `out`
 * writable.
 */
enum OcpStatus ocp_solve(const struct OcpProblem *problem,
                         const struct OcpSolveOptions *opts,
                         struct OcpSolution **out);

/**
 * # Safety
 * `solution` must be null or a live solution handle.
 */
void ocp_solution_free(struct OcpSolution *solution);

/**
 * # Safety
 * `solution` must be null or a live solution handle.
 */
bool ocp_solution_converged(const struct OcpSolution *solution);

/**
 * # Safety
 * `solution` must be null or a live solution handle.
 */
size_t ocp_solution_outer_iters(const struct OcpSolution *solution);

/**
 * Last recorded residual norm, NaN for a null handle.
 *
 * # Safety
 * `solution` must be null or a live solution handle.
 */
double ocp_solution_final_residual(const struct OcpSolution *solution);

/**
 * Copies the stacked `(y, p)` vector (length `ocp_problem_dim`).
 *
 * # Safety
 * `solution` must be a live handle and `buf` valid for `len` writes.
 */
enum OcpStatus ocp_solution_state_adjoint(const struct OcpSolution *solution,
                                          double *buf,
                                          size_t len);

/**
 * Copies the recovered control (length `ocp_problem_dim / 2`).
 *
 * # Safety
 * `solution` must be a live handle and `buf` valid for `len` writes.
 */
enum OcpStatus ocp_solution_control(const struct OcpSolution *solution, double *buf, size_t len);

/**
 * Solver report as JSON. Release with `ocp_string_free`; null on failure.
 *
 * # Safety
 * `solution` must be null or a live solution handle.
 */
char *ocp_solution_report_json(const struct OcpSolution *solution);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void ocp_string_free(char *s);

/**
 * Smoothed projection onto `[-1, 1]`; NaN for negative or non-finite `eps`.
 */
double ocp_smoothed_projection(double x, double eps);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OCP_H */

#ifndef KWGRAPH_H
#define KWGRAPH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KwReason {
  KW_REASON_NONE = 0,
  KW_REASON_H_ZERO_EVERYWHERE = 1,
  KW_REASON_H_DOES_NOT_CHANGE_SIGN = 2,
  KW_REASON_INTEGRAL_H_NONNEG = 3,
  KW_REASON_H_NOWHERE_POSITIVE = 4,
} KwReason;

/**
 * Result code of every fallible call.
 */
typedef enum KwStatus {
  KW_STATUS_OK = 0,
  KW_STATUS_NULL_POINTER = 1,
  KW_STATUS_INVALID_INPUT = 2,
  /**
   * A necessary condition on `h` fails for this sign of `c`.
   */
  KW_STATUS_NOT_SOLVABLE = 3,
  KW_STATUS_NO_CONVERGENCE = 4,
  KW_STATUS_NO_UPPER_SOLUTION = 5,
  KW_STATUS_SOLVER_FAILURE = 6,
  KW_STATUS_BUFFER_TOO_SMALL = 7,
  /**
   * The requested quantity does not exist for this solution.
   */
  KW_STATUS_UNAVAILABLE = 8,
  KW_STATUS_PANIC = 9,
} KwStatus;

/**
 * A graph, a grid on it, the sampled `h` and an optional `c`.
 */
typedef struct KwProblem KwProblem;

/**
 * A converged solution and its report.
 */
typedef struct KwSolution KwSolution;

typedef struct KwVerdict {
  /**
   * True when the necessary conditions hold.
   */
  bool necessary_ok;
  enum KwReason reason;
  double integral_h;
  double max_h;
  double min_h;
} KwVerdict;

typedef struct KwThreshold {
  /**
   * When true the threshold is minus infinity and `c_lo`, `c_hi` are `-inf`.
   */
  bool minus_infinity;
  double c_lo;
  double c_hi;
  double analytic_upper_bound;
  size_t solves;
} KwThreshold;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null if there was none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *kw_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *kw_version(void);

/**
 * Parses a problem in the JSON file format. `cells = 0` keeps the counts
 * from the file or the default spacing; otherwise every edge gets `cells`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum KwStatus kw_problem_from_json(const char *json, size_t cells, struct KwProblem **out);

/**
 * # Safety
 * `problem` must be null or a handle from [`kw_problem_from_json`] not yet freed.
 */
void kw_problem_free(struct KwProblem *problem);

/**
 * # Safety
 * `problem` must be a live handle and `out` a valid pointer.
 */
enum KwStatus kw_problem_num_dofs(const struct KwProblem *problem, size_t *out);

/**
 * Edge index (file order) and arclength from the tail of a degree of
 * freedom. Vertices report their lowest-indexed incident edge.
 *
 * # Safety
 * `problem` must be a live handle; `edge` and `s` valid pointers.
 */
enum KwStatus kw_problem_dof_location(const struct KwProblem *problem,
                                      size_t dof,
                                      size_t *edge,
                                      double *s);

/**
 * Sets `c`, replacing any value from the file.
 *
 * # Safety
 * `problem` must be a live handle.
 */
enum KwStatus kw_problem_set_c(struct KwProblem *problem, double c);

/**
 * Necessary sign conditions on `h` for the given `c`.
 *
 * # Safety
 * `problem` must be a live handle and `out` a valid pointer.
 */
enum KwStatus kw_classify(const struct KwProblem *problem, double c, struct KwVerdict *out);

/**
 * Solves with the problem's `c`. `tol <= 0` and `max_iter = 0` select the
 * defaults.
 *
 * # Safety
 * `problem` must be a live handle and `out` a valid pointer.
 */
enum KwStatus kw_solve(const struct KwProblem *problem,
                       double tol,
                       size_t max_iter,
                       struct KwSolution **out);

/**
 * # Safety
 * `solution` must be null or a handle from [`kw_solve`] not yet freed.
 */
void kw_solution_free(struct KwSolution *solution);

/**
 * Copies the nodal values into `buf`, which must hold `len` doubles, at
 * least the DOF count. DOFs are numbered vertices first, then the interior
 * nodes of every edge from tail to head.
 *
 * # Safety
 * `solution` must be a live handle and `buf` valid for `len` writes.
 */
enum KwStatus kw_solution_values(const struct KwSolution *solution, double *buf, size_t len);

/**
 * Weak residual `max |r_i| / w_i` of the solution and the iteration count.
 *
 * # Safety
 * `solution` must be a live handle; the out pointers may be null.
 */
enum KwStatus kw_solution_stats(const struct KwSolution *solution,
                                double *residual,
                                size_t *iterations);

/**
 * `λ` for `c = 0`, the constraint multiplier for `c > 0`;
 * `KW_STATUS_UNAVAILABLE` otherwise.
 *
 * # Safety
 * `solution` must be a live handle and `out` a valid pointer.
 */
enum KwStatus kw_solution_multiplier(const struct KwSolution *solution, double *out);

/**
 * The full report as JSON; release it with [`kw_string_free`]. Returns
 * null on failure.
 *
 * # Safety
 * `solution` must be a live handle.
 */
char *kw_solution_report_json(const struct KwSolution *solution);

/**
 * # Safety
 * `s` must be null or a string returned by this library not yet freed.
 */
void kw_string_free(char *s);

/**
 * Brackets the threshold `c(h)`; `bracket_tol <= 0` selects the default.
 *
 * # Safety
 * `problem` must be a live handle and `out` a valid pointer.
 */
enum KwStatus kw_threshold(const struct KwProblem *problem,
                           double bracket_tol,
                           struct KwThreshold *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KWGRAPH_H */

/* Solves u'' = c - h e^u on a three-edge star through the C interface.
 *
 *   cc -I include examples/solve.c ../../target/debug/libkwgraph_ffi.a -lpthread -ldl -lm
 */
#include <stdio.h>
#include <stdlib.h>

#include "kwgraph.h"

static const char *PROBLEM =
    "{\"vertices\": [\"c\", \"a\", \"b\", \"d\"],"
    " \"edges\": ["
    "  {\"id\": \"e1\", \"tail\": \"c\", \"head\": \"a\", \"length\": 1},"
    "  {\"id\": \"e2\", \"tail\": \"c\", \"head\": \"b\", \"length\": 1},"
    "  {\"id\": \"e3\", \"tail\": \"c\", \"head\": \"d\", \"length\": 1}],"
    " \"h\": {\"e1\": \"1 - 2*s\", \"e2\": \"1 - 2*s\", \"e3\": \"1 - 3*s\"},"
    " \"c\": 0}";

static int fail(KwStatus status) {
    const char *msg = kw_last_error();
    fprintf(stderr, "status %d: %s\n", (int)status, msg ? msg : "(no message)");
    return 1;
}

int main(void) {
    KwProblem *problem = NULL;
    KwSolution *solution = NULL;
    KwStatus status;

    printf("kwgraph %s\n", kw_version());
    if ((status = kw_problem_from_json(PROBLEM, 64, &problem)) != KW_STATUS_OK) return fail(status);

    KwVerdict verdict;
    kw_classify(problem, 0.0, &verdict);
    printf("necessary conditions: %s, integral of h = %.6f\n", verdict.necessary_ok ? "hold" : "fail", verdict.integral_h);

    if ((status = kw_solve(problem, 1e-10, 0, &solution)) != KW_STATUS_OK) {
        kw_problem_free(problem);
        return fail(status);
    }
    size_t n = 0;
    double residual = 0.0, lambda = 0.0;
    size_t iterations = 0;
    kw_problem_num_dofs(problem, &n);
    kw_solution_stats(solution, &residual, &iterations);
    kw_solution_multiplier(solution, &lambda);
    double *u = malloc(n * sizeof *u);
    kw_solution_values(solution, u, n);
    printf("dofs %zu, iterations %zu, residual %.3e, lambda %.6f\n", n, iterations, residual, lambda);
    printf("u at centre vertex %.10f\n", u[0]);

    KwThreshold threshold;
    if ((status = kw_threshold(problem, 1e-3, &threshold)) != KW_STATUS_OK) return fail(status);
    printf("threshold in [%.4f, %.4f], analytic bound %.4f\n", threshold.c_lo, threshold.c_hi,
           threshold.analytic_upper_bound);

    status = kw_solution_values(solution, u, 1);
    printf("one-slot buffer: status %d (%s)\n", (int)status, kw_last_error());

    free(u);
    kw_solution_free(solution);
    kw_problem_free(problem);
    return 0;
}

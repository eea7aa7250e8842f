#include <stdio.h>
#include <stdlib.h>
#include "ocp.h"

int main(void) {
    OcpProblemParams params = ocp_problem_params_default();
    params.n = 10;
    params.nu = 1e-2;
    params.k_tilde = 1.0;
    OcpProblem *problem = NULL;
    if (ocp_problem_new(&params, &problem) != OCP_STATUS_OK) {
        fprintf(stderr, "problem: %s\n", ocp_last_error_message());
        return 1;
    }
    OcpSolveOptions opts = ocp_solve_options_default();
    opts.method = OCP_METHOD_RASPEN_EPS;
    opts.eps_min = 1e-6;
    OcpSolution *sol = NULL;
    if (ocp_solve(problem, &opts, &sol) != OCP_STATUS_OK) {
        fprintf(stderr, "solve: %s\n", ocp_last_error_message());
        return 2;
    }
    size_t dim = ocp_problem_dim(problem);
    double *u = malloc(sizeof(double) * dim / 2);
    if (ocp_solution_control(sol, u, dim / 2) != OCP_STATUS_OK) {
        return 3;
    }
    char *json = ocp_solution_report_json(sol);
    printf("outer=%zu converged=%d\n", ocp_solution_outer_iters(sol), ocp_solution_converged(sol));
    ocp_string_free(json);
    free(u);
    ocp_solution_free(sol);
    ocp_problem_free(problem);
    return 0;
}

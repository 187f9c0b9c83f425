#include <math.h>
#include <stdio.h>
#include "krylovrl.h"

int main(void) {
    size_t rows[] = {0, 1, 1, 2};
    size_t cols[] = {0, 0, 1, 2};
    double vals[] = {2.0, 1.0, 3.0, 4.0};
    KrlMatrix *m = NULL;
    if (krl_matrix_from_triplets(3, 3, 4, rows, cols, vals, &m) != KRL_STATUS_OK) return 1;
    double b[] = {2.0, 4.0, 4.0};
    double x[3];
    KrlSolveSummary s;
    KrlSolverOptions o = krl_solver_options_default();
    if (krl_solve_constant(m, b, 3, 1, &o, x, &s) != KRL_STATUS_OK) return 2;
    krl_matrix_free(m);
    for (int i = 0; i < 3; i++)
        if (fabs(x[i] - 1.0) > 1e-12) return 3;
    if (krl_solve_constant(NULL, b, 3, 1, NULL, x, NULL) != KRL_STATUS_INVALID_ARGUMENT) return 4;
    printf("ok %zu cycles, message: %s\n", s.cycles, krl_last_error_message());
    return 0;
}

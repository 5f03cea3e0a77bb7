#include <math.h>
#include <stdio.h>
#include <stdlib.h>

#include "hmat.h"

#define CHECK(call)                                                              \
    do {                                                                         \
        HmatStatus s_ = (call);                                                  \
        if (s_ != HMAT_STATUS_OK) {                                              \
            fprintf(stderr, "%s failed (%d): %s\n", #call, s_, hmat_last_error()); \
            return 1;                                                            \
        }                                                                        \
    } while (0)

int main(void) {
    enum { N = 400 };
    double *pts = malloc(3 * N * sizeof(double));
    for (int j = 0; j < 20; j++) {
        for (int i = 0; i < 20; i++) {
            double *p = pts + 3 * (20 * j + i);
            p[0] = -1.0 + 2.0 * i / 19.0;
            p[1] = -1.0 + 2.0 * j / 19.0;
            p[2] = 0.0;
        }
    }
    HmatParams params;
    CHECK(hmat_params_default(&params));
    params.n_leaf = 40;
    params.eps_aca = 1e-6;
    HmatMatrix *m = NULL;
    CHECK(hmat_assemble(pts, NULL, N, &params, &m));
    size_t dim = 0;
    CHECK(hmat_matrix_dim(m, &dim));
    if (dim != 3 * N) return 1;

    double *b = malloc(2 * dim * sizeof(double));
    double *x = malloc(2 * dim * sizeof(double));
    double *r = malloc(2 * dim * sizeof(double));
    for (size_t i = 0; i < 2 * dim; i++) b[i] = sin(0.1 * (double)i);

    HmatFactors *f = NULL;
    CHECK(hmat_factorize(m, 1e-8, &f));
    CHECK(hmat_factors_solve(f, b, x));
    CHECK(hmat_matvec(m, x, r));
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < 2 * dim; i++) {
        num += (r[i] - b[i]) * (r[i] - b[i]);
        den += b[i] * b[i];
    }
    if (sqrt(num / den) > 1e-6) {
        fprintf(stderr, "residual %g\n", sqrt(num / den));
        return 1;
    }
    if (hmat_matvec(NULL, x, r) != HMAT_STATUS_NULL_POINTER) return 1;
    params.eps_aca = 2.0;
    HmatMatrix *bad = NULL;
    if (hmat_assemble(pts, NULL, N, &params, &bad) != HMAT_STATUS_INVALID_ARGUMENT || bad != NULL) return 1;

    hmat_factors_free(f);
    hmat_matrix_free(m);
    free(pts);
    free(b);
    free(x);
    free(r);
    printf("ok\n");
    return 0;
}

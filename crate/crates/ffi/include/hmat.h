#ifndef HMAT_FFI_H
#define HMAT_FFI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HmatStatus {
  HMAT_STATUS_OK = 0,
  HMAT_STATUS_NULL_POINTER = 1,
  HMAT_STATUS_INVALID_ARGUMENT = 2,
  HMAT_STATUS_NUMERICAL = 3,
  HMAT_STATUS_IO = 4,
  HMAT_STATUS_FORMAT = 5,
  HMAT_STATUS_PANIC = 6,
} HmatStatus;

typedef enum HmatKernel {
  HMAT_KERNEL_LAPLACE = 0,
  HMAT_KERNEL_HELMHOLTZ = 1,
  HMAT_KERNEL_ELASTO_U = 2,
  HMAT_KERNEL_ELASTO_T = 3,
} HmatKernel;

typedef struct HmatFactors HmatFactors;

typedef struct HmatMatrix HmatMatrix;

/**
 * Assembly parameters. Start from `hmat_params_default`.
 */
typedef struct HmatParams {
  enum HmatKernel kernel;
  /**
   * Circular frequency; the wavenumber for Helmholtz.
   */
  double omega;
  double rho;
  double mu;
  double nu;
  double eps_aca;
  double eta;
  size_t n_leaf;
  /**
   * Diagonal value for coincident points; negative means the point count.
   */
  double shift;
  uint64_t seed;
} HmatParams;

typedef struct HmatStorage {
  size_t n_stored;
  size_t n_dense_equiv;
  double tau;
  size_t max_rank_before;
  size_t max_rank_after;
  double bound;
  size_t c_sp;
  size_t n_fallbacks;
} HmatStorage;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message on this thread; empty when none. Valid until the next failing call.
 */
const char *hmat_last_error(void);

/**
 * Library defaults: elastodynamic U, omega 3, rho = mu = 1, nu = 1/3,
 * eps_aca 1e-4, eta 3, 100 points per leaf, shift = point count.
 */
enum HmatStatus hmat_params_default(struct HmatParams *out);

/**
 * Assembles the kernel matrix of a point cloud.
 *
 * `points` holds `3 * n_points` coordinates; `normals` is the same shape and may
 * be null unless the kernel is `ElastoT`.
 */
enum HmatStatus hmat_assemble(const double *points,
                              const double *normals,
                              size_t n_points,
                              const struct HmatParams *params,
                              struct HmatMatrix **out);

enum HmatStatus hmat_matrix_dim(const struct HmatMatrix *m, size_t *out);

/**
 * `y = A_H x`; both vectors have `dim` complex entries.
 */
enum HmatStatus hmat_matvec(const struct HmatMatrix *m, const double *x, double *y);

enum HmatStatus hmat_storage(const struct HmatMatrix *m, struct HmatStorage *out);

/**
 * H-LU factorization with truncation tolerance `eps_lu`.
 */
enum HmatStatus hmat_factorize(const struct HmatMatrix *m, double eps_lu, struct HmatFactors **out);

enum HmatStatus hmat_factors_dim(const struct HmatFactors *f, size_t *out);

/**
 * Solves `L_H U_H x = b`.
 */
enum HmatStatus hmat_factors_solve(const struct HmatFactors *f, const double *b, double *x);

/**
 * Restarted GMRES on `A_H x = b` from a zero initial guess. A run that stops
 * at `max_iters` without reaching `tol` returns `Numerical` with `x` filled.
 */
enum HmatStatus hmat_gmres(const struct HmatMatrix *m,
                           const double *b,
                           double tol,
                           size_t restart,
                           size_t max_iters,
                           double *x,
                           size_t *iterations);

enum HmatStatus hmat_matrix_save(const struct HmatMatrix *m, const char *path);

enum HmatStatus hmat_matrix_load(const char *path, struct HmatMatrix **out);

enum HmatStatus hmat_factors_save(const struct HmatFactors *f, const char *path);

enum HmatStatus hmat_factors_load(const char *path, struct HmatFactors **out);

/**
 * Releases a matrix; null is ignored.
 */
void hmat_matrix_free(struct HmatMatrix *m);

/**
 * Releases factors; null is ignored.
 */
void hmat_factors_free(struct HmatFactors *f);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HMAT_FFI_H */

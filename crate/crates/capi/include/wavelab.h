#ifndef WAVELAB_H
#define WAVELAB_H

/* Generated by cbindgen from wavelab-capi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by fallible calls.
 */
typedef enum {
  WAVELAB_STATUS_OK = 0,
  /**
   * A parameter was outside its domain (p <= 1, |d| >= 1, bad sizes).
   */
  WAVELAB_STATUS_INVALID_ARGUMENT = 1,
  /**
   * The computation failed numerically (singular system, no convergence).
   */
  WAVELAB_STATUS_NUMERIC_ERROR = 2,
  /**
   * A required pointer was null.
   */
  WAVELAB_STATUS_NULL_POINTER = 3,
} WavelabStatus;

/**
 * Opaque quadrature-grid handle for the weighted interval.
 */
typedef struct WavelabGrid WavelabGrid;

/**
 * Opaque model-parameter handle (`p` and derived constants).
 */
typedef struct WavelabParams WavelabParams;

/**
 * Summary of a modulation fit returned through [`wavelab_fit`].
 */
typedef struct {
  /**
   * 1 when every projection dropped below the tolerance.
   */
  int32_t converged;
  uint32_t iterations;
  double residual_norm;
  /**
   * Exponential coupling of consecutive fitted solitons.
   */
  double j_m;
} WavelabFitResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a parameter handle; returns null when `p <= 1`.
 */
WavelabParams *wavelab_params_new(double p);

/**
 * Frees a parameter handle (null is ignored).
 */
void wavelab_params_free(WavelabParams *params);

/**
 * The ODE blow-up amplitude `kappa0`; NaN on a null handle.
 */
double wavelab_params_kappa0(const WavelabParams *params);

/**
 * Energy of the constant profile, `E(kappa0)`; NaN on a null handle.
 */
double wavelab_energy_kappa0(const WavelabParams *params);

/**
 * Builds a Gauss quadrature grid of `n >= 8` nodes; null on failure.
 */
WavelabGrid *wavelab_grid_new(const WavelabParams *params, uintptr_t n);

/**
 * Frees a grid handle (null is ignored).
 */
void wavelab_grid_free(WavelabGrid *grid);

/**
 * Number of quadrature nodes; 0 on a null handle.
 */
uintptr_t wavelab_grid_size(const WavelabGrid *grid);

/**
 * Copies the nodes into `out` (length `len` must equal the grid size).
 */
WavelabStatus wavelab_grid_nodes(const WavelabGrid *grid, double *out, uintptr_t len);

/**
 * Pointwise stationary soliton `kappa(d, y)`; NaN outside the domain.
 */
double wavelab_kappa(const WavelabParams *params, double d, double y);

/**
 * Amplitude factor `lambda(d, nu)`; NaN outside the admissible region.
 */
double wavelab_lambda(const WavelabParams *params, double d, double nu);

/**
 * Energy-space norm of the state `(q1, q2)` sampled on the grid nodes.
 */
WavelabStatus wavelab_norm_h(const WavelabGrid *grid,
                             const double *q1,
                             const double *q2,
                             uintptr_t len,
                             double *out);

/**
 * Lyapunov energy of the state `(q1, q2)`.
 */
WavelabStatus wavelab_energy(const WavelabGrid *grid,
                             const double *q1,
                             const double *q2,
                             uintptr_t len,
                             double *out);

/**
 * Dual-pairing projection `pi_l^d(q)` for `l` in `{0, 1}`.
 */
WavelabStatus wavelab_project(const WavelabGrid *grid,
                              double d,
                              uint32_t l,
                              const double *q1,
                              const double *q2,
                              uintptr_t len,
                              double *out);

/**
 * Newton fit of `m` generalized solitons with alternating signs starting at
 * `theta1` (+1 or -1). `init_d`/`init_nu` hold the initialization and
 * receive the fitted parameters on success.
 */
WavelabStatus wavelab_fit(const WavelabGrid *grid,
                          const double *q1,
                          const double *q2,
                          uintptr_t len,
                          double theta1,
                          uintptr_t m,
                          double *init_d,
                          double *init_nu,
                          double newton_tol,
                          uintptr_t max_iter,
                          WavelabFitResult *out);

/**
 * Runs the full identity-check suite for the exponent `p`; writes the
 * number of failed checks and returns Ok when the suite ran.
 */
WavelabStatus wavelab_verify(double p, uintptr_t *failed_out);

/**
 * Library version as a static C string.
 */
const char *wavelab_version(void);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* WAVELAB_H */

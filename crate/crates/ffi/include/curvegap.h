#ifndef CURVEGAP_H
#define CURVEGAP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
#define CG_OK 0

/**
 * A required pointer was null or an argument was out of range.
 */
#define CG_INVALID_ARGUMENT 1

/**
 * The computation ran to completion but the checked property failed
 * (no witness found, decay slope above target, budget exhausted).
 */
#define CG_CHECK_FAILED 2

/**
 * Operational failure: I/O, parse, resolution, or internal error.
 */
#define CG_ERROR 3

/**
 * Opaque curve handle.
 */
typedef struct CgCurve CgCurve;

/**
 * Opaque grid-sampled set handle.
 */
typedef struct CgGrid CgGrid;

/**
 * A found two-point pattern: base point `x`, second point `y = x + curve(t)`.
 * Only the first `n` entries of `x` and `y` are meaningful.
 */
typedef struct CgWitness {
  double t;
  double gap_certified;
  double overlap_mass;
  size_t n;
  double x[8];
  double y[8];
} CgWitness;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *cg_version(void);

/**
 * Copies the last error message (NUL-terminated, truncated to `cap`) into
 * `buf` and returns the full message length in bytes (excluding the NUL).
 */
size_t cg_last_error(char *buf, size_t cap);

/**
 * Parses a curve from its JSON description, e.g.
 * `{"polys":[{"coeffs":{"1":1.0}},{"coeffs":{"2":1.0}}]}`.
 * Returns null on error (see `cg_last_error`).
 */
struct CgCurve *cg_curve_parse(const char *json);

/**
 * Releases a curve handle. Null is a no-op.
 */
void cg_curve_free(struct CgCurve *curve);

/**
 * Writes the ambient dimension and max degree of the curve.
 */
int cg_curve_dims(const struct CgCurve *curve, size_t *out_n, uint32_t *out_degree);

/**
 * Calibrates the dyadic scale-lattice spacing for the curve on an
 * `n_xi` x `n_t` test grid and writes it to `out_gamma`.
 */
int cg_calibrate_gamma(const struct CgCurve *curve, size_t n_xi, size_t n_t, uint32_t *out_gamma);

/**
 * Loads a grid set saved by the library (binary values + JSON sidecar).
 * Returns null on error.
 */
struct CgGrid *cg_grid_load(const char *path);

/**
 * Saves the grid set (binary values + JSON sidecar) at `path`.
 */
int cg_grid_save(const struct CgGrid *grid, const char *path);

/**
 * Builds a seeded random set on the unit box: each cell is 1 with
 * probability `eps`. `dims` points at `ndims` cell counts. Returns null on
 * error.
 */
struct CgGrid *cg_grid_random(size_t ndims, const size_t *dims, double eps, uint64_t seed);

/**
 * Releases a grid handle. Null is a no-op.
 */
void cg_grid_free(struct CgGrid *grid);

/**
 * Total mass (integral) of the set; NaN if the handle is null.
 */
double cg_grid_mass(const struct CgGrid *grid);

/**
 * Fits the dyadic decay slope of the curve's oscillatory multiplier over
 * `k_min..=k_max` at scale parameters `(s, ell)`, sampling `shell_points`
 * frequency-shell points. Writes the fitted slope; returns `CG_OK` when the
 * slope clears `-1/d + slack` and `CG_CHECK_FAILED` when it does not.
 */
int cg_decay_slope(const struct CgCurve *curve,
                   uint32_t s,
                   uint32_t ell,
                   int32_t k_min,
                   int32_t k_max,
                   size_t shell_points,
                   double slack,
                   double *out_slope);

/**
 * Two-point counting form of the set along the curve at rescaling `s`,
 * integrated over the full t-window [0,1].
 */
int cg_two_point_form(const struct CgGrid *grid,
                      const struct CgCurve *curve,
                      uint32_t s,
                      double *out_value);

/**
 * Searches the unit-cube set for a pattern pair {x, x + curve(t)} assuming
 * declared density `epsilon`. On success fills `out` and returns `CG_OK`;
 * returns `CG_CHECK_FAILED` when the scan completes without a witness.
 */
int cg_search_unit(const struct CgGrid *grid,
                   const struct CgCurve *curve,
                   double epsilon,
                   struct CgWitness *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* CURVEGAP_H */

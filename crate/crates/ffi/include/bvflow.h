#ifndef BVFLOW_H
#define BVFLOW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  BVF_STATUS_OK = 0,
  BVF_STATUS_NULL_POINTER = 1,
  BVF_STATUS_INVALID_ARGUMENT = 2,
  BVF_STATUS_DIMENSION_MISMATCH = 3,
  BVF_STATUS_PARSE = 4,
  BVF_STATUS_NOT_KATO = 5,
  BVF_STATUS_NUMERICAL = 6,
  BVF_STATUS_BUFFER_TOO_SMALL = 7,
  BVF_STATUS_ASSERTION_FAILED = 8,
  BVF_STATUS_IO = 9,
  BVF_STATUS_PANIC = 10,
} BvfStatus;

/**
 * Derivative `Y` of the flow along one path.
 */
typedef struct BvfDerivative BvfDerivative;

/**
 * Drift built from a catalogue declaration.
 */
typedef struct BvfDrift BvfDrift;

/**
 * Simulated flow path with its driving noise.
 */
typedef struct BvfPath BvfPath;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *bvf_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated,
 * NUL-terminated) and returns its full length in bytes.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t bvf_last_error(char *buf, size_t len);

/**
 * Builds a drift from a TOML declaration such as `id = "sign"` / `beta = 0.5`.
 *
 * # Safety
 * `decl` must be a NUL-terminated string; `out` must be writable.
 */
BvfStatus bvf_drift_new(const char *decl, BvfDrift **out);

/**
 * # Safety
 * `drift` must come from [`bvf_drift_new`] or be null.
 */
void bvf_drift_free(BvfDrift *drift);

/**
 * # Safety
 * `drift` must be a live handle.
 */
size_t bvf_drift_dimension(const BvfDrift *drift);

/**
 * `out = a(x)`; both buffers hold `d` doubles.
 *
 * # Safety
 * Pointers valid for `d` doubles.
 */
BvfStatus bvf_drift_eval(const BvfDrift *drift, const double *x, size_t d, double *out);

/**
 * Kato classification of a TOML measure declaration (`dimension`, `positive`,
 * `negative`). Writes the verdict and, when `values` is non-null, the local
 * potential per epsilon of the default grid (`inf` when infinite).
 *
 * # Safety
 * `measure` NUL-terminated; `is_kato` writable; `values` null or valid for `len` doubles.
 */
BvfStatus bvf_kato_classify(const char *measure, bool *is_kato, double *values, size_t len);

/**
 * Number of epsilons written by [`bvf_kato_classify`].
 */
size_t bvf_kato_grid_len(void);

/**
 * Euler flow from `x` on `[0, t_end]` driven by noise stream `(seed, stream)`.
 *
 * # Safety
 * `drift` live; `x` valid for `d` doubles; `out` writable.
 */
BvfStatus bvf_simulate(const BvfDrift *drift,
                       const double *x,
                       size_t d,
                       double t_end,
                       double dt,
                       uint64_t seed,
                       uint64_t stream,
                       BvfPath **out);

/**
 * # Safety
 * `path` must come from [`bvf_simulate`] or be null.
 */
void bvf_path_free(BvfPath *path);

/**
 * Number of time steps; the path has `steps + 1` states.
 *
 * # Safety
 * `path` must be a live handle.
 */
size_t bvf_path_steps(const BvfPath *path);

/**
 * States row by row, `(steps + 1) * d` doubles.
 *
 * # Safety
 * `out` valid for `len` doubles.
 */
BvfStatus bvf_path_states(const BvfPath *path, double *out, size_t len);

/**
 * Girsanov density of `g_level * a` along `x + W` for the noise of `path`.
 *
 * # Safety
 * Handles live; `out` writable.
 */
BvfStatus bvf_girsanov_density(const BvfDrift *drift,
                               const BvfPath *path,
                               double level,
                               double *out);

/**
 * Flow derivative along `path`: the gradient occupation integral for smooth
 * drifts, local time in d = 1, fine smoothing otherwise.
 *
 * # Safety
 * Handles live; `out` writable.
 */
BvfStatus bvf_derivative(const BvfDrift *drift, const BvfPath *path, BvfDerivative **out);

/**
 * # Safety
 * `y` must come from [`bvf_derivative`] or be null.
 */
void bvf_derivative_free(BvfDerivative *y);

/**
 * `Y_T` (`d * d` doubles) and `Var A_T`.
 *
 * # Safety
 * `terminal` valid for `len` doubles; `variation` null or writable.
 */
BvfStatus bvf_derivative_terminal(const BvfDerivative *y,
                                  double *terminal,
                                  size_t len,
                                  double *variation);

/**
 * Whether `|Y_t| <= exp(Var A_t)(1 + 1e-9 K)` holds at every node; `max_ratio` optional.
 *
 * # Safety
 * `holds` writable; `max_ratio` null or writable.
 */
BvfStatus bvf_derivative_gronwall(const BvfDerivative *y, bool *holds, double *max_ratio);

/**
 * Runs a scenario file; `out_dir` may be null. Failed hard checks give
 * [`BvfStatus::AssertionFailed`] with their names in the error message.
 *
 * # Safety
 * `path` NUL-terminated; `out_dir` null or NUL-terminated.
 */
BvfStatus bvf_run_scenario(const char *path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BVFLOW_H */

#ifndef QUENCHLAB_H
#define QUENCHLAB_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero is success.
 */
typedef enum QlStatus {
  QL_STATUS_OK = 0,
  QL_STATUS_NULL_POINTER = 1,
  QL_STATUS_INVALID_ARGUMENT = 2,
  QL_STATUS_NUMERICAL = 3,
  QL_STATUS_INDETERMINATE = 4,
  QL_STATUS_IO = 5,
  QL_STATUS_BUFFER_TOO_SMALL = 6,
  QL_STATUS_PANIC = 7,
} QlStatus;

typedef enum QlProfile {
  QL_PROFILE_TENT = 0,
  QL_PROFILE_BUMP = 1,
  QL_PROFILE_EPANECHNIKOV = 2,
} QlProfile;

typedef enum QlComponent {
  QL_COMPONENT_U = 0,
  QL_COMPONENT_V = 1,
} QlComponent;

typedef enum QlSimultaneity {
  QL_SIMULTANEITY_SIMULTANEOUS = 0,
  QL_SIMULTANEITY_ONLY_U = 1,
  QL_SIMULTANEITY_ONLY_V = 2,
  QL_SIMULTANEITY_INDETERMINATE = 3,
} QlSimultaneity;

typedef enum QlRateModel {
  QL_RATE_MODEL_POWER_LAW = 0,
  QL_RATE_MODEL_LOG_CORRECTED = 1,
} QlRateModel;

/**
 * Discrete nonlocal operator.
 */
typedef struct QlOperator QlOperator;

/**
 * Trajectory and quench report of one integration.
 */
typedef struct QlRun QlRun;

/**
 * Stationary solution and solver diagnostics.
 */
typedef struct QlStationary QlStationary;

/**
 * Integrator settings; obtain defaults from [`ql_controls_default`].
 */
typedef struct QlControls {
  double dt_init;
  double dt_min;
  double dt_max;
  double rtol;
  double atol;
  double quench_floor;
  double stop_floor;
  double positivity_floor;
  double t_max;
  size_t sample_stride;
  /**
   * Nonzero to store full states.
   */
  int record_full;
} QlControls;

typedef struct QlParams {
  double lambda;
  double mu;
  double p;
  double q;
  double alpha;
  double beta;
} QlParams;

typedef struct QlQuenchTime {
  double estimate;
  double lower;
  double upper;
} QlQuenchTime;

typedef struct QlRateFit {
  double exponent;
  double log_exponent;
  double r2;
  /**
   * Refined `T - t_end`.
   */
  double gap;
  size_t samples;
} QlRateFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ql_version(void);

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * failing call on the same thread.
 */
const char *ql_last_error_message(void);

/**
 * # Safety
 * `out` must point to writable memory for one `QlControls`.
 */
enum QlStatus ql_controls_default(struct QlControls *out);

/**
 * Builds the operator on `[lower, upper]` with `nodes` grid points.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum QlStatus ql_operator_new_1d(enum QlProfile kernel,
                                 double radius,
                                 double lower,
                                 double upper,
                                 size_t nodes,
                                 struct QlOperator **out);

/**
 * Builds the operator on a rectangle; arrays hold two entries each.
 *
 * # Safety
 * `lower`, `upper` and `nodes` must point to two elements; `out` to a handle
 * slot.
 */
enum QlStatus ql_operator_new_2d(enum QlProfile kernel,
                                 double radius,
                                 const double *lower,
                                 const double *upper,
                                 const size_t *nodes,
                                 struct QlOperator **out);

/**
 * Number of grid nodes, or zero for a null handle.
 *
 * # Safety
 * `op` must be null or a live operator handle.
 */
size_t ql_operator_len(const struct QlOperator *op);

/**
 * Writes `J*u_ext - u` (exterior data one) into `out`.
 *
 * # Safety
 * `u` and `out` must hold `len` elements; `len` must equal the node count.
 */
enum QlStatus ql_operator_apply(const struct QlOperator *op,
                                const double *u,
                                size_t len,
                                double *out);

/**
 * # Safety
 * `op` must be null or a handle from `ql_operator_new_*`, freed once.
 */
void ql_operator_free(struct QlOperator *op);

/**
 * Integrates from `(u0, v0)`. `controls` may be null for defaults.
 *
 * # Safety
 * `u0` and `v0` must hold `len` elements; other pointers must be valid.
 */
enum QlStatus ql_integrate(const struct QlOperator *op,
                           const struct QlParams *params,
                           const double *u0,
                           const double *v0,
                           size_t len,
                           const struct QlControls *controls_in,
                           struct QlRun **out);

/**
 * Nonzero if the run quenched.
 *
 * # Safety
 * `run` must be null or a live run handle.
 */
int ql_run_quenched(const struct QlRun *run);

/**
 * Quenching time estimate and bracket.
 *
 * # Safety
 * `run` must be a live handle and `out` writable.
 */
enum QlStatus ql_run_quench_time(const struct QlRun *run, struct QlQuenchTime *out);

/**
 * Terminal minimum of a component.
 *
 * # Safety
 * `run` must be a live handle and `out` writable.
 */
enum QlStatus ql_run_terminal_min(const struct QlRun *run, enum QlComponent c, double *out);

/**
 * Number of recorded samples, or zero for a null handle.
 *
 * # Safety
 * `run` must be null or a live run handle.
 */
size_t ql_run_samples(const struct QlRun *run);

/**
 * Copies sample times and the min-track of `c` into buffers of `len`
 * entries; either buffer may be null.
 *
 * # Safety
 * Non-null buffers must hold `len` elements.
 */
enum QlStatus ql_run_min_track(const struct QlRun *run,
                               enum QlComponent c,
                               double *times,
                               double *minima,
                               size_t len);

/**
 * Classifies a quenching run; `delta_class` must exceed the quench floor.
 *
 * # Safety
 * `run` must be a live handle and `out` writable.
 */
enum QlStatus ql_run_classify(const struct QlRun *run,
                              double delta_class,
                              enum QlSimultaneity *out);

/**
 * Fits the quenching rate of `c`. A window with `lo >= hi` (for instance
 * two zeros) selects the default window.
 *
 * # Safety
 * `run` must be a live handle and `out` writable.
 */
enum QlStatus ql_run_fit_rate(const struct QlRun *run,
                              enum QlComponent c,
                              enum QlRateModel model,
                              double window_lo,
                              double window_hi,
                              struct QlRateFit *out);

/**
 * Quench report as a NUL-terminated JSON string; release with
 * [`ql_string_free`].
 *
 * # Safety
 * `run` must be a live handle and `out` writable.
 */
enum QlStatus ql_run_report_json(const struct QlRun *run, char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void ql_string_free(char *s);

/**
 * # Safety
 * `run` must be null or a handle from `ql_integrate`, freed once.
 */
void ql_run_free(struct QlRun *run);

/**
 * Newton solve for a stationary solution from the guess `(w, z)`. A handle
 * is returned even without convergence; check [`ql_stationary_converged`].
 *
 * # Safety
 * `guess_w` and `guess_z` must hold `len` elements.
 */
enum QlStatus ql_stationary_solve(const struct QlOperator *op,
                                  const struct QlParams *params,
                                  const double *guess_w,
                                  const double *guess_z,
                                  size_t len,
                                  struct QlStationary **out);

/**
 * Integrates from data one. Sets `*quenched` and, when a stationary state
 * is reached, returns it in `out` (null otherwise).
 *
 * # Safety
 * All pointers must be valid.
 */
enum QlStatus ql_stationary_probe(const struct QlOperator *op,
                                  const struct QlParams *params,
                                  int *quenched,
                                  struct QlStationary **out);

/**
 * Nonzero if the solve converged within the a priori bounds.
 *
 * # Safety
 * `st` must be null or a live handle.
 */
int ql_stationary_converged(const struct QlStationary *st);

/**
 * Max-norm residual, NaN for a null handle.
 *
 * # Safety
 * `st` must be null or a live handle.
 */
double ql_stationary_residual(const struct QlStationary *st);

/**
 * Copies the solution into buffers of `len` entries.
 *
 * # Safety
 * `w` and `z` must hold `len` elements.
 */
enum QlStatus ql_stationary_copy(const struct QlStationary *st, double *w, double *z, size_t len);

/**
 * # Safety
 * `st` must be null or a handle from this library, freed once.
 */
void ql_stationary_free(struct QlStationary *st);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QUENCHLAB_H */

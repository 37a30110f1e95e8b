/* C interface for the magnus-qsd trajectory solver. */

#ifndef MAGNUS_QSD_H
#define MAGNUS_QSD_H

/* Generated by cbindgen from the magnus-qsd-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Integration scheme selector.
 */
typedef enum MqsdScheme {
  /**
   * Euler–Maruyama reference step (linear unraveling only).
   */
  MQSD_SCHEME_EULER_MARUYAMA = 0,
  /**
   * Stochastic Magnus exponential step, truncation order 1.
   */
  MQSD_SCHEME_MAGNUS1 = 1,
  /**
   * Stochastic Magnus exponential step, truncation order 2.
   */
  MQSD_SCHEME_MAGNUS2 = 2,
  /**
   * Stochastic Magnus exponential step, truncation order 3.
   */
  MQSD_SCHEME_MAGNUS3 = 3,
  /**
   * Stochastic Magnus exponential step, truncation order 4.
   */
  MQSD_SCHEME_MAGNUS4 = 4,
} MqsdScheme;

/**
 * Status codes returned by every fallible function in this interface.
 */
typedef enum MqsdStatus {
  /**
   * Success.
   */
  MQSD_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  MQSD_STATUS_NULL_ARGUMENT = 1,
  /**
   * An argument was outside its documented range.
   */
  MQSD_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Mismatched dimensions or an undersized output buffer.
   */
  MQSD_STATUS_DIMENSION_MISMATCH = 3,
  /**
   * A linear solve failed; the system is numerically singular.
   */
  MQSD_STATUS_SINGULAR = 4,
  /**
   * A non-finite value appeared during the computation.
   */
  MQSD_STATUS_NON_FINITE = 5,
  /**
   * A state that must have unit norm does not.
   */
  MQSD_STATUS_NOT_NORMALIZED = 6,
  /**
   * The simulation ran but failed (for example, every trajectory aborted).
   */
  MQSD_STATUS_RUN_FAILURE = 7,
  /**
   * Invalid configuration (scheme, step count, model parameters).
   */
  MQSD_STATUS_CONFIG = 8,
  /**
   * File or stream input/output failed.
   */
  MQSD_STATUS_IO = 9,
  /**
   * A string argument was not valid UTF-8.
   */
  MQSD_STATUS_UTF8 = 10,
  /**
   * An internal invariant failed (a panic was caught at the boundary).
   */
  MQSD_STATUS_INTERNAL = 11,
} MqsdStatus;

/**
 * State-equation unraveling selector.
 */
typedef enum MqsdUnraveling {
  /**
   * Linear quantum-state-diffusion equation with weight tracking.
   */
  MQSD_UNRAVELING_LINEAR = 0,
  /**
   * Norm-preserving nonlinear quantum-state-diffusion equation.
   */
  MQSD_UNRAVELING_NONLINEAR = 1,
} MqsdUnraveling;

/**
 * Opaque handle owning a Lindblad model and its canonical initial state.
 */
typedef struct MqsdModel MqsdModel;

/**
 * Opaque handle owning ensemble estimates on the time grid
 * `t_s = s * delta`, `s = 0..=n_steps`.
 */
typedef struct MqsdResult MqsdResult;

/**
 * Ensemble run configuration. Create with `mqsd_run_config_default` and
 * adjust fields before calling `mqsd_run`.
 */
typedef struct MqsdRunConfig {
  enum MqsdScheme scheme;
  enum MqsdUnraveling unraveling;
  /**
   * Nonzero enables the two-stage exponent-averaging correction
   * (nonlinear unraveling only).
   */
  int32_t rkmk;
  /**
   * Nonzero makes the order-4 structure check an error instead of a
   * silent downgrade to order 3.
   */
  int32_t strict_fourth_order;
  /**
   * Step size in the model's time unit; must be positive.
   */
  double delta;
  /**
   * Number of steps; the horizon is `delta * n_steps`.
   */
  uint64_t n_steps;
  /**
   * Trajectories per repeat.
   */
  size_t n_traj;
  /**
   * Independent repeats used for the confidence intervals.
   */
  size_t n_repeats;
  /**
   * Master seed; identical configurations reproduce bit-identical results.
   */
  uint64_t master_seed;
  /**
   * Fourier truncation order of the stochastic-increment sampler.
   */
  size_t fourier_terms;
  /**
   * Two-sided confidence level in (0, 1), for example 0.99.
   */
  double ci_level;
} MqsdRunConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the most recent error message on this thread into `buffer`
 * (NUL-terminated, truncated to `capacity` bytes). Returns the full
 * message length in bytes, excluding the NUL. A zero `capacity` or null
 * `buffer` only queries the length.
 *
 * # Safety
 *
 * `buffer` must be null or point to at least `capacity` writable bytes.
 */
size_t mqsd_last_error(char *buffer, size_t capacity);

/**
 * Library version as a static NUL-terminated string; do not free.
 */
const char *mqsd_version(void);

/**
 * Create the transverse-field Ising chain with uniform site damping and
 * the all-excited initial state. Observables are the basis populations.
 *
 * # Safety
 *
 * `out` must point to a writable `MqsdModel*` slot.
 */
enum MqsdStatus mqsd_model_tfim(size_t n_sites,
                                double coupling,
                                double transverse_field,
                                double damping_rate,
                                struct MqsdModel **out);

/**
 * Create the seven-level light-harvesting exciton-transport model
 * (femtosecond time unit) with its canonical single-site initial state.
 *
 * # Safety
 *
 * `out` must point to a writable `MqsdModel*` slot.
 */
enum MqsdStatus mqsd_model_fmo(struct MqsdModel **out);

/**
 * Create the radical-pair (spin-chemistry) model with shelving states.
 * `theta`/`phi` give the static-field direction in radians, `b0_gauss` its
 * magnitude, and `shelving_rate_per_s` the recombination rate into the
 * singlet/triplet shelves. Time unit is seconds.
 *
 * # Safety
 *
 * `out` must point to a writable `MqsdModel*` slot.
 */
enum MqsdStatus mqsd_model_rpm(double theta,
                               double phi,
                               double b0_gauss,
                               double shelving_rate_per_s,
                               struct MqsdModel **out);

/**
 * Create a driven damped qubit: Hamiltonian `omega * sigma_x` with decay
 * rate `gamma` (no decay channel when `gamma` is zero). Initial state is
 * the excited level (basis index 1, population observable `pop_1`).
 *
 * # Safety
 *
 * `out` must point to a writable `MqsdModel*` slot.
 */
enum MqsdStatus mqsd_model_damped_qubit(double omega, double gamma, struct MqsdModel **out);

/**
 * Create a model from its JSON description (fields `dim`, `hamiltonian`,
 * `jump_ops`, `observables`, `unit_note`) with a basis-state initial
 * condition.
 *
 * # Safety
 *
 * `json` must be a NUL-terminated string; `out` must point to a
 * writable `MqsdModel*` slot.
 */
enum MqsdStatus mqsd_model_from_json(const char *json,
                                     size_t initial_basis_index,
                                     struct MqsdModel **out);

/**
 * Hilbert-space dimension of the model, or 0 for a null handle.
 *
 * # Safety
 *
 * `model` must be null or a live handle from a `mqsd_model_*` constructor.
 */
size_t mqsd_model_dim(const struct MqsdModel *model);

/**
 * Number of declared observables, or 0 for a null handle.
 *
 * # Safety
 *
 * `model` must be null or a live handle from a `mqsd_model_*` constructor.
 */
size_t mqsd_model_observable_count(const struct MqsdModel *model);

/**
 * Copy the name of observable `index` into `buffer` (NUL-terminated,
 * truncated to `capacity` bytes). Returns the full name length in bytes,
 * or 0 when the handle is null or the index is out of range.
 *
 * # Safety
 *
 * `model` must be null or a live handle; `buffer` must be null or point
 * to at least `capacity` writable bytes.
 */
size_t mqsd_model_observable_name(const struct MqsdModel *model,
                                  size_t index,
                                  char *buffer,
                                  size_t capacity);

/**
 * Release a model handle. Passing null is a no-op.
 *
 * # Safety
 *
 * `model` must be null or a live handle not freed before; the handle is
 * invalid afterwards.
 */
void mqsd_model_free(struct MqsdModel *model);

/**
 * A run configuration with library defaults: order-2 Magnus, nonlinear
 * unraveling, 1000 trajectories, 10 repeats, 99% confidence intervals.
 */
struct MqsdRunConfig mqsd_run_config_default(void);

/**
 * Run the configured ensemble. On success `*out` owns the estimates.
 *
 * # Safety
 *
 * `model` must be a live handle; `config` must be null (defaults) or point
 * to a valid configuration; `out` must point to a writable `MqsdResult*`
 * slot.
 */
enum MqsdStatus mqsd_run(const struct MqsdModel *model,
                         const struct MqsdRunConfig *config,
                         struct MqsdResult **out);

/**
 * Number of grid points (steps + 1), or 0 for a null handle.
 *
 * # Safety
 *
 * `result` must be null or a live handle from `mqsd_run`.
 */
size_t mqsd_result_len(const struct MqsdResult *result);

/**
 * Number of recorded observables, or 0 for a null handle.
 *
 * # Safety
 *
 * `result` must be null or a live handle from `mqsd_run`.
 */
size_t mqsd_result_observable_count(const struct MqsdResult *result);

/**
 * Copy the time grid into `buffer` (`capacity` in elements; needs
 * `mqsd_result_len`).
 *
 * # Safety
 *
 * `result` must be a live handle; `buffer` must point to `capacity`
 * writable doubles.
 */
enum MqsdStatus mqsd_result_times(const struct MqsdResult *result, double *buffer, size_t capacity);

/**
 * Copy the ensemble mean of observable `index` over the time grid.
 *
 * # Safety
 *
 * `result` must be a live handle; `buffer` must point to `capacity`
 * writable doubles.
 */
enum MqsdStatus mqsd_result_mean(const struct MqsdResult *result,
                                 size_t index,
                                 double *buffer,
                                 size_t capacity);

/**
 * Copy the confidence-interval half-width of observable `index` over the
 * time grid (level set by the run configuration).
 *
 * # Safety
 *
 * `result` must be a live handle; `buffer` must point to `capacity`
 * writable doubles.
 */
enum MqsdStatus mqsd_result_ci_halfwidth(const struct MqsdResult *result,
                                         size_t index,
                                         double *buffer,
                                         size_t capacity);

/**
 * Run diagnostics: trajectories aborted, convergence-radius flags, and
 * whether the order-4 structure check downgraded the scheme to order 3.
 *
 * # Safety
 *
 * `result` must be a live handle; each output pointer must be null or
 * point to a writable slot.
 */
enum MqsdStatus mqsd_result_diagnostics(const struct MqsdResult *result,
                                        uint64_t *aborted_trajectories,
                                        uint64_t *radius_violations,
                                        int32_t *downgraded_to_third);

/**
 * Release a result handle. Passing null is a no-op.
 *
 * # Safety
 *
 * `result` must be null or a live handle not freed before; the handle is
 * invalid afterwards.
 */
void mqsd_result_free(struct MqsdResult *result);

/**
 * Evaluate the exact (vectorized Liouville propagation) expectation of
 * observable `index` on the grid `t_s = s * delta`, `s = 0..=n_steps`,
 * writing `n_steps + 1` values.
 *
 * # Safety
 *
 * `model` must be a live handle; `buffer` must point to `capacity`
 * writable doubles.
 */
enum MqsdStatus mqsd_exact_observable(const struct MqsdModel *model,
                                      size_t index,
                                      double delta,
                                      uint64_t n_steps,
                                      double *buffer,
                                      size_t capacity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MAGNUS_QSD_H */

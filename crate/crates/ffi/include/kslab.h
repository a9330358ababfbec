#ifndef KSLAB_H
#define KSLAB_H

#include <stddef.h>
#include <stdint.h>

// Status codes returned by every fallible call.
typedef enum KslabStatus {
  KSLAB_STATUS_OK = 0,
  KSLAB_STATUS_NULL_POINTER = 1,
  KSLAB_STATUS_INVALID_INPUT = 2,
  // A numerical routine failed (non-convergence, degenerate fit, ...).
  KSLAB_STATUS_NUMERICAL = 3,
  KSLAB_STATUS_OUT_OF_RANGE = 4,
  KSLAB_STATUS_BUFFER_TOO_SMALL = 5,
  KSLAB_STATUS_PANIC = 99,
} KslabStatus;

// How a run ended.
typedef enum KslabTermination {
  KSLAB_TERMINATION_REACHED_T_END = 0,
  KSLAB_TERMINATION_BLOWUP_DETECTED = 1,
  KSLAB_TERMINATION_DT_UNDERFLOW = 2,
} KslabTermination;

// Opaque handle to a 1D probability density stored as quantiles.
typedef struct KslabQuantileDensity KslabQuantileDensity;

// Opaque handle to a completed radial run.
typedef struct KslabTrajectory KslabTrajectory;

// Parameters of a radial Keller-Segel run from Gaussian data of the given
// total mass and width.
typedef struct KslabKsConfig {
  double mass;
  double width;
  size_t nodes;
  double radius;
  double t_end;
  double dt_initial;
  double dt_min;
  double cfl_factor;
  double blowup_sup_threshold;
  double record_interval;
  // Nonzero selects the explicit scheme.
  int32_t explicit_scheme;
} KslabKsConfig;

// One diagnostic record; `bubble_scale` is NaN when no fit was possible.
typedef struct KslabRecord {
  double t;
  double mass;
  double second_moment;
  double entropy;
  double free_energy;
  double sup_density;
  double bubble_scale;
} KslabRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread (empty if none). The pointer
// stays valid until the next failing call on the same thread.
const char *kslab_last_error(void);

// Library version as a static NUL-terminated string.
const char *kslab_version(void);

// Bubble density `8λ²/(λ² + r²)²`; NaN for `lambda <= 0`.
double kslab_bubble_density(double lambda, double r);

// Bubble mass inside radius `r`; NaN for `lambda <= 0`.
double kslab_bubble_cumulative(double lambda, double r);

// Shock time of Burgers' equation for a profile sampled at increasing `xs`
// (interpolated by a natural cubic spline). `time` receives +inf when no
// shock forms; `x0` receives the shock location or NaN.
//
// # Safety
// `xs` and `us` must point to `n` readable doubles; `time` and `x0` must be
// writable.
enum KslabStatus kslab_shock_time_sampled(const double *xs,
                                          const double *us,
                                          size_t n,
                                          double *time,
                                          double *x0);

// Defaults: `M = 4π`, width 1, 1024 nodes on `R = 20`, `t_end = 1`.
struct KslabKsConfig kslab_ks_config_default(void);

// Runs the radial solver; on success `*out` owns a new trajectory.
//
// # Safety
// `config` must be readable and `out` writable.
enum KslabStatus kslab_ks_run(const struct KslabKsConfig *config, struct KslabTrajectory **out);

// Releases a trajectory; null is ignored.
//
// # Safety
// `handle` must come from [`kslab_ks_run`] and not be used afterwards.
void kslab_trajectory_free(struct KslabTrajectory *handle);

// Number of diagnostic records (0 for a null handle).
//
// # Safety
// `handle` must be null or valid.
size_t kslab_trajectory_len(const struct KslabTrajectory *handle);

// # Safety
// `handle` must be valid and `out` writable.
enum KslabStatus kslab_trajectory_termination(const struct KslabTrajectory *handle,
                                              enum KslabTermination *out);

// # Safety
// `handle` must be valid and `out` writable.
enum KslabStatus kslab_trajectory_record(const struct KslabTrajectory *handle,
                                         size_t index,
                                         struct KslabRecord *out);

// Cell densities of the final state. `written` receives the node count
// even when the buffer is too small.
//
// # Safety
// `handle` must be valid; `buf` must hold `capacity` doubles.
enum KslabStatus kslab_trajectory_final_density(const struct KslabTrajectory *handle,
                                                double *buf,
                                                size_t capacity,
                                                size_t *written);

// Blow-up time estimate from the last records.
//
// # Safety
// `handle` must be valid and `out` writable.
enum KslabStatus kslab_trajectory_blowup_time(const struct KslabTrajectory *handle, double *out);

// Wraps strictly increasing quantiles at mass levels `(k + 1/2)/n`.
//
// # Safety
// `quantiles` must hold `n` doubles and `out` be writable.
enum KslabStatus kslab_quantile_new(const double *quantiles,
                                    size_t n,
                                    struct KslabQuantileDensity **out);

// Quantiles of a cell-averaged density on `[lo, hi]` (normalised to unit mass).
//
// # Safety
// `values` must hold `cells` doubles and `out` be writable.
enum KslabStatus kslab_quantile_from_cells(double lo,
                                           double hi,
                                           const double *values,
                                           size_t cells,
                                           size_t levels,
                                           struct KslabQuantileDensity **out);

// # Safety
// `handle` must come from this library and not be used afterwards.
void kslab_quantile_free(struct KslabQuantileDensity *handle);

// Number of levels (0 for a null handle).
//
// # Safety
// `handle` must be null or valid.
size_t kslab_quantile_len(const struct KslabQuantileDensity *handle);

// # Safety
// `handle` must be valid; `buf` must hold `capacity` doubles.
enum KslabStatus kslab_quantile_values(const struct KslabQuantileDensity *handle,
                                       double *buf,
                                       size_t capacity,
                                       size_t *written);

// Quadratic Wasserstein distance between two densities with equal level counts.
//
// # Safety
// Both handles must be valid and `out` writable.
enum KslabStatus kslab_w2(const struct KslabQuantileDensity *a,
                          const struct KslabQuantileDensity *b,
                          double *out);

// `steps` JKO steps of size `tau` for `∫ρ log ρ + ∫ curvature x²/2 ρ`;
// `*out` receives the final density.
//
// # Safety
// `initial` must be valid and `out` writable.
enum KslabStatus kslab_jko_fokker_planck(const struct KslabQuantileDensity *initial,
                                         double curvature,
                                         double tau,
                                         size_t steps,
                                         struct KslabQuantileDensity **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KSLAB_H */

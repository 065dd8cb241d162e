#ifndef CHEMOSTAT_H
#define CHEMOSTAT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ChemostatScheme {
  CHEMOSTAT_SCHEME_EULER_MARUYAMA = 0,
  CHEMOSTAT_SCHEME_MILSTEIN = 1,
} ChemostatScheme;

typedef enum ChemostatStatus {
  CHEMOSTAT_STATUS_OK = 0,
  CHEMOSTAT_STATUS_NULL_POINTER = 1,
  CHEMOSTAT_STATUS_INVALID_ARGUMENT = 2,
  CHEMOSTAT_STATUS_DOMAIN = 3,
  CHEMOSTAT_STATUS_NUMERICAL = 4,
  CHEMOSTAT_STATUS_BUFFER_TOO_SMALL = 5,
  CHEMOSTAT_STATUS_PANIC = 6,
} ChemostatStatus;

typedef enum ChemostatSurvivor {
  CHEMOSTAT_SURVIVOR_X = 0,
  CHEMOSTAT_SURVIVOR_Y = 1,
  CHEMOSTAT_SURVIVOR_BOTH_WASHOUT = 2,
  CHEMOSTAT_SURVIVOR_COEXIST = 3,
  CHEMOSTAT_SURVIVOR_UNDETERMINED = 4,
  CHEMOSTAT_SURVIVOR_NUMERICAL_FAILURE = 5,
} ChemostatSurvivor;

/**
 * Model parameters and noise.
 */
typedef struct ChemostatModel ChemostatModel;

/**
 * Sampled path of `(x, y, z)`.
 */
typedef struct ChemostatTrajectory ChemostatTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *chemostat_version(void);

/**
 * Copies the calling thread's last error message into `buf`, truncating to
 * `len - 1` bytes. Returns the full message length without the terminator.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t chemostat_last_error(char *buf, size_t len);

/**
 * The `table1` preset (no death rates) at dilution rate `theta`, without noise.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum ChemostatStatus chemostat_model_table1(double theta, struct ChemostatModel **out);

/**
 * The `table3` preset (with death rates) at dilution rate `theta`, without noise.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum ChemostatStatus chemostat_model_table3(double theta, struct ChemostatModel **out);

/**
 * Custom model; `curve_x` and `curve_y` hold `(a, b, gamma)`.
 *
 * # Safety
 * `curve_x` and `curve_y` must point to three doubles; `out` to a handle slot.
 */
enum ChemostatStatus chemostat_model_new(double theta,
                                         double z_f,
                                         const double *curve_x,
                                         const double *curve_y,
                                         struct ChemostatModel **out);

/**
 * # Safety
 * `model` must be null or a handle from a `chemostat_model_*` constructor.
 */
void chemostat_model_free(struct ChemostatModel *model);

/**
 * # Safety
 * `model` must be a live handle.
 */
enum ChemostatStatus chemostat_model_set_theta(struct ChemostatModel *model, double theta);

/**
 * # Safety
 * `model` must be a live handle.
 */
enum ChemostatStatus chemostat_model_set_z_f(struct ChemostatModel *model, double z_f);

/**
 * Independent multiplicative noise on each component.
 *
 * # Safety
 * `model` must be a live handle.
 */
enum ChemostatStatus chemostat_model_set_general_noise(struct ChemostatModel *model,
                                                       double sigma1,
                                                       double sigma2,
                                                       double sigma3);

/**
 * Noise on the dilution rate.
 *
 * # Safety
 * `model` must be a live handle.
 */
enum ChemostatStatus chemostat_model_set_dilution_noise(struct ChemostatModel *model, double sigma);

/**
 * Deterministic right-hand side at `state = (x, y, z)`.
 *
 * # Safety
 * `state` must point to three doubles and `out` to three writable doubles.
 */
enum ChemostatStatus chemostat_model_rhs(const struct ChemostatModel *model,
                                         const double *state,
                                         double *out);

/**
 * Scaled quasi-steady substrate for scaled populations `(x_bar, y_bar)`.
 *
 * # Safety
 * `model` must be a live handle and `out` a writable double.
 */
enum ChemostatStatus chemostat_stage5_zbar(const struct ChemostatModel *model,
                                           double x_bar,
                                           double y_bar,
                                           double *out);

/**
 * Adaptive integration of the deterministic system on `n_out` uniform
 * intervals of `[0, t_end]`.
 *
 * # Safety
 * `s0` must point to three doubles and `out` to a handle slot.
 */
enum ChemostatStatus chemostat_integrate_ode(const struct ChemostatModel *model,
                                             const double *s0,
                                             double t_end,
                                             size_t n_out,
                                             struct ChemostatTrajectory **out);

/**
 * One stochastic path with Wiener increments addressed by `(seed, path)`.
 * A non-positive `dt` selects the default step.
 *
 * # Safety
 * `s0` must point to three doubles and `out` to a handle slot.
 */
enum ChemostatStatus chemostat_simulate_sde(const struct ChemostatModel *model,
                                            const double *s0,
                                            double dt,
                                            double t_end,
                                            uint64_t seed,
                                            uint32_t path,
                                            enum ChemostatScheme scheme,
                                            struct ChemostatTrajectory **out);

/**
 * Number of recorded samples; 0 for a null handle.
 *
 * # Safety
 * `traj` must be null or a live handle.
 */
size_t chemostat_trajectory_len(const struct ChemostatTrajectory *traj);

/**
 * Copies the samples: `times[capacity]` and row-major `states[3 * capacity]`.
 * Either buffer may be null to skip it.
 *
 * # Safety
 * Non-null buffers must hold `capacity` (times) or `3 * capacity` (states) doubles.
 */
enum ChemostatStatus chemostat_trajectory_copy(const struct ChemostatTrajectory *traj,
                                               double *times,
                                               double *states,
                                               size_t capacity);

/**
 * Survivor label of the path.
 *
 * # Safety
 * `traj` must be a live handle and `out` writable.
 */
enum ChemostatStatus chemostat_trajectory_survivor(const struct ChemostatTrajectory *traj,
                                                   enum ChemostatSurvivor *out);

/**
 * # Safety
 * `traj` must be null or a handle from a simulation function.
 */
void chemostat_trajectory_free(struct ChemostatTrajectory *traj);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHEMOSTAT_H */

#ifndef POPDYN_H
#define POPDYN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PopdynStatus {
  POPDYN_STATUS_OK = 0,
  POPDYN_STATUS_NULL_POINTER = 1,
  POPDYN_STATUS_BUFFER_TOO_SMALL = 2,
  POPDYN_STATUS_INVALID_UTF8 = 3,
  POPDYN_STATUS_CONFIG = 4,
  POPDYN_STATUS_INVALID_STATE = 5,
  POPDYN_STATUS_UNSUPPORTED = 6,
  POPDYN_STATUS_DIVERGED = 7,
  POPDYN_STATUS_INFEASIBLE = 8,
  POPDYN_STATUS_SLATER_VIOLATION = 9,
  POPDYN_STATUS_NUMERIC = 10,
  POPDYN_STATUS_IO = 11,
  POPDYN_STATUS_INDEX_OUT_OF_RANGE = 12,
  POPDYN_STATUS_PANIC = 13,
} PopdynStatus;

typedef enum PopdynIntegrator {
  POPDYN_INTEGRATOR_EULER = 0,
  POPDYN_INTEGRATOR_RK4 = 1,
} PopdynIntegrator;

/**
 * Opaque game handle.
 */
typedef struct PopdynGame PopdynGame;

/**
 * Opaque trajectory handle.
 */
typedef struct PopdynTrajectory PopdynTrajectory;

typedef struct PopdynSimParams {
  double step;
  double horizon;
  enum PopdynIntegrator integrator;
  double convergence_tol;
  size_t convergence_window;
  size_t record_every;
  uint64_t seed;
} PopdynSimParams;

typedef struct PopdynReport {
  double primal_nash_residual;
  double dual_nash_residual;
  double feasibility_residual;
  double complementarity_residual;
  double saddle_violation;
  bool in_equilibria_set;
} PopdynReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *popdyn_last_error_message(void);

const char *popdyn_version(void);

/**
 * Builds `paper-congestion` or `paper-rps`.
 */
enum PopdynStatus popdyn_game_builtin(const char *name, struct PopdynGame **out);

/**
 * Builds a game from its JSON description.
 */
enum PopdynStatus popdyn_game_from_json(const char *json, struct PopdynGame **out);

void popdyn_game_free(struct PopdynGame *game);

/**
 * Strategy count `n` and constraint count `q` (the dual state has `q + 1` entries).
 */
enum PopdynStatus popdyn_game_dims(const struct PopdynGame *game, size_t *n, size_t *q);

enum PopdynStatus popdyn_game_masses(const struct PopdynGame *game,
                                     double *primal_mass,
                                     double *dual_mass);

/**
 * `f(x)` into `out[0..n]`.
 */
enum PopdynStatus popdyn_game_fitness(const struct PopdynGame *game,
                                      const double *x,
                                      size_t x_len,
                                      double *out,
                                      size_t out_len);

/**
 * `g(x)` into `out[0..q+1]`; entry 0 is the null constraint.
 */
enum PopdynStatus popdyn_game_constraint_values(const struct PopdynGame *game,
                                                const double *x,
                                                size_t x_len,
                                                double *out,
                                                size_t out_len);

/**
 * Primal and dual vector fields at `(x, mu)`.
 */
enum PopdynStatus popdyn_fields(const struct PopdynGame *game,
                                const char *protocol,
                                const double *x,
                                size_t x_len,
                                const double *mu,
                                size_t mu_len,
                                double *xdot,
                                size_t xdot_len,
                                double *mudot,
                                size_t mudot_len);

enum PopdynStatus popdyn_lyapunov(const struct PopdynGame *game,
                                  const char *protocol,
                                  const double *x,
                                  size_t x_len,
                                  const double *mu,
                                  size_t mu_len,
                                  double *out);

struct PopdynSimParams popdyn_sim_params_default(void);

/**
 * Integrates from `(x0, mu0)`. Non-convergence is not an error; query it
 * with `popdyn_trajectory_converged`.
 */
enum PopdynStatus popdyn_simulate(const struct PopdynGame *game,
                                  const char *protocol,
                                  const double *x0,
                                  size_t x0_len,
                                  const double *mu0,
                                  size_t mu0_len,
                                  const struct PopdynSimParams *params,
                                  struct PopdynTrajectory **out);

void popdyn_trajectory_free(struct PopdynTrajectory *traj);

/**
 * Number of recorded states; 0 for a null handle.
 */
size_t popdyn_trajectory_len(const struct PopdynTrajectory *traj);

/**
 * Whether the run met the convergence criterion; false for a null handle.
 */
bool popdyn_trajectory_converged(const struct PopdynTrajectory *traj);

/**
 * Recorded state `index`: time, `x` and `mu`. Any output pointer may be null.
 */
enum PopdynStatus popdyn_trajectory_state(const struct PopdynTrajectory *traj,
                                          size_t index,
                                          double *t,
                                          double *x,
                                          size_t x_len,
                                          double *mu,
                                          size_t mu_len);

/**
 * Equilibria-set membership of `(x, mu)` at tolerance `tol`.
 */
enum PopdynStatus popdyn_verify(const struct PopdynGame *game,
                                const double *x,
                                size_t x_len,
                                const double *mu,
                                size_t mu_len,
                                double tol,
                                struct PopdynReport *out);

/**
 * Dual mass certified by the Slater point `x_tilde` and an upper bound on
 * the optimal potential.
 */
enum PopdynStatus popdyn_dual_mass_bound(const struct PopdynGame *game,
                                         const double *x_tilde,
                                         size_t x_len,
                                         double p_star_upper,
                                         double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POPDYN_H */

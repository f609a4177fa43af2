#include <math.h>
#include <stdio.h>
#include <string.h>

#include "popdyn.h"

#define CHECK(cond)                                                   \
  do {                                                                \
    if (!(cond)) {                                                    \
      const char *m = popdyn_last_error_message();                    \
      fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond, m ? m : ""); \
      return 1;                                                       \
    }                                                                 \
  } while (0)

int main(void) {
  PopdynGame *game = NULL;
  CHECK(popdyn_game_builtin("paper-rps", &game) == POPDYN_STATUS_OK);
  size_t n = 0, q = 0;
  CHECK(popdyn_game_dims(game, &n, &q) == POPDYN_STATUS_OK);
  CHECK(n == 3 && q == 1);

  double x0[3] = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  double mu0[2] = {4.0, 0.0};
  PopdynSimParams params = popdyn_sim_params_default();
  PopdynTrajectory *traj = NULL;
  CHECK(popdyn_simulate(game, NULL, x0, 3, mu0, 2, &params, &traj) == POPDYN_STATUS_OK);
  CHECK(popdyn_trajectory_converged(traj));
  size_t len = popdyn_trajectory_len(traj);
  double t, x[3], mu[2];
  CHECK(popdyn_trajectory_state(traj, len - 1, &t, x, 3, mu, 2) == POPDYN_STATUS_OK);
  CHECK(fabs(x[0] - 0.313) < 1e-2 && fabs(x[1] - 0.044) < 1e-2 && fabs(x[2] - 0.643) < 1e-2);

  PopdynReport report;
  CHECK(popdyn_verify(game, x, 3, mu, 2, 1e-3, &report) == POPDYN_STATUS_OK);
  CHECK(report.in_equilibria_set);

  CHECK(popdyn_trajectory_state(traj, len, &t, x, 3, mu, 2) == POPDYN_STATUS_INDEX_OUT_OF_RANGE);
  CHECK(popdyn_last_error_message() != NULL);
  popdyn_trajectory_free(traj);
  popdyn_game_free(game);

  PopdynGame *cong = NULL;
  CHECK(popdyn_game_builtin("paper-congestion", &cong) == POPDYN_STATUS_OK);
  double xt[4] = {0.25, 0.25, 0.25, 0.25};
  double bound = 0.0;
  CHECK(popdyn_dual_mass_bound(cong, xt, 4, 0.0, &bound) == POPDYN_STATUS_OK);
  CHECK(fabs(bound - 121.875) < 1e-9);
  popdyn_game_free(cong);

  CHECK(popdyn_game_builtin("nope", &game) == POPDYN_STATUS_CONFIG);
  printf("ok %s\n", popdyn_version());
  return 0;
}

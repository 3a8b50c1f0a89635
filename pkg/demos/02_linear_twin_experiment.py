"""Twin experiment on the linear chain model: KF, SqrtEnKF and p-EnKF.

The p-EnKF follows the Kalman filter up to solver tolerance while the
square-root EnKF carries sampling error.  Run with
``python3 demos/02_linear_twin_experiment.py``.
"""

import numpy as np

from penkf import (GaussianPossibility, KalmanState, LinearModelConfig, ProbEnsemble,
                   UKFConfig, build_model, enkf_predict, kf_predict, kf_update, penkf_init,
                   penkf_predict, penkf_update, rmse, simulate_trajectory, sqrt_enkf_update)

rng = np.random.default_rng(7)
model = build_model(LinearModelConfig(n=8, m=8))
traj = simulate_trajectory(model, 100, rng)
N = 2 * model.n

prior = GaussianPossibility.from_covariance(model.init_mean, model.init_cov)
kf = KalmanState(model.init_mean, model.init_cov)
ens_p = penkf_init(prior, N, "random_prior", UKFConfig(), rng)
ens_s = ProbEnsemble(model.init_mean + rng.standard_normal((N + 1, model.n))
                     @ np.linalg.cholesky(model.init_cov).T)

print(" step   truth(KF)   p-EnKF vs KF   SqrtEnKF vs KF")
for k, y in enumerate(traj.observations, start=1):
    kf = kf_update(kf_predict(kf, model.transition_matrix, model.U), y, model.H, model.V)

    ens_p, pred = penkf_predict(ens_p, model.transition, model.U)
    ens_p, post = penkf_update(ens_p, pred, y, model.H, model.V)

    ens_s, mean, cov = enkf_predict(ens_s, model.transition, model.U, rng)
    ens_s = sqrt_enkf_update(ens_s, mean, cov, y, model.H, model.V)

    if k in (1, 5, 10, 25, 50, 100):
        print(f"{k:5d}   {rmse(kf.mean, traj.states[k]):9.4f}   "
              f"{rmse(post.mean, kf.mean):12.2e}   {rmse(ens_s.mean(), kf.mean):14.2e}")

# The weights never change: all the information lives in particle positions.
print("weights of the first five particles:", np.round(ens_p.weights[:5], 4))

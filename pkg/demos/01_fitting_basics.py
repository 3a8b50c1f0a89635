"""Fitting a Gaussian possibility function to a weighted ensemble.

Run with ``python3 demos/01_fitting_basics.py``.
"""

import numpy as np

from penkf import (GaussianPossibility, WeightedEnsemble, evaluate, fit_precision,
                   fit_precision_1d)

np.set_printoptions(precision=4, suppress=True)
rng = np.random.default_rng(1)

# In one dimension the fit has a closed form.  A single particle at 1.5
# carrying weight exp(-1.5**2 / (2 * 0.8)) pins the variance to 0.8.
truth = GaussianPossibility.from_covariance([0.0], [[0.8]])
w = evaluate(truth, [1.5])
ens = WeightedEnsemble.from_points([0.0], [[1.5]], [w])
print("1-D weight", w, "-> fitted variance", 1.0 / fit_precision_1d(ens))

# Several particles: the tightest constraint wins.
ens = WeightedEnsemble.from_points([0.0], [[1.0], [1.0]], [np.exp(-0.5), np.exp(-2.0)])
print("two constraints -> precision", fit_precision_1d(ens))

# Higher dimensions go through the barrier solver.  Particles drawn from a
# Gaussian and weighted by its possibility function recover it once there
# are enough of them.
n = 3
A = rng.standard_normal((n, n))
Sigma = A @ A.T + 0.5 * np.eye(n)
truth = GaussianPossibility.from_covariance(np.zeros(n), Sigma)
for N in (3, 9, 30, 90):
    X = rng.standard_normal((N, n)) @ np.linalg.cholesky(Sigma).T
    ens = WeightedEnsemble.from_points(np.zeros(n), X, evaluate(truth, X))
    fit = fit_precision(ens)
    err = np.linalg.norm(np.linalg.inv(fit.precision) - Sigma) / np.linalg.norm(Sigma)
    print(f"N={N:3d}  relative covariance error {err:.3f}  newton iterations {fit.iterations}")

# The fitted function never falls below a particle's weight.
g = GaussianPossibility.from_precision(ens.mode, fit.precision)
print("min eval - weight:", np.min(evaluate(g, ens.particles) - ens.weights))

# Weights are not probabilities: rescaling the state rescales the fit
# exactly, with no sampling noise involved.
M = np.diag([2.0, 0.5, 1.0])
moved = ens.with_particles(ens.particles @ M.T)
lam = fit_precision(moved).precision
print("M^T Lambda(M x) M == Lambda(x):", np.allclose(M.T @ lam @ M, fit.precision, rtol=1e-6))

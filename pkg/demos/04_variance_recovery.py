"""How many particles does the fit need?

Covariances are drawn from an inverse-Wishart law, particles from the
corresponding Gaussian, and the fitted covariance is compared with the
sample covariance.  Run with ``python3 demos/04_variance_recovery.py``.
"""

import numpy as np

from penkf.runner import variance_recovery

n, sizes, trials = 4, [4, 8, 16, 32, 64], 50
rows = variance_recovery(n, sizes, trials, master_seed=11)

print(f"n = {n}, {trials} trials; mean Frobenius RMSE against the true covariance")
print("    N   possibilistic   sample    fit time [ms]")
for N in sizes:
    pick = [r for r in rows if r[1] == N]
    fit = np.mean([r[4] for r in pick if r[3] == "possibilistic"])
    smp = np.mean([r[4] for r in pick if r[3] == "sample"])
    ms = 1e3 * np.mean([r[5] for r in pick if r[3] == "possibilistic"])
    print(f"{N:5d}   {fit:13.3f}   {smp:6.3f}   {ms:13.2f}")

# With n = 1 a single particle is enough.  The errors below are absolute;
# inverse-Wishart draws with one degree of freedom can be very large.
rows = variance_recovery(1, [1], 5, master_seed=11)
print("n = 1, N = 1:", [f"{r[4]:.1e}" for r in rows if r[3] == "possibilistic"])

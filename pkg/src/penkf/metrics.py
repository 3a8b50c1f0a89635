"""Error, spread and calibration metrics, and their aggregation over repeats."""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

DIVERGENCE_THRESHOLD = 1e12


def rmse(a, b):
    """Root mean squared difference; matrices are compared entrywise."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def mahalanobis(x, mu, sigma):
    """``sqrt((x - mu)^T sigma^{-1} (x - mu))`` through a Cholesky solve."""
    d = np.atleast_1d(np.asarray(x, dtype=float) - np.asarray(mu, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    if sigma.shape != (d.size, d.size):
        raise ValueError("sigma does not match the vector dimension")
    L = linalg.cholesky(sigma, lower=True, check_finite=False)
    z = linalg.solve_triangular(L, d, lower=True, check_finite=False)
    return float(np.sqrt(z @ z))


def log_det(sigma):
    """``log|sigma|`` from the Cholesky diagonal; raises ``LinAlgError`` if not SPD."""
    L = linalg.cholesky(np.atleast_2d(np.asarray(sigma, dtype=float)), lower=True,
                        check_finite=False)
    return float(2.0 * np.sum(np.log(np.diag(L))))


def is_diverged(value):
    return not np.isfinite(value) or abs(value) > DIVERGENCE_THRESHOLD


@dataclass
class MetricSeries:
    """Per-step values of one metric for one algorithm and repeat.

    Diverged steps hold ``inf`` and are flagged in ``diverged``.
    """

    algorithm: str
    metric: str
    values: np.ndarray
    repeat: int = 0
    config_hash: str = ""
    diverged: np.ndarray = field(default=None)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).copy()
        flags = np.array([is_diverged(x) for x in v], dtype=bool)
        if self.diverged is not None:
            flags |= np.asarray(self.diverged, dtype=bool)
        v[flags] = np.inf
        self.values = v
        self.diverged = flags


def quantile(values, q):
    """Quantile by linear interpolation between order statistics.

    Infinite entries sort last; interpolating between two equal values
    (including two infinities) returns that value instead of ``nan``.
    """
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        raise ValueError("empty sample")
    h = (x.size - 1) * q
    lo = int(np.floor(h))
    hi = min(lo + 1, x.size - 1)
    frac = h - lo
    if frac == 0.0 or x[lo] == x[hi]:
        return float(x[lo])
    return float(x[lo] + frac * (x[hi] - x[lo]))


def aggregate(series):
    """Per-step mean, median and quartiles across repeats.

    Returns a list of dicts with keys ``step`` (1-based), ``mean``,
    ``median``, ``q25``, ``q75`` and ``n_diverged``.
    """
    series = list(series)
    if not series:
        raise ValueError("nothing to aggregate")
    keys = {(s.algorithm, s.metric, s.config_hash) for s in series}
    if len(keys) > 1:
        raise ValueError("series mix algorithms, metrics or configs")
    values = np.vstack([s.values for s in series])
    flags = np.vstack([s.diverged for s in series])
    rows = []
    for k in range(values.shape[1]):
        col = values[:, k]
        rows.append({
            "step": k + 1,
            "mean": float(np.mean(col)),
            "median": quantile(col, 0.5),
            "q25": quantile(col, 0.25),
            "q75": quantile(col, 0.75),
            "n_diverged": int(flags[:, k].sum()),
        })
    return rows

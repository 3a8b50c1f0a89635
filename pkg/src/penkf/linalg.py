"""Small dense linear-algebra helpers shared by the filters and the fit solver.

All square roots are lower-triangular Cholesky factors, ``A = L @ L.T``.
"""

import numpy as np
from scipy import linalg


def symmetrize(a):
    """Return ``(a + a.T) / 2``."""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def cholesky(a):
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    Raises
    ------
    numpy.linalg.LinAlgError
        If ``a`` is not numerically positive definite.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return linalg.cholesky(a, lower=True, check_finite=False)


def psd_cholesky(a, tol=1e-12):
    """Lower-triangular ``L`` with ``L @ L.T == a`` for positive-semidefinite ``a``.

    Falls back to an outer-product Cholesky that zeroes columns whose pivot is
    below ``tol * max(diag(a))`` when LAPACK rejects a singular input.
    """
    a = symmetrize(np.atleast_2d(a))
    try:
        return cholesky(a)
    except np.linalg.LinAlgError:
        pass
    n = a.shape[0]
    scale = max(float(np.max(np.diag(a), initial=0.0)), 0.0)
    floor = tol * scale
    work = a.copy()
    L = np.zeros_like(work)
    for j in range(n):
        pivot = work[j, j]
        if pivot < -1e-10 * scale:
            raise np.linalg.LinAlgError("matrix is not positive semidefinite")
        if pivot <= floor:
            continue
        col = work[j:, j] / np.sqrt(pivot)
        L[j:, j] = col
        work[j:, j:] -= np.outer(col, col)
    return L


def spd_inverse(a):
    """Inverse of a symmetric positive-definite matrix through its Cholesky factor."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    c = linalg.cho_factor(a, lower=True, check_finite=False)
    return symmetrize(linalg.cho_solve(c, np.eye(a.shape[0]), check_finite=False))


def spd_logdet(a):
    """``log|a|`` for symmetric positive-definite ``a``."""
    L = cholesky(a)
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def is_positive_definite(a):
    try:
        cholesky(a)
    except np.linalg.LinAlgError:
        return False
    return True

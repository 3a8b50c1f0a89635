"""Best-fitting Gaussian possibility function for a weighted ensemble.

The precision of the fit solves the determinant-maximisation problem

    maximise    log|Lambda|
    subject to  d_i^T Lambda d_i <= -2 log w_i,   i = 1..N
                Lambda PSD,  Lambda_jk = 0 for (j, k) in the zero set

with ``d_i = x_i - x_0`` the deviations from the mode.  It is solved by a
primal log-barrier interior-point method over the free entries of the
precision (upper triangle, diagonal included).  Each constraint is rank one,
so ``Tr(C_i Lambda)`` is evaluated as a quadratic form and ``C_i`` is never
formed.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from .linalg import spd_inverse, symmetrize
from .possibility import GaussianPossibility


_potrf = lapack.dpotrf
_potri = lapack.dpotri


class UnboundedProblem(ValueError):
    """The constraints do not bound the precision (the ensemble is too small)."""


class MaxIterationsError(RuntimeError):
    """The Newton iterations hit their cap before converging."""


@dataclass(frozen=True)
class SparsityPattern:
    """Structural zeros imposed on the precision matrix.

    ``banded(b)`` keeps entries with ``|j - k| < b``, so ``banded(1)`` is
    diagonal and ``banded(2)`` tridiagonal.  ``explicit`` takes the set of
    off-diagonal index pairs forced to zero; it is symmetrised on creation.
    """

    kind: str = "full"
    bandwidth: int = None
    zeros: frozenset = field(default=frozenset(), repr=False)

    @classmethod
    def full(cls):
        return cls("full")

    @classmethod
    def banded(cls, bandwidth):
        bandwidth = int(bandwidth)
        if bandwidth < 1:
            raise ValueError("bandwidth must be a positive integer")
        return cls("banded", bandwidth)

    @classmethod
    def explicit(cls, zero_pairs):
        pairs = set()
        for j, k in zero_pairs:
            j, k = int(j), int(k)
            if j == k:
                raise ValueError("diagonal entries cannot be forced to zero")
            pairs.add((j, k))
            pairs.add((k, j))
        return cls("explicit", None, frozenset(pairs))

    @classmethod
    def from_dict(cls, spec):
        kind = spec.get("kind", "full")
        if kind == "full":
            return cls.full()
        if kind == "banded":
            return cls.banded(spec["bandwidth"])
        if kind == "explicit":
            return cls.explicit(spec.get("zeros", []))
        raise ValueError(f"unknown sparsity pattern kind {kind!r}")

    def to_dict(self):
        if self.kind == "banded":
            return {"kind": "banded", "bandwidth": self.bandwidth}
        if self.kind == "explicit":
            return {"kind": "explicit",
                    "zeros": sorted([j, k] for j, k in self.zeros if j < k)}
        return {"kind": "full"}

    def free_mask(self, n):
        """Boolean ``n x n`` mask of entries the fit may set."""
        if self.kind == "full":
            return np.ones((n, n), dtype=bool)
        if self.kind == "banded":
            j, k = np.indices((n, n))
            return np.abs(j - k) < self.bandwidth
        mask = np.ones((n, n), dtype=bool)
        for j, k in self.zeros:
            if j >= n or k >= n:
                raise ValueError(f"zero index {(j, k)} out of range for n={n}")
            mask[j, k] = False
        return mask

    def free_entries(self, n):
        """Row and column indices of the free upper-triangular entries."""
        rows, cols = np.nonzero(np.triu(self.free_mask(n)))
        return rows, cols

    @property
    def is_full(self):
        return self.kind == "full" or (self.kind == "explicit" and not self.zeros)


@dataclass(frozen=True)
class SolverOptions:
    newton_tol: float = 1e-10
    gap_tol: float = 1e-9
    barrier_factor: float = 10.0
    max_newton: int = 200
    divergence: float = 1e12

    @classmethod
    def from_dict(cls, spec):
        spec = dict(spec or {})
        unknown = set(spec) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown solver options: {sorted(unknown)}")
        return cls(**spec)


@dataclass(frozen=True)
class PrecisionFitProblem:
    """Data of one fit: deviations ``d_i``, bounds ``b_i = -2 log w_i`` and a pattern."""

    deviations: np.ndarray
    bounds: np.ndarray
    pattern: SparsityPattern = SparsityPattern()

    @classmethod
    def from_ensemble(cls, ens, pattern=None):
        bounds = -2.0 * np.log(ens.weights[1:])
        return cls(ens.deviations(), bounds, pattern or SparsityPattern.full())

    @property
    def dimension(self):
        return self.deviations.shape[1]

    @property
    def deviation_outer_products(self):
        return np.einsum("ij,ik->ijk", self.deviations, self.deviations)


@dataclass(frozen=True)
class FitResult:
    precision: np.ndarray
    slacks: np.ndarray
    iterations: int
    barrier_final: float
    duals: np.ndarray = field(default=None, repr=False)
    kkt_residual: float = np.nan

    @property
    def log_det(self):
        sign, val = np.linalg.slogdet(self.precision)
        return val if sign > 0 else -np.inf


def _hessian_gathers(rows, cols, n):
    # flat indices so that H[k, l] = Tr(S E_k S E_l) is two products of gathers
    cr = (cols[:, None] * n + rows[None, :]).ravel()
    rc = (rows[:, None] * n + cols[None, :]).ravel()
    cc = (cols[:, None] * n + cols[None, :]).ravel()
    rr = (rows[:, None] * n + rows[None, :]).ravel()
    return cr, rc, cc, rr


def _assemble(theta, rows, cols, n):
    L = np.zeros((n, n))
    L[rows, cols] = theta
    L[cols, rows] = theta
    return L


def _chol(a):
    c, info = _potrf(a, lower=1, clean=1, overwrite_a=0)
    return c if info == 0 else None


def _spd_inv_from_chol(c):
    inv, info = _potri(c, lower=1)
    if info != 0:
        raise np.linalg.LinAlgError("inverse failed")
    return np.tril(inv) + np.tril(inv, -1).T


def solve_maxdet(problem, options=None):
    """Solve ``problem`` with the primal log-barrier method.

    Returns
    -------
    FitResult
        Precision in the original coordinates together with the slacks
        ``b_i - d_i^T Lambda d_i``, total Newton iterations, final barrier
        parameter, estimated multipliers and the relative KKT residual.

    Raises
    ------
    UnboundedProblem
        If the deviations cannot bound the precision.
    MaxIterationsError
        If a centering stage needs more than ``options.max_newton`` steps.
    """
    opts = options or SolverOptions()
    D = np.asarray(problem.deviations, dtype=float)
    b = np.asarray(problem.bounds, dtype=float)
    if D.ndim != 2 or D.shape[0] != b.size:
        raise ValueError("one bound per deviation is required")
    N, n = D.shape
    if N < 1:
        raise UnboundedProblem("no deviations to fit")
    if np.any(~np.isfinite(b)) or np.any(b <= 0.0):
        raise ValueError("all bounds must be finite and strictly positive")

    # diagonal rescaling keeps every sparsity pattern and evens out the problem
    scale = np.sqrt(np.mean(D * D, axis=0))
    if np.any(scale == 0.0):
        raise UnboundedProblem("some state component never deviates from the mode")
    Ds = D / scale
    if problem.pattern.is_full and np.linalg.matrix_rank(Ds) < n:
        raise UnboundedProblem(
            f"deviations span a space of dimension {np.linalg.matrix_rank(Ds)} < {n}")
    whiten = None
    if problem.pattern.is_full:
        # a full pattern is invariant under any change of basis, so solve with
        # orthonormal deviations Q and map back: Lambda = R^{-1} Lambda_Q R^{-T}
        Ds, whiten = np.linalg.qr(Ds)

    rows, cols = problem.pattern.free_entries(n)
    diag = rows == cols
    mult = np.where(diag, 1.0, 2.0)
    A = mult * Ds[:, rows] * Ds[:, cols]

    c0 = 0.5 * np.min(b / np.sum(Ds * Ds, axis=1))
    theta = np.where(diag, c0 / n, 0.0)
    logdet0 = n * np.log(c0 / n)
    div_limit = logdet0 + n * np.log(opts.divergence)

    cr, rc, cc, rr = _hessian_gathers(rows, cols, n)
    mult_outer = 0.5 * np.outer(mult, mult)
    p = rows.size

    def factor(th, s):
        # slacks are carried along with the steps rather than recomputed as
        # b - A theta, which cancels badly for active constraints
        if np.any(s <= 0.0):
            return None, None
        return s, _chol(_assemble(th, rows, cols, n))

    def barrier(s, chol, t):
        return -2.0 * t * np.sum(np.log(np.diag(chol))) - np.sum(np.log(s))

    s, chol = factor(theta, b - A @ theta)
    t = 1.0
    iterations = 0
    while True:
        final = N / t < opts.gap_tol
        # loose centering is enough until the last barrier stage
        tol = opts.newton_tol if final else max(opts.newton_tol, 1e-5)
        best = np.inf
        stalled = 0
        for it in range(opts.max_newton + 1):
            if it == opts.max_newton:
                raise MaxIterationsError(
                    f"centering did not converge in {opts.max_newton} Newton steps (t={t:g})")
            S = _spd_inv_from_chol(chol).ravel()
            inv_s = 1.0 / s
            grad = -t * mult * S[rows * n + cols] + A.T @ inv_s
            Aw = A * inv_s[:, None]
            hess = (t * mult_outer) * (S[cr] * S[rc] + S[cc] * S[rr]).reshape(p, p)
            hess += Aw.T @ Aw
            # Jacobi equilibration keeps the Cholesky usable when Lambda is
            # badly conditioned
            jac = 1.0 / np.sqrt(np.diag(hess))
            hess *= np.outer(jac, jac)
            hc = _chol(hess)
            if hc is not None:
                step = -jac * lapack.dpotrs(hc, jac * grad, lower=1)[0]
            else:
                step = -jac * np.linalg.lstsq(hess, jac * grad, rcond=None)[0]
            Astep = A @ step
            decrement = max(-grad @ step, 0.0)
            iterations += 1
            if decrement / 2.0 <= tol:
                break
            # round-off floor: the decrement stopped shrinking while already tiny
            if decrement < best:
                best, stalled = decrement, 0
            else:
                stalled += 1
                if stalled >= 3 and best < 1e-6:
                    break
            if decrement < 0.0625:
                # quadratic-convergence region of the self-concordant barrier
                cand = theta + step
                s_new, chol_new = factor(cand, s - Astep)
                if chol_new is None:
                    break
            else:
                alpha = 1.0
                phi = barrier(s, chol, t)
                while True:
                    cand = theta + alpha * step
                    s_new, chol_new = factor(cand, s - alpha * Astep)
                    if (chol_new is not None
                            and barrier(s_new, chol_new, t) <= phi - 0.25 * alpha * decrement):
                        break
                    alpha *= 0.5
                    if alpha < 1e-12:
                        raise MaxIterationsError("line search failed to decrease the barrier")
            theta, s, chol = cand, s_new, chol_new
            if 2.0 * np.sum(np.log(np.diag(chol))) > div_limit:
                raise UnboundedProblem("log-determinant diverges; precision is unbounded")
        if final:
            break
        t_next = t * opts.barrier_factor
        # predictor: the central path is close to affine in 1/t, and
        # d(theta)/dt = H^{-1} (mult * Sigma_free) at a centred point
        if hc is not None:
            tangent = jac * lapack.dpotrs(hc, jac * mult * S[rows * n + cols], lower=1)[0]
            Atan = A @ tangent
            alpha = t * (1.0 - t / t_next)
            while alpha > 1e-3 * t:
                cand = theta + alpha * tangent
                s_new, chol_new = factor(cand, s - alpha * Atan)
                if chol_new is not None:
                    theta, s, chol = cand, s_new, chol_new
                    break
                alpha *= 0.5
        t = t_next

    Lam_s = _assemble(theta, rows, cols, n)
    if whiten is not None:
        half = linalg.solve_triangular(whiten, Lam_s, lower=False, check_finite=False)
        Lam_s = linalg.solve_triangular(whiten, half.T, lower=False, check_finite=False)
    duals = 1.0 / (t * s)
    S = _spd_inv_from_chol(chol)
    lhs = mult * S[rows, cols]
    kkt = np.linalg.norm(lhs - A.T @ duals) / max(np.linalg.norm(lhs), 1e-300)

    inv_scale = 1.0 / scale
    Lam = symmetrize(Lam_s * np.outer(inv_scale, inv_scale))
    Lam[~problem.pattern.free_mask(n)] = 0.0
    slacks = b - np.einsum("ij,jk,ik->i", D, Lam, D)
    return FitResult(Lam, slacks, iterations, t, duals, float(kkt))


def fit_precision(ens, pattern=None, options=None):
    """Precision of the best-fitting Gaussian possibility function of ``ens``."""
    if ens.size < 1:
        raise UnboundedProblem("ensemble has no particle besides the mode")
    return solve_maxdet(PrecisionFitProblem.from_ensemble(ens, pattern), options)


def fit_precision_1d(ens):
    """Closed-form precision for a scalar ensemble.

    Each constraint reads ``Lambda (x_i - mu)^2 <= -2 log w_i``, so the
    optimum is ``Lambda = min_i -2 log w_i / (x_i - mu)^2`` over the particles
    that differ from the mode.
    """
    if ens.dim != 1:
        raise ValueError("fit_precision_1d needs a one-dimensional ensemble")
    d2 = ens.deviations()[:, 0] ** 2
    moved = d2 > 0.0
    if not np.any(moved):
        raise UnboundedProblem("every particle sits at the mode")
    bounds = -2.0 * np.log(ens.weights[1:])
    return float(np.min(bounds[moved] / d2[moved]))


def gaussian_from_ensemble(ens, pattern=None, options=None):
    """Gaussian possibility function ``N̄(x_0, Lambda*^{-1})`` fitted to ``ens``."""
    fit = fit_precision(ens, pattern, options)
    return GaussianPossibility.from_precision(ens.mode.copy(), fit.precision)


def nongaussianity_gaps(ens, fit):
    """Per-particle gaps ``-2 log w_i - (x_i - x_0)^T Lambda (x_i - x_0)``.

    Zero gaps mark particles on the boundary of the fitted Gaussian; the
    larger a gap, the further that particle sits inside it.
    """
    d = ens.deviations()
    return -2.0 * np.log(ens.weights[1:]) - np.einsum("ij,jk,ik->i", d, fit.precision, d)


def fitted_covariance(fit):
    return spd_inverse(fit.precision)

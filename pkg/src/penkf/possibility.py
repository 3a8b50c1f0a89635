"""Gaussian possibility functions, weighted ensembles and affine transports.

A Gaussian possibility function ``N̄(mu, Sigma)`` is the unnormalised map
``x -> exp(-(x - mu)^T Lambda (x - mu) / 2)`` with maximum 1 at ``mu``.  It is
parametrised by its precision ``Lambda``, which only needs to be positive
semidefinite; the covariance ``Sigma = Lambda^{-1}`` exists only when the
precision is invertible.  ``Lambda = 0`` describes total ignorance.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .linalg import cholesky, psd_cholesky, spd_inverse, symmetrize

WEIGHT_CEILING = 1.0 - 1e-12
_SYM_TOL = 1e-10
_NEG_EIG_TOL = 1e-10


class SingularCovarianceError(np.linalg.LinAlgError):
    """An operation needed a covariance but the precision is singular."""


def _as_matrix(a, n=None, name="matrix"):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if n is not None and a.shape[0] != n:
        raise ValueError(f"{name} must be {n}x{n}, got {a.shape}")
    return a


def _check_symmetric(a, name):
    scale = max(float(np.max(np.abs(a), initial=0.0)), 1.0)
    if np.max(np.abs(a - a.T), initial=0.0) > _SYM_TOL * scale:
        raise ValueError(f"{name} is not symmetric")


@dataclass(frozen=True)
class GaussianPossibility:
    """Gaussian possibility function with expected value ``mean``.

    Build instances with :meth:`from_covariance` or :meth:`from_precision`;
    the constructor itself does not validate.  ``covariance`` is ``None``
    whenever ``precision`` is singular.
    """

    mean: np.ndarray
    precision: np.ndarray
    covariance: np.ndarray = None

    @classmethod
    def from_covariance(cls, mean, covariance):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = _as_matrix(covariance, mean.size, "covariance")
        _check_symmetric(cov, "covariance")
        cov = symmetrize(cov)
        try:
            prec = spd_inverse(cov)
        except np.linalg.LinAlgError:
            raise SingularCovarianceError(
                "covariance is not positive definite; use from_precision for "
                "degenerate possibility functions") from None
        return cls(mean, prec, cov)

    @classmethod
    def from_precision(cls, mean, precision):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        prec = _as_matrix(precision, mean.size, "precision")
        _check_symmetric(prec, "precision")
        prec = symmetrize(prec)
        if not np.all(np.isfinite(prec)):
            raise ValueError("precision must be finite")
        eigmin = np.linalg.eigvalsh(prec)[0] if prec.size else 0.0
        if eigmin < -_NEG_EIG_TOL * max(np.linalg.norm(prec, 2), 1e-300):
            raise ValueError("precision has a negative eigenvalue")
        try:
            cov = spd_inverse(prec)
        except np.linalg.LinAlgError:
            cov = None
        return cls(mean, prec, cov)

    @classmethod
    def uninformative(cls, n):
        """The possibility function equal to one everywhere."""
        return cls(np.zeros(n), np.zeros((n, n)), None)

    @property
    def dim(self):
        return self.mean.size

    @property
    def is_degenerate(self):
        return self.covariance is None

    def require_covariance(self):
        if self.covariance is None:
            raise SingularCovarianceError("precision is singular, covariance undefined")
        return self.covariance

    def __call__(self, x):
        return evaluate(self, x)


def evaluate(g, x):
    """Evaluate ``g`` at one point (shape ``(n,)``) or many (shape ``(k, n)``)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != g.dim:
        raise ValueError(f"point has dimension {x.shape[-1]}, expected {g.dim}")
    d = x - g.mean
    q = np.einsum("...i,ij,...j->...", d, g.precision, d)
    # round-off can push the form of a PSD precision slightly below zero
    q = np.maximum(q, 0.0)
    out = np.exp(-0.5 * q)
    return float(out) if out.ndim == 0 else out


def epistemic_uncertainty(g):
    """Integral of ``g``, i.e. ``sqrt(|2 pi Sigma|)``; ``inf`` when degenerate."""
    if g.covariance is None:
        return np.inf
    sign, logdet = np.linalg.slogdet(g.precision)
    if sign <= 0:
        return np.inf
    return float(np.exp(0.5 * (g.dim * np.log(2.0 * np.pi) - logdet)))


def bayes_update(prior, y, H, V):
    """Posterior after observing ``y = H x + e`` with ``e ~ N(0, V)``.

    Uses the gain form when the prior has a covariance and the information
    form otherwise, so an uninformative prior (zero precision) is allowed.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    V = _as_matrix(V, y.size, "V")
    if H.shape != (y.size, prior.dim):
        raise ValueError(f"H must have shape {(y.size, prior.dim)}, got {H.shape}")
    if prior.covariance is not None:
        P = prior.covariance
        S = symmetrize(H @ P @ H.T + V)
        try:
            c = linalg.cho_factor(S, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            raise SingularCovarianceError("innovation covariance is singular") from None
        K = linalg.cho_solve(c, H @ P, check_finite=False).T
        mean = prior.mean + K @ (y - H @ prior.mean)
        cov = symmetrize(P - K @ H @ P)
        return GaussianPossibility(mean, spd_inverse(cov), cov)

    try:
        Vc = linalg.cho_factor(V, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError("observation covariance is singular") from None
    HtVi = linalg.cho_solve(Vc, H, check_finite=False).T
    prec = symmetrize(prior.precision + HtVi @ H)
    info = prior.precision @ prior.mean + HtVi @ y
    try:
        cov = spd_inverse(prec)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError(
            "posterior precision is singular; the mode is not unique") from None
    return GaussianPossibility(cov @ info, prec, cov)


def linear_transform(g, A, b=None):
    """Possibility function of ``A x + b`` when ``x`` is described by ``g``."""
    A = _as_matrix(A, g.dim, "A")
    b = np.zeros(g.dim) if b is None else np.atleast_1d(np.asarray(b, dtype=float))
    if not np.linalg.cond(A) <= 1e14:
        raise np.linalg.LinAlgError("A is singular to working precision")
    lu = linalg.lu_factor(A, check_finite=False)
    mean = A @ g.mean + b
    if g.covariance is not None:
        cov = symmetrize(A @ g.covariance @ A.T)
        return GaussianPossibility(mean, spd_inverse(cov), cov)
    # precision of A x + b is A^{-T} Lambda A^{-1}
    Ainv_t_prec = linalg.lu_solve(lu, g.precision, trans=1, check_finite=False)
    prec = symmetrize(linalg.lu_solve(lu, Ainv_t_prec.T, trans=1, check_finite=False).T)
    return GaussianPossibility(mean, prec, None)


@dataclass(frozen=True)
class AffineMap:
    """``x -> linear @ x + offset``."""

    linear: np.ndarray
    offset: np.ndarray

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return x @ self.linear.T + self.offset


def transport_map(source, target):
    """Affine map pushing ``source`` onto ``target``.

    ``M(x) = mu_t + T (x - mu_s)`` with ``T = L_t L_s^{-1}`` where ``L_s`` and
    ``L_t`` are the lower Cholesky factors of the two covariances.
    """
    if source.dim != target.dim:
        raise ValueError("source and target dimensions differ")
    L_s = cholesky(source.require_covariance())
    L_t = psd_cholesky(target.require_covariance())
    # T = L_t L_s^{-1}  <=>  T^T = L_s^{-T} L_t^T
    T = linalg.solve_triangular(L_s, L_t.T, lower=True, trans="T",
                                check_finite=False).T
    return AffineMap(T, target.mean - T @ source.mean)


def _clamp_weights(weights):
    w = np.array(weights, dtype=float)
    if np.any(~np.isfinite(w)) or np.any(w <= 0.0):
        raise ValueError("weights must be finite and strictly positive")
    w[0] = 1.0
    w[1:] = np.minimum(w[1:], WEIGHT_CEILING)
    return w


@dataclass(frozen=True)
class WeightedEnsemble:
    """``N + 1`` weighted particles; particle 0 is the mode with weight exactly 1.

    Weights above ``1 - 1e-12`` for the other particles are clamped so every
    fit constraint keeps a strictly positive bound.
    """

    particles: np.ndarray
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.particles, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        if X.ndim != 2 or w.shape != (X.shape[0],):
            raise ValueError("need one weight per particle")
        if w[0] != 1.0 or np.any(w[1:] >= 1.0) or np.any(w <= 0.0):
            w = _clamp_weights(w)
        object.__setattr__(self, "particles", X)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_points(cls, mode, points, weights):
        """Prepend ``mode`` (weight 1) to ``points`` carrying ``weights``."""
        mode = np.atleast_1d(np.asarray(mode, dtype=float))
        points = np.asarray(points, dtype=float).reshape(-1, mode.size)
        w = np.concatenate([[1.0], np.asarray(weights, dtype=float).ravel()])
        return cls(np.vstack([mode, points]), _clamp_weights(w))

    @property
    def mode(self):
        return self.particles[0]

    @property
    def size(self):
        """Number of non-mode particles ``N``."""
        return self.particles.shape[0] - 1

    @property
    def dim(self):
        return self.particles.shape[1]

    def deviations(self):
        return self.particles[1:] - self.particles[0]

    def with_particles(self, particles):
        return WeightedEnsemble(particles, self.weights)


def apply_map(ens, m):
    """Transport every particle through the affine map ``m``; weights are kept.

    Evaluated as ``M(x_0) + T (x - x_0)`` so particle 0 lands exactly on the
    image of the mode.
    """
    X = ens.particles
    image0 = m.linear @ X[0] + m.offset
    out = image0 + (X - X[0]) @ m.linear.T
    out[0] = image0
    return WeightedEnsemble(out, ens.weights)

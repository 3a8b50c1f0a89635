"""The possibilistic ensemble Kalman filter and probabilistic baselines.

Baselines: Kalman filter (KF), stochastic EnKF with perturbed observations
(StEnKF), square-root EnKF (SqrtEnKF) and the unscented Kalman filter (UKF).

The p-EnKF carries a :class:`~penkf.possibility.WeightedEnsemble` whose
weights never change.  Prediction pushes every particle through the
dynamics, fits a Gaussian possibility function to the result and transports
the particles so that the fitted Gaussian becomes ``N̄(mu, Sigma + U)``.
The update is the affine square-root map.  Particle 0 is always the
expected value.

Transition maps take arrays of shape ``(k, n)`` and act row-wise.
"""

import enum
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .linalg import cholesky, psd_cholesky, spd_inverse, symmetrize
from .maxdet import fit_precision
from .possibility import GaussianPossibility, SingularCovarianceError, WeightedEnsemble, evaluate


@dataclass(frozen=True)
class KalmanState:
    mean: np.ndarray
    covariance: np.ndarray


@dataclass(frozen=True)
class ProbEnsemble:
    """Unweighted ensemble, one member per row."""

    members: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.members, dtype=float))
        if X.shape[0] < 2:
            raise ValueError("an ensemble needs at least two members")
        object.__setattr__(self, "members", X)

    @property
    def size(self):
        return self.members.shape[0]

    def mean(self):
        return self.members.mean(axis=0)

    def covariance(self):
        d = self.members - self.mean()
        return symmetrize(d.T @ d / (self.size - 1))


@dataclass(frozen=True)
class UKFConfig:
    alpha: float = 0.25
    kappa: float = 130.0
    beta: float = 2.0

    def lam(self, n):
        return self.alpha ** 2 * (n + self.kappa) - n

    def weights(self, n):
        """Mean and covariance weights of the ``2n + 1`` sigma points."""
        lam = self.lam(n)
        if n + lam <= 0:
            raise ValueError("n + lambda must be positive")
        wm = np.full(2 * n + 1, 0.5 / (n + lam))
        wc = wm.copy()
        wm[0] = lam / (n + lam)
        wc[0] = wm[0] + 1.0 - self.alpha ** 2 + self.beta
        return wm, wc


class InitScheme(str, enum.Enum):
    """How the initial p-EnKF particles are placed.

    ``random_prior`` draws from the prior; ``ukf_full`` uses all ``2n``
    non-central sigma points; ``ukf_plus`` and ``ukf_minus`` keep only
    ``mu + columns`` or ``mu - columns`` of the scaled Cholesky factor.
    """

    RANDOM_PRIOR = "random_prior"
    UKF_FULL = "ukf_full"
    UKF_PLUS = "ukf_plus"
    UKF_MINUS = "ukf_minus"

    def check(self, n, N):
        need = {InitScheme.UKF_FULL: 2 * n, InitScheme.UKF_PLUS: n,
                InitScheme.UKF_MINUS: n}.get(self)
        if need is not None and N != need:
            raise ValueError(f"{self.value} initialisation needs N = {need}, got {N}")
        if N < 1:
            raise ValueError("N must be positive")


@dataclass(frozen=True)
class GainPair:
    standard_gain: np.ndarray
    adjusted_gain: np.ndarray
    innovation_cov: np.ndarray


# -- Kalman filter ---------------------------------------------------------

def kf_predict(s, F, U):
    F = np.atleast_2d(F)
    return KalmanState(F @ s.mean, symmetrize(F @ s.covariance @ F.T + U))


def kf_update(s, y, H, V):
    H = np.atleast_2d(H)
    y = np.atleast_1d(y)
    K = compute_gains(s.covariance, H, V, adjusted=False).standard_gain
    mean = s.mean + K @ (y - H @ s.mean)
    cov = symmetrize(s.covariance - K @ H @ s.covariance)
    return KalmanState(mean, cov)


# -- ensemble baselines ----------------------------------------------------

def enkf_predict(ens, F_map, U, rng):
    """Propagate each member and add an independent ``N(0, U)`` draw.

    Returns the new ensemble with its sample mean and covariance (divisor
    ``size - 1``).
    """
    X = np.asarray(F_map(ens.members), dtype=float)
    L = psd_cholesky(U)
    X = X + rng.standard_normal(X.shape) @ L.T
    out = ProbEnsemble(X)
    return out, out.mean(), out.covariance()


def compute_gains(cov, H, V, adjusted=True):
    """Kalman gain ``K``, square-root gain ``K~`` and innovation covariance ``S``.

    ``K~ = Sigma H^T L_S^{-T} (L_S + L_V)^{-1}`` with lower Cholesky factors;
    it satisfies ``(I - K~ H) Sigma (I - K~ H)^T = (I - K H) Sigma``.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    HS = H @ cov
    S = symmetrize(HS @ H.T + V)
    try:
        L_S = cholesky(S)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError("innovation covariance is not positive definite") from None
    # K^T = S^{-1} H Sigma, by two triangular solves
    Z = linalg.solve_triangular(L_S, HS, lower=True, check_finite=False)
    K = linalg.solve_triangular(L_S, Z, lower=True, trans="T", check_finite=False).T
    if not adjusted:
        return GainPair(K, None, S)
    L_V = psd_cholesky(V)
    Kt = linalg.solve_triangular(L_S + L_V, Z, lower=True, trans="T", check_finite=False).T
    return GainPair(K, Kt, S)


def sqrt_enkf_update(ens, mean, cov, y, H, V):
    H = np.atleast_2d(H)
    g = compute_gains(cov, H, V)
    post_mean = mean + g.standard_gain @ (np.atleast_1d(y) - H @ mean)
    A = np.eye(mean.size) - g.adjusted_gain @ H
    return ProbEnsemble((ens.members - mean) @ A.T + post_mean)


def stenkf_update(ens, mean, cov, y, H, V, rng):
    """Perturbed-observation update with the gain of the ensemble covariance."""
    H = np.atleast_2d(H)
    K = compute_gains(cov, H, V, adjusted=False).standard_gain
    X = ens.members
    eta = rng.standard_normal((X.shape[0], H.shape[0])) @ psd_cholesky(V).T
    return ProbEnsemble(X + (np.atleast_1d(y) + eta - X @ H.T) @ K.T)


# -- unscented Kalman filter -----------------------------------------------

def sigma_points(mean, cov, lam):
    """``mu`` followed by ``mu + columns`` and ``mu - columns`` of ``chol((n + lam) Sigma)``."""
    n = mean.size
    L = cholesky((n + lam) * cov)
    return np.vstack([mean, mean + L.T, mean - L.T])


def ukf_predict(s, F_map, U, cfg):
    n = s.mean.size
    wm, wc = cfg.weights(n)
    chi = np.asarray(F_map(sigma_points(s.mean, s.covariance, cfg.lam(n))), dtype=float)
    mean = wm @ chi
    d = chi - mean
    return KalmanState(mean, symmetrize((d.T * wc) @ d + U))


def ukf_step(s, F_map, U, y, H, V, cfg):
    """Unscented prediction through ``F_map`` then a linear Kalman update."""
    return kf_update(ukf_predict(s, F_map, U, cfg), y, H, V)


# -- possibilistic EnKF ----------------------------------------------------

def penkf_init(prior, N, scheme, cfg, rng):
    """Initial weighted ensemble: particle 0 at the prior mode, ``N`` weighted points."""
    scheme = InitScheme(scheme)
    n = prior.dim
    scheme.check(n, N)
    mu = prior.mean
    cov = prior.require_covariance()
    if scheme is InitScheme.RANDOM_PRIOR:
        pts = mu + rng.standard_normal((N, n)) @ cholesky(cov).T
    else:
        cols = cholesky((n + cfg.lam(n)) * cov).T
        pts = {InitScheme.UKF_FULL: np.vstack([mu + cols, mu - cols]),
               InitScheme.UKF_PLUS: mu + cols,
               InitScheme.UKF_MINUS: mu - cols}[scheme]
    return WeightedEnsemble.from_points(mu, pts, evaluate(prior, pts))


def _about_mode(ens, particles, A, new_mode):
    # particle i -> new_mode + A (x_i - x_0); particle 0 lands on new_mode exactly
    out = new_mode + (particles - particles[0]) @ A.T
    out[0] = new_mode
    return WeightedEnsemble(out, ens.weights)


def _from_covariance(mean, cov):
    try:
        prec = spd_inverse(cov)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError("covariance is not positive definite") from None
    return GaussianPossibility(mean, prec, cov)


def penkf_predict(ens, F_map, U, pattern=None, options=None, return_fit=False):
    """Prediction step of the p-EnKF.

    Returns the transported ensemble and ``N̄(mu, Sigma~ + U)`` where
    ``Sigma~`` is the fit to the propagated particles; with ``return_fit``
    the :class:`~penkf.maxdet.FitResult` comes third.
    """
    X = np.asarray(F_map(ens.particles), dtype=float)
    mu = X[0].copy()
    propagated = WeightedEnsemble(X, ens.weights)
    fit = fit_precision(propagated, pattern, options)
    try:
        Sigma_fit = spd_inverse(fit.precision)
        L_src = cholesky(Sigma_fit)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError("fitted precision is singular") from None
    Sigma = symmetrize(Sigma_fit + U)
    # T = chol(Sigma~ + U) chol(Sigma~)^{-1}, so that T Sigma~ T^T = Sigma~ + U
    T = linalg.solve_triangular(L_src, psd_cholesky(Sigma).T, lower=True, trans="T",
                                check_finite=False).T
    out = (_about_mode(ens, X, T, mu), _from_covariance(mu, Sigma))
    return out + (fit,) if return_fit else out


def _affine_update(ens, pred, J, innovation, V):
    g = compute_gains(pred.require_covariance(), J, V)
    mu = pred.mean
    post_mean = mu + g.standard_gain @ innovation
    A = np.eye(mu.size) - g.adjusted_gain @ J
    cov = symmetrize(pred.covariance - g.standard_gain @ J @ pred.covariance)
    return _about_mode(ens, ens.particles, A, post_mean), _from_covariance(post_mean, cov)


def penkf_update(ens, pred, y, H, V):
    """Update step: the square-root affine map applied to every particle.

    Particle ``x`` goes to ``(I - K~ H) x + K~ H mu + K (y - H mu)``; the
    posterior is ``N̄(mu + K (y - H mu), (I - K H) Sigma)``.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    return _affine_update(ens, pred, H, np.atleast_1d(y) - H @ pred.mean, V)


def penkf_update_linearised(ens, pred, y, H_map, jacobian, V):
    """Update with a nonlinear observation map linearised at the expected value.

    Uses ``J = jacobian(mu)`` as observation matrix and ``y - H_map(mu)`` as
    innovation.
    """
    J = np.atleast_2d(np.asarray(jacobian(pred.mean), dtype=float))
    innovation = np.atleast_1d(y) - np.atleast_1d(H_map(pred.mean))
    return _affine_update(ens, pred, J, innovation, V)

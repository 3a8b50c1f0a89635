"""Twin-experiment models and the random matrices used by the fitting study.

Two state-space models share the same noise structure, ``U = u_scale * I``
and ``V = v_scale * I`` with the first ``m`` components observed:

* a linear chain, ``F = I + lambda * (superdiagonal)``;
* a Lorenz-96 variant with constant boundary values and one Euler step.

Transition maps act row-wise on arrays of shape ``(k, n)`` (or a single
``(n,)`` state), so whole ensembles move in one call.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .linalg import psd_cholesky


@dataclass(frozen=True)
class LinearModelConfig:
    n: int = 8
    m: int = 8
    lambda_coupling: float = 0.1
    u_scale: float = 0.01
    v_scale: float = 0.1
    init_mean: tuple = None
    init_var_scale: float = 10.0

    def __post_init__(self):
        _check_dims(self.n, self.m)
        _check_scales(self)


@dataclass(frozen=True)
class LR96Config:
    n: int = 8
    m: int = 8
    forcing: float = 8.0
    boundary_const: float = 1.0
    dt: float = 0.01
    u_scale: float = 0.01
    v_scale: float = 0.1
    init_mean: tuple = None
    init_var_scale: float = 10.0

    def __post_init__(self):
        _check_dims(self.n, self.m)
        if self.n < 4:
            raise ValueError("the Lorenz-96 stencil needs n >= 4")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        _check_scales(self)


def _check_dims(n, m):
    if int(n) < 1 or not 1 <= int(m) <= int(n):
        raise ValueError(f"need 1 <= m <= n, got n={n}, m={m}")


def _check_scales(cfg):
    # zero scales are allowed so noiseless trajectories can be generated
    for name in ("u_scale", "v_scale", "init_var_scale"):
        if getattr(cfg, name) < 0:
            raise ValueError(f"{name} must be non-negative")
    if cfg.init_mean is not None and len(cfg.init_mean) != cfg.n:
        raise ValueError("init_mean must have length n")


def linear_transition_matrix(n, lam):
    """Upper bidiagonal matrix with unit diagonal and ``lam`` above it."""
    if n < 1:
        raise ValueError("n must be positive")
    return np.eye(n) + lam * np.eye(n, k=1)


def observation_matrix(n, m):
    """``[I_m 0]``: observe the first ``m`` of ``n`` components."""
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= n, got n={n}, m={m}")
    return np.eye(m, n)


def lr96_step(x, cfg):
    """One Euler step of the constant-boundary Lorenz-96 model.

    The wrapped neighbours of the classical cyclic model are replaced by the
    constant ``c``: component 1 advects with ``(x_2 - c) c``, component 2
    with ``(x_3 - c) x_1`` and component ``n`` with ``(c - x_{n-2}) x_{n-1}``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if n < 4:
        raise ValueError("the Lorenz-96 stencil needs n >= 4")
    c = cfg.boundary_const
    adv = np.empty_like(x)
    adv[..., 0] = (x[..., 1] - c) * c
    adv[..., 1] = (x[..., 2] - c) * x[..., 0]
    adv[..., 2:n - 1] = (x[..., 3:n] - x[..., 0:n - 3]) * x[..., 1:n - 2]
    adv[..., n - 1] = (c - x[..., n - 3]) * x[..., n - 2]
    return x + (adv - x + cfg.forcing) * cfg.dt


@dataclass(frozen=True)
class StateSpaceModel:
    """Transition map, noise covariances and observation matrix of a twin experiment.

    ``transition_matrix`` is set only for linear models; ``transition`` is
    always available and maps ``(k, n)`` arrays row-wise.
    """

    transition: object = field(repr=False)
    U: np.ndarray
    H: np.ndarray
    V: np.ndarray
    init_mean: np.ndarray
    init_cov: np.ndarray
    transition_matrix: np.ndarray = None
    name: str = "model"

    @property
    def n(self):
        return self.H.shape[1]

    @property
    def m(self):
        return self.H.shape[0]

    @property
    def is_linear(self):
        return self.transition_matrix is not None


class _LinearMap:
    # a class rather than a closure so models pickle into worker processes
    def __init__(self, F):
        self.F = F

    def __call__(self, x):
        return np.asarray(x, dtype=float) @ self.F.T


class _LR96Map:
    def __init__(self, cfg):
        self.cfg = cfg

    def __call__(self, x):
        return lr96_step(x, self.cfg)


def build_model(cfg):
    """State-space model described by a :class:`LinearModelConfig` or :class:`LR96Config`."""
    n, m = cfg.n, cfg.m
    mean = np.zeros(n) if cfg.init_mean is None else np.asarray(cfg.init_mean, dtype=float)
    common = dict(U=cfg.u_scale * np.eye(n), H=observation_matrix(n, m),
                  V=cfg.v_scale * np.eye(m), init_mean=mean,
                  init_cov=cfg.init_var_scale * np.eye(n))
    if isinstance(cfg, LinearModelConfig):
        F = linear_transition_matrix(n, cfg.lambda_coupling)
        return StateSpaceModel(_LinearMap(F), transition_matrix=F, name="linear", **common)
    if isinstance(cfg, LR96Config):
        return StateSpaceModel(_LR96Map(cfg), name="lr96", **common)
    raise TypeError(f"unsupported model config {type(cfg).__name__}")


def sample_gaussian(rng, mean, cov, size=None):
    """Draws ``mean + L z`` with ``L`` the lower Cholesky factor of ``cov``."""
    mean = np.asarray(mean, dtype=float)
    L = psd_cholesky(cov)
    shape = (mean.size,) if size is None else (size, mean.size)
    return mean + rng.standard_normal(shape) @ L.T


@dataclass(frozen=True)
class Trajectory:
    """True states ``x_0..x_T`` (shape ``(T+1, n)``) and observations ``y_1..y_T`` (``(T, m)``)."""

    states: np.ndarray
    observations: np.ndarray

    @property
    def steps(self):
        return self.observations.shape[0]


def simulate_trajectory(model, steps, rng):
    """Sample a truth trajectory and its observations from ``model``."""
    n, m = model.n, model.m
    Lu = psd_cholesky(model.U)
    Lv = psd_cholesky(model.V)
    states = np.empty((steps + 1, n))
    obs = np.empty((steps, m))
    states[0] = sample_gaussian(rng, model.init_mean, model.init_cov)
    for k in range(1, steps + 1):
        states[k] = model.transition(states[k - 1]) + Lu @ rng.standard_normal(n)
        obs[k - 1] = model.H @ states[k] + Lv @ rng.standard_normal(m)
    return Trajectory(states, obs)


def sample_inverse_wishart(n, dof, scale, rng):
    """One draw from the inverse-Wishart law ``IW(scale, dof)``.

    Bartlett: with ``A`` lower triangular, ``A_ii^2 ~ chi2(dof - i)`` and
    standard normals below the diagonal, ``A A^T ~ W(I, dof)``.  If
    ``scale = C C^T`` then ``C^{-T} A A^T C^{-1} ~ W(scale^{-1}, dof)`` and
    its inverse is ``B^T B`` with ``B = A^{-1} C^T``.
    """
    if not dof > n - 1:
        raise ValueError("dof must exceed n - 1")
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    if scale.shape != (n, n):
        raise ValueError(f"scale must be {n}x{n}")
    C = linalg.cholesky(scale, lower=True)
    A = np.tril(rng.standard_normal((n, n)), -1)
    A[np.diag_indices(n)] = np.sqrt(rng.chisquare(dof - np.arange(n)))
    B = linalg.solve_triangular(A, C.T, lower=True)
    out = B.T @ B
    return 0.5 * (out + out.T)

"""Configuration-driven twin experiments and the variance-recovery study.

Every repeat draws its random numbers from streams derived from
``(master_seed, repeat, purpose)``, so results do not depend on the number
of worker processes, on which algorithms are requested or on their order.
"""

import csv
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from functools import partial

import numpy as np

from . import filters as flt
from .maxdet import (MaxIterationsError, SolverOptions, SparsityPattern,
                     UnboundedProblem, fit_precision, fit_precision_1d)
from .metrics import is_diverged, log_det, mahalanobis, rmse
from .models import (LinearModelConfig, LR96Config, build_model, sample_inverse_wishart,
                     simulate_trajectory)
from .possibility import GaussianPossibility, WeightedEnsemble, evaluate

ALGORITHMS = ("kf", "stenkf", "sqrtenkf", "ukf", "penkf")
METRICS = ("rmse_truth", "rmse_kf_mean", "rmse_kf_cov", "log_det", "mahalanobis")
KF_METRICS = ("rmse_kf_mean", "rmse_kf_cov")
CSV_HEADER = ("repeat", "step", "algorithm", "metric", "value", "diverged")
VR_HEADER = ("n", "N", "trial", "method", "rmse")
TIMING_HEADER = ("n", "N", "trial", "method", "seconds")

# fixed stream ids: adding an algorithm never shifts another one's draws
_STREAM = {"truth": 0, "kf": 1, "stenkf": 2, "sqrtenkf": 3, "ukf": 4, "penkf": 5}
_FILTER_ERRORS = (np.linalg.LinAlgError, UnboundedProblem, MaxIterationsError,
                  FloatingPointError, OverflowError)


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def stream(master_seed, *key):
    """Independent generator for ``key`` under ``master_seed``."""
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))))


def _check_keys(spec, allowed, where):
    unknown = set(spec) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def _model_from_dict(spec):
    spec = dict(spec)
    kind = spec.pop("kind", "linear")
    cls = {"linear": LinearModelConfig, "lr96": LR96Config}.get(kind)
    if cls is None:
        raise ConfigError(f"unknown model kind {kind!r}")
    _check_keys(spec, [f.name for f in fields(cls)], "model")
    if spec.get("init_mean") is not None:
        spec["init_mean"] = tuple(float(v) for v in spec["init_mean"])
    try:
        return cls(**spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from None


def _model_to_dict(cfg):
    d = asdict(cfg)
    d["init_mean"] = None if cfg.init_mean is None else list(cfg.init_mean)
    return {"kind": "linear" if isinstance(cfg, LinearModelConfig) else "lr96", **d}


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment description; build it with :meth:`from_dict`.

    ``ensemble_N`` is the number of non-mode particles; every ensemble method
    runs with ``N + 1`` members.
    """

    model: object
    algorithms: tuple
    ensemble_N: int
    init_scheme: flt.InitScheme = flt.InitScheme.RANDOM_PRIOR
    localisation: SparsityPattern = SparsityPattern()
    steps: int = 100
    repeats: int = 1
    master_seed: int = 0
    metrics: tuple = ()
    solver: SolverOptions = SolverOptions()
    ukf: flt.UKFConfig = flt.UKFConfig()

    @classmethod
    def from_dict(cls, spec):
        if not isinstance(spec, dict):
            raise ConfigError("config must be a JSON object")
        _check_keys(spec, [f.name for f in fields(cls)], "config")
        model = _model_from_dict(spec.get("model", {}))
        n = model.n
        algorithms = spec.get("algorithms", ["kf", "sqrtenkf", "penkf"])
        if isinstance(algorithms, str) or not algorithms:
            raise ConfigError("algorithms must be a non-empty list")
        bad = [a for a in algorithms if a not in ALGORITHMS]
        if bad:
            raise ConfigError(f"unknown algorithms {bad}; choose from {list(ALGORITHMS)}")
        algorithms = tuple(a for a in ALGORITHMS if a in algorithms)
        linear = isinstance(model, LinearModelConfig)
        if "kf" in algorithms and not linear:
            raise ConfigError("kf needs the linear model")
        try:
            N = int(spec.get("ensemble_N", 2 * n))
            scheme = flt.InitScheme(spec.get("init_scheme", "random_prior"))
            pattern = SparsityPattern.from_dict(spec.get("localisation", {"kind": "full"}))
            pattern.free_mask(n)
            solver = SolverOptions.from_dict(spec.get("solver"))
            ukf = flt.UKFConfig(**spec.get("ukf", {}))
            steps = int(spec.get("steps", 100))
            repeats = int(spec.get("repeats", 1))
            seed = int(spec.get("master_seed", 0))
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from None
        if steps < 1 or repeats < 1:
            raise ConfigError("steps and repeats must be positive")
        if not 0 <= seed < 2 ** 64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")
        if N < 1:
            raise ConfigError("ensemble_N must be positive")
        if "penkf" in algorithms:
            if pattern.is_full and N < n:
                raise ConfigError(
                    f"penkf with a full precision needs ensemble_N >= n ({N} < {n})")
            try:
                scheme.check(n, N)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if "ukf" in algorithms and n + ukf.lam(n) <= 0:
            raise ConfigError("ukf parameters give n + lambda <= 0")
        kf_metrics_ok = linear and "kf" in algorithms
        if "metrics" in spec:
            metrics = list(spec["metrics"])
            bad = [m for m in metrics if m not in METRICS]
            if bad:
                raise ConfigError(f"unknown metrics {bad}; choose from {list(METRICS)}")
            if not kf_metrics_ok and set(metrics) & set(KF_METRICS):
                raise ConfigError("KF-relative metrics need kf and the linear model")
        else:
            metrics = [m for m in METRICS if kf_metrics_ok or m not in KF_METRICS]
        metrics = tuple(m for m in METRICS if m in metrics)
        return cls(model, algorithms, N, scheme, pattern, steps, repeats, seed,
                   metrics, solver, ukf)

    def to_dict(self):
        return {
            "model": _model_to_dict(self.model),
            "algorithms": list(self.algorithms),
            "ensemble_N": self.ensemble_N,
            "init_scheme": self.init_scheme.value,
            "localisation": self.localisation.to_dict(),
            "steps": self.steps,
            "repeats": self.repeats,
            "master_seed": self.master_seed,
            "metrics": list(self.metrics),
            "solver": asdict(self.solver),
            "ukf": asdict(self.ukf),
        }

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return ExperimentConfig.from_dict(d)

    @property
    def config_hash(self):
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            spec = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return ExperimentConfig.from_dict(spec)


# -- one repeat ------------------------------------------------------------

def _kf_run(model, traj, cfg, rng):
    s = flt.KalmanState(model.init_mean, model.init_cov)
    for y in traj.observations:
        s = flt.kf_update(flt.kf_predict(s, model.transition_matrix, model.U), y,
                          model.H, model.V)
        yield s.mean, s.covariance


def _ukf_run(model, traj, cfg, rng):
    s = flt.KalmanState(model.init_mean, model.init_cov)
    for y in traj.observations:
        s = flt.ukf_step(s, model.transition, model.U, y, model.H, model.V, cfg.ukf)
        yield s.mean, s.covariance


def _ensemble_run(stochastic):
    def run(model, traj, cfg, rng):
        members = (model.init_mean
                   + rng.standard_normal((cfg.ensemble_N + 1, model.n))
                   @ np.linalg.cholesky(model.init_cov).T)
        ens = flt.ProbEnsemble(members)
        for y in traj.observations:
            ens, mean, cov = flt.enkf_predict(ens, model.transition, model.U, rng)
            if stochastic:
                ens = flt.stenkf_update(ens, mean, cov, y, model.H, model.V, rng)
            else:
                ens = flt.sqrt_enkf_update(ens, mean, cov, y, model.H, model.V)
            yield ens.mean(), ens.covariance()
    return run


def feasibility_margin(ens, precision):
    """``min_i eval(N̄(x_0, Lambda^{-1}), x_i) - w_i``; negative means infeasible."""
    g = GaussianPossibility(ens.mode, precision)
    return float(np.min(evaluate(g, ens.particles) - ens.weights))


def _penkf_run(model, traj, cfg, rng, audit=None):
    prior = GaussianPossibility.from_covariance(model.init_mean, model.init_cov)
    ens = flt.penkf_init(prior, cfg.ensemble_N, cfg.init_scheme, cfg.ukf, rng)
    for y in traj.observations:
        ens_prev = ens
        ens, pred, fit = flt.penkf_predict(ens, model.transition, model.U,
                                           cfg.localisation, cfg.solver, return_fit=True)
        if audit is not None:
            propagated = WeightedEnsemble(model.transition(ens_prev.particles), ens.weights)
            audit.append(feasibility_margin(propagated, fit.precision))
        ens, post = flt.penkf_update(ens, pred, y, model.H, model.V)
        yield post.mean, post.covariance


_RUNNERS = {"kf": _kf_run, "ukf": _ukf_run, "stenkf": _ensemble_run(True),
            "sqrtenkf": _ensemble_run(False), "penkf": _penkf_run}


def run_filter(name, model, traj, cfg, rng, audit=None):
    """Posterior ``(mean, cov)`` per step; ``None`` from the step a filter failed or diverged.

    ``audit``, if a list, receives the feasibility margin of every p-EnKF fit.
    """
    out = []
    run = _RUNNERS[name]
    gen = run(model, traj, cfg, rng, audit) if name == "penkf" else run(model, traj, cfg, rng)
    with np.errstate(all="ignore"):
        try:
            for mean, cov in gen:
                if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))) or \
                        is_diverged(np.linalg.norm(mean)) or is_diverged(np.linalg.norm(cov)):
                    break
                out.append((mean, cov))
        except _FILTER_ERRORS:
            pass
    return out + [None] * (traj.steps - len(out))


def _metric(name, est, truth, kf):
    mean, cov = est
    try:
        if name == "rmse_truth":
            return rmse(mean, truth)
        if name == "rmse_kf_mean":
            return rmse(mean, kf[0])
        if name == "rmse_kf_cov":
            return rmse(cov, kf[1])
        if name == "log_det":
            return log_det(cov)
        return mahalanobis(truth, mean, cov)
    except np.linalg.LinAlgError:
        return np.inf


def run_repeat(cfg, repeat, audit=None):
    """Rows ``(repeat, step, algorithm, metric, value, diverged)`` for one repeat."""
    model = build_model(cfg.model)
    traj = simulate_trajectory(model, cfg.steps, stream(cfg.master_seed, repeat, _STREAM["truth"]))
    results = {a: run_filter(a, model, traj, cfg, stream(cfg.master_seed, repeat, _STREAM[a]),
                             audit)
               for a in cfg.algorithms}
    kf = results.get("kf")
    rows = []
    for a, per_step in results.items():
        for k, est in enumerate(per_step):
            for metric in cfg.metrics:
                ref = None if kf is None else kf[k]
                if est is None or (metric in KF_METRICS and ref is None):
                    value = np.inf
                else:
                    value = _metric(metric, est, traj.states[k + 1], ref)
                bad = is_diverged(value)
                rows.append((repeat, k + 1, a, metric, np.inf if bad else value, int(bad)))
    return rows


def _workers(threads, jobs):
    if threads in (0, None):
        threads = os.cpu_count() or 1
    return max(1, min(int(threads), jobs))


def collect_rows(cfg, threads=1, audit=None):
    """All rows of an experiment, sorted by ``(repeat, step, algorithm, metric)``.

    Passing an ``audit`` list forces serial execution (see :func:`run_filter`).
    """
    job = partial(run_repeat, cfg, audit=audit)
    workers = 1 if audit is not None else _workers(threads, cfg.repeats)
    if workers == 1:
        chunks = [job(r) for r in range(cfg.repeats)]
    else:
        with ProcessPoolExecutor(workers) as pool:
            chunks = list(pool.map(job, range(cfg.repeats)))
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda r: r[:4])
    return rows


def _fmt(v):
    return repr(float(v))


def write_csv(path, header, rows, float_cols=()):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if i in float_cols else v for i, v in enumerate(row)])


def _write_sidecar(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_experiment(cfg, out, threads=1):
    """Run ``cfg`` and write ``out`` (CSV) plus ``out + '.json'`` (resolved config)."""
    rows = collect_rows(cfg, threads)
    write_csv(out, CSV_HEADER, rows, float_cols=(4,))
    _write_sidecar(str(out) + ".json", {"config": cfg.to_dict(), "master_seed": cfg.master_seed,
                                        "config_hash": cfg.config_hash, "rows": len(rows)})
    return rows


def rows_to_array(rows, algorithm, metric, repeats, steps):
    """``(repeats, steps)`` array of one algorithm's metric values."""
    out = np.full((repeats, steps), np.nan)
    for r, k, a, m, v, _ in rows:
        if a == algorithm and m == metric:
            out[r, k - 1] = v
    return out


# -- variance recovery -----------------------------------------------------

def _recovery_trial(n, sizes, seed, options, trial):
    rng = stream(seed, n, trial)
    Sigma = sample_inverse_wishart(n, n * n, n * np.eye(n), rng)
    truth = GaussianPossibility.from_covariance(np.zeros(n), Sigma)
    # one sample per trial; smaller N use its leading rows (common random numbers)
    X = rng.standard_normal((max(sizes), n)) @ np.linalg.cholesky(Sigma).T
    w = evaluate(truth, X)
    rows = []
    for N in sizes:
        t0 = time.perf_counter()
        sample = np.cov(X[:N], rowvar=False, ddof=1).reshape(n, n) if N > 1 else \
            np.full((n, n), np.nan)
        t1 = time.perf_counter()
        ens = WeightedEnsemble.from_points(np.zeros(n), X[:N], w[:N])
        if n == 1:
            fitted = np.array([[1.0 / fit_precision_1d(ens)]])
        else:
            fitted = np.linalg.inv(fit_precision(ens, options=options).precision)
        t2 = time.perf_counter()
        rows.append((n, N, trial, "possibilistic", rmse(fitted, Sigma), t2 - t1))
        rows.append((n, N, trial, "sample", rmse(sample, Sigma), t1 - t0))
    return rows


def variance_recovery(n, sample_sizes, trials, master_seed=0, options=None, threads=1):
    """Rows ``(n, N, trial, method, rmse, seconds)`` of the variance-recovery study."""
    sizes = sorted({int(N) for N in sample_sizes})
    if not sizes or sizes[0] < n or n < 1 or trials < 1:
        raise ConfigError("need n >= 1, trials >= 1 and every sample size >= n")
    job = partial(_recovery_trial, n, sizes, master_seed, options)
    workers = _workers(threads, trials)
    if workers == 1:
        chunks = [job(t) for t in range(trials)]
    else:
        with ProcessPoolExecutor(workers) as pool:
            chunks = list(pool.map(job, range(trials)))
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda r: (r[1], r[2], r[3]))
    return rows


def run_variance_recovery(n, sample_sizes, trials, master_seed, out, options=None, threads=1):
    """Write the study to ``out``; timings go to ``out + '.timing.csv'``.

    Wall-clock times are kept out of the main file so that it stays
    byte-identical across runs with the same seed.
    """
    rows = variance_recovery(n, sample_sizes, trials, master_seed, options, threads)
    write_csv(out, VR_HEADER, [r[:5] for r in rows], float_cols=(4,))
    write_csv(str(out) + ".timing.csv", TIMING_HEADER,
              [r[:4] + (r[5],) for r in rows], float_cols=(4,))
    _write_sidecar(str(out) + ".json", {"n": n, "sample_sizes": sorted(set(sample_sizes)),
                                        "trials": trials, "master_seed": master_seed,
                                        "solver": asdict(options or SolverOptions())})
    return rows

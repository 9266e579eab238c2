"""Independent reference values for calibrated models.

Everything here is computed without the online update: closed-form
stationary and transition laws of linear models, long-run ergodic
averages of frozen-parameter paths (with batch-means standard errors),
finite-difference objective gradients under common random numbers,
quadrature fixed points for the scalar nonlinear models, and an
empirical test that simulated ensembles match the exact transition law.
The test suite freezes these values against the calibration runs, so
this module must not depend on the update rule it is checking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from . import _kernels
from .backend import BackendError, active_backend
from .model import INTERACTION_NONE, ModelSpec
from .objective import (
    KIND_LAG,
    ObjectiveSpec,
    TargetStatistic,
    lag_steps,
    statistic_value,
)
from .rng import TAG_MAIN, NoiseSource, split_seed

N_BATCHES = 20

_PATH_CODES = frozenset({
    _kernels.K_OU,
    _kernels.K_OU_TWO_PARAM,
    _kernels.K_CUBIC,
    _kernels.K_OU_DRIFT_VOL,
    _kernels.K_CUBIC_DRIFT_VOL,
    _kernels.K_MULTI_INDEP,
    _kernels.K_MULTI_CORR,
    _kernels.K_AUTOCOV,
})


def _steps(t: float, dt: float, label: str = "t") -> int:
    n = int(round(t / dt))
    if n < 0 or abs(n * dt - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"{label} {t} is not an integral multiple of dt {dt}")
    return n


def _spd_eig(h) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"h must be a square matrix, got shape {h.shape}")
    if not np.allclose(h, h.T, rtol=1e-12, atol=1e-12):
        raise ValueError("h must be symmetric")
    evals, vecs = np.linalg.eigh(h)
    if evals.min() <= 0.0:
        raise ValueError("h must be positive definite")
    return h, evals, vecs


def _vec(v, d: int, label: str) -> np.ndarray:
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))
    if v.shape == (1,) and d > 1:
        v = np.full(d, v[0])
    if v.shape != (d,):
        raise ValueError(f"{label} has shape {v.shape}, expected ({d},)")
    return v


# ---------------------------------------------------------------------------
# Linear (Ornstein-Uhlenbeck type) laws: dX = (g - h X) dt + sigma dW


def ou_stationary(h, g, sigma: float) -> Tuple[np.ndarray, np.ndarray]:
    """Stationary law of dX = (g - h X) dt + sigma dW, h symmetric PD.

    Returns (mean, cov) = (h^-1 g, sigma^2 (2h)^-1), via the symmetric
    eigendecomposition of h.
    """
    h, evals, vecs = _spd_eig(h)
    d = h.shape[0]
    g = _vec(g, d, "g")
    sigma = float(sigma)
    mean = vecs @ ((vecs.T @ g) / evals)
    cov = (vecs * (sigma * sigma / (2.0 * evals))) @ vecs.T
    return mean, cov


def ou_transition(h, g, sigma: float, t: float, x0) -> Tuple[np.ndarray, np.ndarray]:
    """Time-t transition law of dX = (g - h X) dt + sigma dW from x0.

    mean = e^{-ht} x0 + h^-1 (I - e^{-ht}) g and
    cov  = sigma^2 (2h)^-1 (I - e^{-2ht}), both through the symmetric
    eigendecomposition of h.
    """
    h, evals, vecs = _spd_eig(h)
    d = h.shape[0]
    g = _vec(g, d, "g")
    x0 = _vec(x0, d, "x0")
    t = float(t)
    if t < 0.0:
        raise ValueError(f"t must be nonnegative, got {t}")
    sigma = float(sigma)
    decay = np.exp(-evals * t)
    mean = vecs @ (decay * (vecs.T @ x0)) + vecs @ (
        (1.0 - decay) / evals * (vecs.T @ g)
    )
    scale = sigma * sigma * (1.0 - np.exp(-2.0 * evals * t)) / (2.0 * evals)
    cov = (vecs * scale) @ vecs.T
    return mean, cov


# ---------------------------------------------------------------------------
# Frozen-parameter path simulation


def simulate_path(
    model: ModelSpec,
    theta,
    t_end: float,
    dt: float = 0.01,
    seed: int = 0,
    x0=None,
    tag: int = TAG_MAIN,
    particle: int = 0,
    backend: Optional[str] = None,
) -> np.ndarray:
    """One frozen-theta Euler path, shape (n_steps + 1, state_dim).

    Only non-interacting models qualify: ensemble-mean and running-mean
    couplings change the law when collapsed to one path.
    """
    n_steps = _steps(t_end, dt, "t_end")
    return _simulate_steps(model, theta, n_steps, dt, seed, x0, tag, particle, backend)


def _simulate_steps(model, theta, n_steps, dt, seed, x0, tag, particle, backend):
    if model.interaction != INTERACTION_NONE:
        raise ValueError(
            f"model {model.name!r} interacts across paths; single-path "
            "simulation would change its law"
        )
    d = model.state_dim
    if x0 is None:
        x0 = np.zeros(d)
    x0 = _vec(x0, d, "x0")
    x0, theta = model.validate_args(x0, theta, None, need_ctx=False)

    chosen = active_backend() if backend is None else backend
    if chosen not in ("numba", "numpy"):
        raise BackendError(f"unknown backend {chosen!r}")
    compiled = model.kernel_code in _PATH_CODES
    if chosen == "numba" and not compiled:
        if backend == "numba":
            raise BackendError(
                f"model {model.name!r} has no compiled path kernel; "
                "use the numpy backend"
            )
        chosen = "numpy"

    traj = np.empty((n_steps + 1, d))
    traj[0] = x0
    if chosen == "numba":
        consts = model.kernel_consts
        if consts.size == 0:
            consts = np.zeros(1)
        key0, key1 = split_seed(seed)
        status = _kernels._path_kernel(
            int(model.kernel_code), consts, theta, n_steps, dt,
            key0, key1, int(tag), int(particle), traj,
        )
        if status != 0:
            raise BackendError(
                f"model {model.name!r} has no compiled path kernel"
            )
        return traj

    src = NoiseSource(seed)
    sqdt = math.sqrt(dt)
    x = x0.copy()
    chunk = 16384
    k = 0
    while k < n_steps:
        m = min(chunk, n_steps - k)
        z = src.normals_span(tag, k, m, particle, model.noise_dim)
        for j in range(m):
            mu = model.drift(x, theta, None)
            sig = model.diffusion(x, theta)
            x = x + mu * dt + sig @ (z[j] * sqdt)
            traj[k + j + 1] = x
        k += m
    return traj


# ---------------------------------------------------------------------------
# Ergodic averages with batch-means errors


@dataclass(frozen=True)
class ErgodicEstimate:
    """Time average of one statistic with its batch-means standard error."""

    value: float
    stderr: float
    n_batches: int
    batch_means: np.ndarray


@dataclass(frozen=True)
class ObjectiveEstimate:
    """Ergodic estimate of J(theta) with a delta-method standard error."""

    value: float
    stderr: float
    stat_means: np.ndarray
    n_batches: int


def _stat_series(stat: TargetStatistic, traj: np.ndarray, start: int, dt: float) -> np.ndarray:
    if stat.kind != KIND_LAG:
        return statistic_value(stat, traj[start:])
    lag = lag_steps(stat.lag, dt)
    if start < lag:
        raise ValueError(
            f"burn-in covers {start} steps but the statistic lags {lag}; "
            "increase burn_in"
        )
    seg = traj[start:]
    lagged = traj[start - lag : traj.shape[0] - lag]
    return np.sum(lagged * seg, axis=-1)


def ergodic_average(
    model: ModelSpec,
    theta,
    stat: Union[TargetStatistic, Callable[[np.ndarray], np.ndarray]],
    t_end: float,
    dt: float = 0.01,
    burn_in: float = 50.0,
    seed: int = 0,
    x0=None,
    backend: Optional[str] = None,
    n_batches: int = N_BATCHES,
) -> ErgodicEstimate:
    """Long-run average of a statistic along one frozen-theta path.

    t_end is the measurement horizon, excluding the burn-in that is
    simulated and discarded first.  stat is a TargetStatistic or a
    vectorized callable mapping states (n, d) to values (n,).  The
    standard error comes from n_batches contiguous batch means.
    """
    burn_steps = _steps(burn_in, dt, "burn_in")
    meas_steps = _steps(t_end, dt, "t_end")
    if meas_steps < n_batches:
        raise ValueError(
            f"t_end spans {meas_steps} steps, fewer than {n_batches} batches"
        )
    traj = _simulate_steps(
        model, theta, burn_steps + meas_steps, dt, seed, x0, TAG_MAIN, 0, backend
    )
    start = burn_steps + 1
    if isinstance(stat, TargetStatistic):
        series = _stat_series(stat, traj, start, dt)
    else:
        series = np.asarray(stat(traj[start:]), dtype=np.float64)
        if series.shape != (meas_steps,):
            raise ValueError(
                f"statistic callable returned shape {series.shape}, "
                f"expected ({meas_steps},)"
            )
    batch_means = np.array([b.mean() for b in np.array_split(series, n_batches)])
    stderr = float(batch_means.std(ddof=1) / math.sqrt(n_batches))
    return ErgodicEstimate(
        value=float(series.mean()),
        stderr=stderr,
        n_batches=n_batches,
        batch_means=batch_means,
    )


def ergodic_objective(
    model: ModelSpec,
    theta,
    objective: ObjectiveSpec,
    t_end: float,
    dt: float = 0.01,
    burn_in: float = 50.0,
    seed: int = 0,
    x0=None,
    backend: Optional[str] = None,
    n_batches: int = N_BATCHES,
) -> ObjectiveEstimate:
    """Ergodic estimate of J(theta) = sum_j (E f_j - beta_j)^2.

    All statistics share one path.  The standard error propagates the
    batch-means covariance of the statistic averages through the
    gradient of J in those averages.
    """
    burn_steps = _steps(burn_in, dt, "burn_in")
    meas_steps = _steps(t_end, dt, "t_end")
    if meas_steps < n_batches:
        raise ValueError(
            f"t_end spans {meas_steps} steps, fewer than {n_batches} batches"
        )
    traj = _simulate_steps(
        model, theta, burn_steps + meas_steps, dt, seed, x0, TAG_MAIN, 0, backend
    )
    start = burn_steps + 1
    n_stats = len(objective.stats)
    means = np.empty(n_stats)
    batch = np.empty((n_batches, n_stats))
    for j, stat in enumerate(objective.stats):
        series = _stat_series(stat, traj, start, dt)
        means[j] = series.mean()
        batch[:, j] = [b.mean() for b in np.array_split(series, n_batches)]
    resid = means - np.array([s.target for s in objective.stats])
    value = float(np.sum(resid * resid))
    grad = 2.0 * resid
    cov = np.atleast_2d(np.cov(batch, rowvar=False, ddof=1)) / n_batches
    stderr = float(math.sqrt(max(grad @ cov @ grad, 0.0)))
    return ObjectiveEstimate(
        value=value, stderr=stderr, stat_means=means, n_batches=n_batches
    )


def finite_difference_gradient(
    model: ModelSpec,
    objective: ObjectiveSpec,
    theta,
    eps: float = 0.05,
    t_end: float = 2000.0,
    dt: float = 0.01,
    burn_in: float = 50.0,
    seed: int = 0,
    x0=None,
    backend: Optional[str] = None,
) -> np.ndarray:
    """Central-difference gradient of the ergodic objective estimate.

    Every evaluation reuses the same seed, so the difference quotient
    sees common random numbers and the path noise largely cancels.
    """
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.empty(theta.shape)
    for j in range(theta.size):
        shift = np.zeros(theta.shape)
        shift[j] = eps
        plus = ergodic_objective(
            model, theta + shift, objective, t_end,
            dt=dt, burn_in=burn_in, seed=seed, x0=x0, backend=backend,
        )
        minus = ergodic_objective(
            model, theta - shift, objective, t_end,
            dt=dt, burn_in=burn_in, seed=seed, x0=x0, backend=backend,
        )
        grad[j] = (plus.value - minus.value) / (2.0 * eps)
    return grad


# ---------------------------------------------------------------------------
# Quadrature references for the scalar nonlinear drifts


def _tilted_moments(c: float, one_minus_kappa: float) -> Tuple[float, float]:
    # Stationary density of dX = (c - one_minus_kappa X - X^3) dt + dW
    # is proportional to exp(-2 V), V = -c x + one_minus_kappa x^2/2 + x^4/4.
    x = np.linspace(-10.0, 10.0, 20001)
    v = -c * x + 0.5 * one_minus_kappa * x * x + 0.25 * x ** 4
    w = np.exp(-2.0 * (v - v.min()))
    z = w.sum()
    m1 = float((x * w).sum() / z)
    m2 = float((x * x * w).sum() / z)
    return m1, m2


@lru_cache(maxsize=64)
def _mean_field_star_cached(kappa: float, target_sq: float) -> float:
    def self_consistent(theta: float) -> Tuple[float, float]:
        if kappa == 0.0:
            return _tilted_moments(theta, 1.0 - kappa)

        def gap(m: float) -> float:
            return _tilted_moments(theta - kappa * m, 1.0 - kappa)[0] - m

        m_star = brentq(gap, -20.0, 20.0, xtol=1e-12)
        return _tilted_moments(theta - kappa * m_star, 1.0 - kappa)

    def excess(theta: float) -> float:
        return self_consistent(theta)[1] - target_sq

    if excess(0.0) >= 0.0:
        raise ValueError(
            f"target second moment {target_sq} is reached already at theta = 0"
        )
    hi = 4.0
    while excess(hi) < 0.0:
        hi *= 2.0
        if hi > 512.0:
            raise ValueError(f"no theta below 512 reaches second moment {target_sq}")
    return float(brentq(excess, 0.0, hi, xtol=1e-10))


def mean_field_theta_star(kappa: float, target_sq: float) -> float:
    """theta solving E X^2 = target under the self-consistent mean-field law.

    The stationary density for a frozen interaction mean m is an explicit
    quartic tilt; m is pinned by the fixed point E X = m, and theta by a
    bracketing root find on the resulting second moment.  kappa = 0
    reduces to the plain cubic-drift model.
    """
    return _mean_field_star_cached(float(kappa), float(target_sq))


def cubic_theta_star(target_sq: float = 2.0) -> float:
    """theta solving E X^2 = target for dX = (theta - X - X^3) dt + dW."""
    return mean_field_theta_star(0.0, target_sq)


def autocov_minimizer(
    targets: Sequence[float] = (1.0, 2.0, 1.6), tau: float = 0.1
) -> np.ndarray:
    """Exact minimizer (mu, lam, sigma) of the three-target linear problem.

    Matching E X = b1, E X^2 = b2 and E X_0 X_tau = b3 for the stationary
    law of dX = (mu - lam X) dt + sigma dW solves in closed form:
    variance b2 - b1^2, decay exp(-lam tau) = (b3 - b1^2)/(b2 - b1^2),
    then mu = b1 lam and sigma^2 = 2 lam (b2 - b1^2).  At these values
    the objective is exactly zero.
    """
    b1, b2, b3 = (float(v) for v in targets)
    var = b2 - b1 * b1
    if var <= 0.0:
        raise ValueError(f"targets imply non-positive variance {var}")
    ratio = (b3 - b1 * b1) / var
    if not 0.0 < ratio < 1.0:
        raise ValueError(
            f"targets imply autocovariance decay {ratio}, not in (0, 1)"
        )
    lam = -math.log(ratio) / float(tau)
    mu = b1 * lam
    sigma = math.sqrt(2.0 * lam * var)
    return np.array([mu, lam, sigma])


# ---------------------------------------------------------------------------
# End-to-end distribution check


def empirical_distribution_check(
    h,
    g,
    sigma: float,
    times: Sequence[float],
    n_paths: int = 10000,
    dt: float = 0.01,
    seed: int = 0,
    x0=None,
) -> Dict[str, object]:
    """Compare a simulated linear ensemble against its exact transition law.

    Euler-integrates n_paths of dX = (g - h X) dt + sigma dW with the
    package's counter-based noise and z-scores the empirical mean and
    covariance against ``ou_transition`` at each requested time.  The
    covariance entry S_kl has sampling variance
    (Sigma_kk Sigma_ll + Sigma_kl^2) / (n - 1) under the exact law.
    """
    if n_paths < 2:
        raise ValueError(f"n_paths must be >= 2, got {n_paths}")
    h, evals, vecs = _spd_eig(h)
    d = h.shape[0]
    g = _vec(g, d, "g")
    x0 = np.zeros(d) if x0 is None else _vec(x0, d, "x0")
    sigma = float(sigma)
    step_of = {}
    for t in times:
        n = _steps(float(t), dt, "time")
        if n == 0:
            raise ValueError("checkpoint times must be positive")
        step_of[n] = float(t)
    max_steps = max(step_of)

    src = NoiseSource(seed)
    sqdt = math.sqrt(dt)
    x = np.broadcast_to(x0, (n_paths, d)).copy()
    per_time: List[Dict[str, object]] = []
    max_abs_z = 0.0
    for k in range(max_steps):
        dw = src.normals(TAG_MAIN, k, n_paths, d) * sqdt
        x = x + (g - x @ h) * dt + sigma * dw
        if (k + 1) not in step_of:
            continue
        t = step_of[k + 1]
        mean, cov = ou_transition(h, g, sigma, t, x0)
        se_mean = np.sqrt(np.diag(cov) / n_paths)
        z_mean = (x.mean(axis=0) - mean) / se_mean
        s = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
        var_s = (np.outer(np.diag(cov), np.diag(cov)) + cov * cov) / (n_paths - 1)
        z_cov = (s - cov) / np.sqrt(var_s)
        worst = max(float(np.max(np.abs(z_mean))), float(np.max(np.abs(z_cov))))
        max_abs_z = max(max_abs_z, worst)
        per_time.append({
            "t": t,
            "z_mean": z_mean,
            "z_cov": z_cov,
            "max_abs_z": worst,
        })
    return {
        "n_paths": n_paths,
        "dt": dt,
        "seed": seed,
        "times": sorted(step_of.values()),
        "max_abs_z": max_abs_z,
        "per_time": per_time,
    }

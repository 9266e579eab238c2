"""Target statistics and the stochastic gradient signal they induce.

The calibration objective is J(theta) = sum_j (E f_j - beta_j)^2, the
expectations taken under the stationary law of the model.  Each term is a
``TargetStatistic``: a functional f of the state (or of a lagged pair of
states) with target value beta.  Three kinds are supported:

    sum             f(y) = sum_k y_k
    square          f(y) = |y|^2
    lagged-product  f(y_lag, y) = y_lag . y   (inner product across a lag)

The online gradient estimate at one step couples three ensembles that the
integrator advances together: the main states X, their pathwise parameter
sensitivities (tangents) X_tan, and replicas X_rep driven by independent
noise.  Using the replica batch mean for the residual and the main batch
mean for the sensitivity pairing keeps the two factors independent, so
the product is an unbiased estimate of the product of expectations:

    G = sum_j 2 (mean_i f_j(X_rep^i) - beta_j) (mean_i X_tan^i^T grad f_j(X^i))

Lagged statistics pair the current state with a snapshot from lag/dt
steps earlier held in a ``DelayBuffer``; until the buffer fills they
contribute zero and the step is flagged as warming.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

KIND_SUM = 0
KIND_SQ = 1
KIND_LAG = 2

KIND_NAMES = {KIND_SUM: "sum", KIND_SQ: "square", KIND_LAG: "lagged-product"}
KIND_CODES = {name: code for code, name in KIND_NAMES.items()}


class NotReadyError(RuntimeError):
    """A lagged quantity was read before its delay line filled."""


@dataclass(frozen=True)
class TargetStatistic:
    """One term (E f - target)^2 of the objective."""

    kind: int
    target: float
    lag: float = 0.0

    def __post_init__(self):
        if self.kind not in KIND_NAMES:
            raise ValueError(f"unknown statistic kind {self.kind}")
        if self.kind == KIND_LAG:
            if self.lag <= 0.0:
                raise ValueError("lagged-product statistics need lag > 0")
        elif self.lag != 0.0:
            raise ValueError(f"{KIND_NAMES[self.kind]} statistics take no lag")


@dataclass(frozen=True)
class ObjectiveSpec:
    """The full objective: a tuple of target statistics."""

    stats: Tuple[TargetStatistic, ...]

    def __post_init__(self):
        stats = tuple(self.stats)
        if not stats:
            raise ValueError("objective needs at least one statistic")
        object.__setattr__(self, "stats", stats)

    @property
    def max_lag(self) -> float:
        return max((s.lag for s in self.stats), default=0.0)

    def lagged_indices(self) -> List[int]:
        return [j for j, s in enumerate(self.stats) if s.kind == KIND_LAG]


def lag_steps(lag: float, dt: float) -> int:
    """Steps spanning `lag`, which must be an integral multiple of dt."""
    if lag <= 0.0:
        raise ValueError(f"lag must be positive, got {lag}")
    steps = int(round(lag / dt))
    if steps < 1 or abs(steps * dt - lag) > 1e-9 * max(1.0, abs(lag)):
        raise ValueError(f"lag {lag} is not an integral multiple of dt {dt}")
    return steps


def statistic_value(
    stat: TargetStatistic, x: np.ndarray, x_lag: Optional[np.ndarray] = None
) -> np.ndarray:
    """f evaluated batched over leading axes; lagged kinds need x_lag."""
    x = np.asarray(x, dtype=np.float64)
    if stat.kind == KIND_SUM:
        return np.sum(x, axis=-1)
    if stat.kind == KIND_SQ:
        return np.sum(x * x, axis=-1)
    if x_lag is None:
        raise NotReadyError("lagged-product statistic evaluated without x_lag")
    return np.sum(np.asarray(x_lag, dtype=np.float64) * x, axis=-1)


def statistic_gradient(stat: TargetStatistic, x: np.ndarray) -> np.ndarray:
    """grad f for the non-lagged kinds, shape like x."""
    x = np.asarray(x, dtype=np.float64)
    if stat.kind == KIND_SUM:
        return np.ones_like(x)
    if stat.kind == KIND_SQ:
        return 2.0 * x
    raise ValueError("lagged-product gradients pair two time points; "
                     "they are handled inside gradient_contribution")


Snapshot = Tuple[np.ndarray, np.ndarray, np.ndarray]


def gradient_contribution(
    objective: ObjectiveSpec,
    x: np.ndarray,
    x_tan: np.ndarray,
    x_rep: np.ndarray,
    lag_snapshots: Optional[Dict[int, Optional[Snapshot]]] = None,
) -> Tuple[np.ndarray, bool]:
    """One step's gradient estimate G in R^l, plus a warming flag.

    x: (N, d) main states, x_tan: (N, d, l) tangents, x_rep: (N, d)
    replicas, all pre-step values.  lag_snapshots maps the index of each
    lagged statistic to its (x, x_tan, x_rep) snapshot from lag/dt steps
    earlier, or None while the delay line is warming; warming statistics
    contribute zero and set the flag.
    """
    x = np.asarray(x, dtype=np.float64)
    x_tan = np.asarray(x_tan, dtype=np.float64)
    x_rep = np.asarray(x_rep, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"x must be (N, d), got shape {x.shape}")
    n, d = x.shape
    if x_rep.shape != (n, d):
        raise ValueError(f"x_rep shape {x_rep.shape} != {(n, d)}")
    if x_tan.ndim != 3 or x_tan.shape[:2] != (n, d):
        raise ValueError(f"x_tan must be (N, d, l), got shape {x_tan.shape}")
    l = x_tan.shape[2]

    grad = np.zeros(l)
    warming = False
    for j, stat in enumerate(objective.stats):
        if stat.kind == KIND_LAG:
            snap = None if lag_snapshots is None else lag_snapshots.get(j)
            if snap is None:
                warming = True
                continue
            x_old, x_tan_old, x_rep_old = snap
            resid = float(np.mean(np.sum(x_rep_old * x_rep, axis=-1))) - stat.target
            pairing = (
                np.einsum("ndl,nd->l", x_tan_old, x)
                + np.einsum("ndl,nd->l", x_tan, x_old)
            ) / n
        else:
            resid = float(np.mean(statistic_value(stat, x_rep))) - stat.target
            df = statistic_gradient(stat, x)
            pairing = np.einsum("ndl,nd->l", x_tan, df) / n
        grad += 2.0 * resid * pairing
    return grad, warming


def objective_estimate(
    objective: ObjectiveSpec,
    x_rep: np.ndarray,
    lag_snapshots: Optional[Dict[int, Optional[Snapshot]]] = None,
) -> float:
    """Instantaneous J estimate from replica batch means; NaN while warming."""
    x_rep = np.asarray(x_rep, dtype=np.float64)
    total = 0.0
    for j, stat in enumerate(objective.stats):
        if stat.kind == KIND_LAG:
            snap = None if lag_snapshots is None else lag_snapshots.get(j)
            if snap is None:
                return float("nan")
            x_rep_old = snap[2]
            mean = float(np.mean(np.sum(x_rep_old * x_rep, axis=-1)))
        else:
            mean = float(np.mean(statistic_value(stat, x_rep)))
        total += (mean - stat.target) ** 2
    return total


class DelayBuffer:
    """Fixed-length delay line of (X, X_tan, X_rep) ensemble snapshots.

    Capacity L holds the last L pushes in a ring; ``push`` returns the
    snapshot from exactly L steps earlier once one exists, else None.
    """

    def __init__(self, capacity: int, n_particles: int, state_dim: int, param_dim: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self._x = np.zeros((capacity, n_particles, state_dim))
        self._x_tan = np.zeros((capacity, n_particles, state_dim, param_dim))
        self._x_rep = np.zeros((capacity, n_particles, state_dim))
        self._count = 0

    @property
    def ready(self) -> bool:
        return self._count >= self.capacity

    @property
    def count(self) -> int:
        return self._count

    def push(self, x: np.ndarray, x_tan: np.ndarray, x_rep: np.ndarray) -> Optional[Snapshot]:
        slot = self._count % self.capacity
        out = None
        if self.ready:
            out = (self._x[slot].copy(), self._x_tan[slot].copy(), self._x_rep[slot].copy())
        self._x[slot] = x
        self._x_tan[slot] = x_tan
        self._x_rep[slot] = x_rep
        self._count += 1
        return out

    def peek(self) -> Snapshot:
        """The snapshot the next push would return; NotReadyError if warming."""
        if not self.ready:
            raise NotReadyError(
                f"delay line holds {self._count} of {self.capacity} snapshots"
            )
        slot = self._count % self.capacity
        return (self._x[slot].copy(), self._x_tan[slot].copy(), self._x_rep[slot].copy())


def objective_closed_form_autocov(mu, lam, sigma, tau, targets) -> float:
    """Exact J for the scalar linear model dX = (mu - lam X)dt + sigma dW
    under targets (beta1, beta2, beta3) on (E Y, E Y^2, E Y_lag Y).

    The stationary law is N(mu/lam, sigma^2/(2 lam)) with autocovariance
    decaying as exp(-lam tau), giving

        J = (mu/lam - b1)^2 + ((mu/lam)^2 + sigma^2/(2 lam) - b2)^2
            + ((mu/lam)^2 + sigma^2 e^{-lam tau}/(2 lam) - b3)^2.
    """
    if lam <= 0.0:
        raise ValueError(f"mean-reversion rate must be positive, got {lam}")
    b1, b2, b3 = (float(v) for v in targets)
    m1 = mu / lam
    var = sigma * sigma / (2.0 * lam)
    m2 = m1 * m1 + var
    m_lag = m1 * m1 + var * math.exp(-lam * tau)
    return (m1 - b1) ** 2 + (m2 - b2) ** 2 + (m_lag - b3) ** 2


def pack_stats(objective: ObjectiveSpec, dt: float):
    """Flatten an objective into (kinds, targets, lag step counts) arrays."""
    kinds = np.array([s.kind for s in objective.stats], dtype=np.int64)
    targets = np.array([s.target for s in objective.stats], dtype=np.float64)
    lags = np.array(
        [lag_steps(s.lag, dt) if s.kind == KIND_LAG else 0 for s in objective.stats],
        dtype=np.int64,
    )
    return kinds, targets, lags

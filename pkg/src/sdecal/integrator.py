"""Coupled explicit Euler-Maruyama integration of the calibration system.

One step advances, simultaneously and from pre-step values:

    theta  <- theta - alpha(t) dt G            (online parameter update)
    X      <- X + mu(X, theta) dt + sigma(X, theta) dW
    X_tan  <- X_tan + (mu_x X_tan + mu_theta) dt + (sigma_x X_tan + sigma_theta) dW
    X_rep  <- X_rep + mu(X_rep, theta) dt + sigma(X_rep, theta) dW_rep

where G is the gradient estimate from ``objective.gradient_contribution``.
The tangent shares the main ensemble's Brownian increments and consumes
no draws of its own; the replica uses an independent stream.  Interacting
models carry the extra tangent couplings through the ensemble mean or the
running time average of the tangents.

This module is the pure-numpy reference implementation.  ``run`` routes
built-in models to the compiled kernels in ``_kernels`` when the numba
backend is active; both paths follow the same draw addressing, so they
agree to floating-point tolerance (bitwise only within one backend).
"""

from __future__ import annotations

import json
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .backend import BackendError, active_backend
from .model import (
    INTERACTION_ENSEMBLE_MEAN,
    INTERACTION_NONE,
    INTERACTION_RUNNING_MEAN,
    ModelSpec,
    PathContext,
)
from .objective import (
    DelayBuffer,
    ObjectiveSpec,
    Snapshot,
    gradient_contribution,
    lag_steps,
    objective_estimate,
)
from .rng import TAG_MAIN, TAG_REPLICA, NoiseSource
from .schedule import LearningRateSchedule, rate

GRAD_WINDOW_FRAC = 0.2


class IntegrationDivergedError(RuntimeError):
    """The state left the finite / bounded region during integration.

    Carries the step index, the worst particle, and (when raised by
    ``run``) the partial RunRecord accumulated before the failure.
    """

    def __init__(self, step: int, t: float, max_abs: float, particle: int = -1):
        self.step = step
        self.t = t
        self.max_abs = max_abs
        self.particle = particle
        self.record = None
        where = f" (particle {particle})" if particle >= 0 else ""
        super().__init__(
            f"integration diverged at step {step} (t={t:g}){where}: "
            f"max |state| = {max_abs:g}"
        )


@dataclass
class RunConfig:
    """Shape of one calibration run.

    warmup_steps holds the learning rate at zero for that many initial
    steps; hold_until_ready additionally suspends parameter updates while
    any lagged statistic's delay line is still filling.  x_rep0 and
    x_tan0 default to x0 and zero respectively.
    """

    n_particles: int
    t_end: float
    dt: float = 0.01
    seed: int = 0
    theta0: np.ndarray = field(default_factory=lambda: np.zeros(1))
    x0: np.ndarray = field(default_factory=lambda: np.zeros(1))
    schedule: LearningRateSchedule = field(
        default_factory=lambda: LearningRateSchedule(a=1.0, b=1.0, gamma=1.0)
    )
    record_every: int = 100
    freeze_theta: bool = False
    warmup_steps: int = 0
    hold_until_ready: bool = False
    x_rep0: Optional[np.ndarray] = None
    x_tan0: Optional[np.ndarray] = None
    divergence_threshold: float = 1e8
    moment_ceiling: float = 1e6

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError(f"n_particles must be >= 1, got {self.n_particles}")
        if self.dt <= 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_end < 0.0:
            raise ValueError(f"t_end must be non-negative, got {self.t_end}")
        if self.record_every < 1:
            raise ValueError(f"record_every must be >= 1, got {self.record_every}")
        if self.warmup_steps < 0:
            raise ValueError(f"warmup_steps must be >= 0, got {self.warmup_steps}")
        if self.divergence_threshold <= 0.0:
            raise ValueError("divergence_threshold must be positive")
        if self.seed < 0 or int(self.seed) != self.seed:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed}")
        self.theta0 = np.atleast_1d(np.asarray(self.theta0, dtype=np.float64))
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=np.float64))
        if self.x_rep0 is not None:
            self.x_rep0 = np.atleast_1d(np.asarray(self.x_rep0, dtype=np.float64))
        if self.x_tan0 is not None:
            self.x_tan0 = np.asarray(self.x_tan0, dtype=np.float64)

    @property
    def n_steps(self) -> int:
        steps = int(round(self.t_end / self.dt))
        if steps < 0 or abs(steps * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise ValueError(
                f"t_end {self.t_end} is not an integral multiple of dt {self.dt}"
            )
        return steps


@dataclass
class AlgorithmState:
    """Everything the coupled system carries between steps."""

    step: int
    t: float
    theta: np.ndarray
    x: np.ndarray                                  # (N, d) main ensemble
    x_tan: np.ndarray                              # (N, d, l) tangents
    x_rep: np.ndarray                              # (N, d) replicas
    run_mean_x: Optional[np.ndarray]               # (N, d)
    run_mean_tan: Optional[np.ndarray]             # (N, d, l)
    run_mean_rep: Optional[np.ndarray]             # (N, d)
    mean_count: int
    delays: Dict[int, DelayBuffer]
    noise: NoiseSource


@dataclass
class StepResult:
    grad: np.ndarray
    grad_norm: float
    j_hat: float
    warming: bool
    moment4: float


@dataclass
class RunRecord:
    """Recorded trajectory of a run plus end-of-run summaries."""

    model_name: str
    times: np.ndarray           # (R,)
    thetas: np.ndarray          # (R, l)
    grad_norms: np.ndarray      # (R,)
    j_hats: np.ndarray          # (R,)
    theta_final: np.ndarray     # (l,)
    grad_time_avg: np.ndarray   # (l,) mean G over the last 20% of steps
    n_steps: int
    dt: float
    seed: int
    backend: str
    diagnostics: Dict[str, object] = field(default_factory=dict)

    def csv_header(self) -> str:
        names = [f"theta_{k}" for k in range(self.thetas.shape[1])]
        return ",".join(["t"] + names + ["grad_norm", "J_hat"])

    def to_csv(self, path: str):
        lines = [self.csv_header()]
        for r in range(len(self.times)):
            cells = [_fmt(self.times[r])]
            cells += [_fmt(v) for v in self.thetas[r]]
            cells += [_fmt(self.grad_norms[r]), _fmt(self.j_hats[r])]
            lines.append(",".join(cells))
        _atomic_write(path, "\n".join(lines) + "\n")

    def to_jsonl(self, path: str):
        out = []
        for r in range(len(self.times)):
            out.append(json.dumps({
                "t": _jf(self.times[r]),
                "theta": [_jf(v) for v in self.thetas[r]],
                "grad_norm": _jf(self.grad_norms[r]),
                "J_hat": _jf(self.j_hats[r]),
            }, allow_nan=False))
        out.append(json.dumps({
            "summary": {
                "model": self.model_name,
                "theta_final": [_jf(v) for v in self.theta_final],
                "grad_time_avg": [_jf(v) for v in self.grad_time_avg],
                "n_steps": self.n_steps,
                "dt": self.dt,
                "seed": self.seed,
                "backend": self.backend,
                "diagnostics": _json_ready(self.diagnostics),
            }
        }, allow_nan=False))
        _atomic_write(path, "\n".join(out) + "\n")


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _jf(x):
    x = float(x)
    return None if math.isnan(x) or math.isinf(x) else x


def _json_ready(obj):
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return _jf(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


def _atomic_write(path: str, text: str):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def init_state(model: ModelSpec, objective: ObjectiveSpec, config: RunConfig) -> AlgorithmState:
    """Build the time-zero coupled state for a run."""
    d, l = model.state_dim, model.param_dim
    n = config.n_particles
    if config.theta0.shape != (l,):
        raise ValueError(
            f"theta0 has shape {config.theta0.shape}, model {model.name!r} expects ({l},)"
        )
    def _expand(arr, label):
        if arr.shape == (d,) or (arr.shape == (1,) and d == 1):
            return np.broadcast_to(arr, (n, d)).copy()
        if arr.shape == (n, d):
            return arr.copy()
        raise ValueError(f"{label} has shape {arr.shape}, expected ({d},) or ({n}, {d})")

    x0 = _expand(config.x0, "x0")
    x_rep0 = x0.copy() if config.x_rep0 is None else _expand(config.x_rep0, "x_rep0")
    if config.x_tan0 is None:
        x_tan0 = np.zeros((n, d, l))
    else:
        x_tan0 = config.x_tan0
        if x_tan0.shape == (d, l):
            x_tan0 = np.broadcast_to(x_tan0, (n, d, l)).copy()
        elif x_tan0.shape == (n, d, l):
            x_tan0 = x_tan0.copy()
        else:
            raise ValueError(
                f"x_tan0 has shape {x_tan0.shape}, expected ({d}, {l}) or ({n}, {d}, {l})"
            )

    delays: Dict[int, DelayBuffer] = {}
    for j in objective.lagged_indices():
        cap = lag_steps(objective.stats[j].lag, config.dt)
        delays[j] = DelayBuffer(cap, n, d, l)

    uses_run_mean = model.interaction == INTERACTION_RUNNING_MEAN
    return AlgorithmState(
        step=0,
        t=0.0,
        theta=config.theta0.copy(),
        x=x0,
        x_tan=x_tan0,
        x_rep=x_rep0,
        run_mean_x=x0.copy() if uses_run_mean else None,
        run_mean_tan=x_tan0.copy() if uses_run_mean else None,
        run_mean_rep=x_rep0.copy() if uses_run_mean else None,
        mean_count=1,
        delays=delays,
        noise=NoiseSource(config.seed),
    )


def _contexts(model: ModelSpec, state: AlgorithmState) -> Tuple[Optional[PathContext], Optional[PathContext]]:
    if model.interaction == INTERACTION_NONE:
        return None, None
    if model.interaction == INTERACTION_ENSEMBLE_MEAN:
        ctx_main = PathContext(
            ensemble_mean=state.x.mean(axis=0),
            tangent_ensemble_mean=state.x_tan.mean(axis=0),
        )
        ctx_rep = PathContext(ensemble_mean=state.x_rep.mean(axis=0))
        return ctx_main, ctx_rep
    ctx_main = PathContext(
        running_mean=state.run_mean_x,
        tangent_running_mean=state.run_mean_tan,
    )
    ctx_rep = PathContext(running_mean=state.run_mean_rep)
    return ctx_main, ctx_rep


def _lag_snapshots(
    objective: ObjectiveSpec, state: AlgorithmState, push: bool
) -> Optional[Dict[int, Optional[Snapshot]]]:
    if not state.delays:
        return None
    snaps: Dict[int, Optional[Snapshot]] = {}
    for j, buf in state.delays.items():
        if push:
            snaps[j] = buf.push(state.x, state.x_tan, state.x_rep)
        else:
            snaps[j] = buf.peek() if buf.ready else None
    return snaps


def observe(objective: ObjectiveSpec, state: AlgorithmState, push: bool = False):
    """Gradient estimate and J estimate from the current (pre-step) state.

    push=True also feeds the delay lines, as the stepping loop does; the
    end-of-run record uses push=False to read them without mutation.
    """
    snaps = _lag_snapshots(objective, state, push)
    grad, warming = gradient_contribution(objective, state.x, state.x_tan, state.x_rep, snaps)
    j_hat = objective_estimate(objective, state.x_rep, snaps)
    return grad, j_hat, warming


def step(
    model: ModelSpec,
    objective: ObjectiveSpec,
    state: AlgorithmState,
    config: RunConfig,
) -> StepResult:
    """Advance the coupled system by one step in place."""
    n, d, l = state.x.shape[0], model.state_dim, model.param_dim
    dt = config.dt
    sqdt = math.sqrt(dt)

    grad, j_hat, warming = observe(objective, state, push=True)
    moment4 = float(np.mean(np.sum(state.x * state.x, axis=-1) ** 2))

    theta_old = state.theta
    update_now = (
        not config.freeze_theta
        and state.step >= config.warmup_steps
        and not (config.hold_until_ready and warming)
    )
    if update_now:
        alpha = rate(config.schedule, state.t)
        state.theta = theta_old - alpha * dt * grad

    ctx_main, ctx_rep = _contexts(model, state)

    dw = state.noise.normals(TAG_MAIN, state.step, n, model.noise_dim) * sqdt
    dw_rep = state.noise.normals(TAG_REPLICA, state.step, n, model.noise_dim) * sqdt

    mu = model.drift(state.x, theta_old, ctx_main)
    sig = model.diffusion(state.x, theta_old)
    x_new = state.x + mu * dt + np.einsum("ndw,nw->nd", sig, dw)

    mu_x = model.drift_jac_x(state.x, theta_old, ctx_main)
    mu_th = model.drift_jac_theta(state.x, theta_old, ctx_main)
    tan_drift = np.einsum("nij,njl->nil", mu_x, state.x_tan) + mu_th
    if model.interaction == INTERACTION_ENSEMBLE_MEAN:
        jac_mean = model.drift_jac_mean(state.x, theta_old, ctx_main)
        tan_drift += np.einsum("nij,jl->nil", jac_mean, ctx_main.tangent_ensemble_mean)
    elif model.interaction == INTERACTION_RUNNING_MEAN:
        jac_run = model.drift_jac_runmean(state.x, theta_old, ctx_main)
        tan_drift += np.einsum("nij,njl->nil", jac_run, state.run_mean_tan)
    x_tan_new = state.x_tan + tan_drift * dt
    if not model.constant_diffusion:
        sig_x = model.diffusion_jac_x(state.x, theta_old)
        sig_th = model.diffusion_jac_theta(state.x, theta_old)
        tan_diff = np.einsum("niwj,njl->niwl", sig_x, state.x_tan) + sig_th
        x_tan_new = x_tan_new + np.einsum("niwl,nw->nil", tan_diff, dw)

    mu_rep = model.drift(state.x_rep, theta_old, ctx_rep)
    sig_rep = model.diffusion(state.x_rep, theta_old)
    x_rep_new = state.x_rep + mu_rep * dt + np.einsum("ndw,nw->nd", sig_rep, dw_rep)

    state.x = x_new
    state.x_tan = x_tan_new
    state.x_rep = x_rep_new
    if model.interaction == INTERACTION_RUNNING_MEAN:
        state.mean_count += 1
        c = state.mean_count
        state.run_mean_x += (x_new - state.run_mean_x) / c
        state.run_mean_tan += (x_tan_new - state.run_mean_tan) / c
        state.run_mean_rep += (x_rep_new - state.run_mean_rep) / c
    state.step += 1
    state.t = state.step * dt

    per_particle = np.abs(x_new).max(axis=-1)
    per_particle = np.maximum(per_particle, np.abs(x_rep_new).max(axis=-1))
    if x_tan_new.size:
        per_particle = np.maximum(per_particle, np.abs(x_tan_new).max(axis=(-2, -1)))
    with np.errstate(invalid="ignore"):
        per_particle = np.where(np.isnan(per_particle), np.inf, per_particle)
    worst = int(np.argmax(per_particle))
    theta_abs = float(np.max(np.abs(state.theta)))
    if math.isnan(theta_abs):
        theta_abs = math.inf
    max_abs = max(float(per_particle[worst]), theta_abs)
    if not math.isfinite(max_abs) or max_abs > config.divergence_threshold:
        raise IntegrationDivergedError(state.step, state.t, max_abs, particle=worst)

    return StepResult(
        grad=grad,
        grad_norm=float(np.linalg.norm(grad)),
        j_hat=j_hat,
        warming=warming,
        moment4=moment4,
    )


def _record_steps(n_steps: int, record_every: int) -> List[int]:
    ks = list(range(0, n_steps, record_every))
    ks.append(n_steps)
    return ks


def run(
    model: ModelSpec,
    objective: ObjectiveSpec,
    config: RunConfig,
    backend: Optional[str] = None,
    return_state: bool = False,
):
    """Integrate a full run and return its RunRecord.

    backend None resolves via SDECAL_BACKEND (auto prefers numba).  The
    compiled path only exists for built-in models carrying a kernel code;
    custom models always use the numpy reference, and asking for numba
    explicitly on such a model is an error.
    """
    chosen = active_backend() if backend is None else backend
    if chosen not in ("numba", "numpy"):
        raise BackendError(f"unknown backend {chosen!r}")
    if chosen == "numba" and model.kernel_code is None:
        if backend == "numba":
            raise BackendError(
                f"model {model.name!r} has no compiled kernel; use the numpy backend"
            )
        chosen = "numpy"
    if chosen == "numba":
        from . import _kernels

        record = _kernels.run_compiled(model, objective, config)
        if return_state:
            raise ValueError("return_state is only available on the numpy backend")
        return record

    n_steps = config.n_steps
    state = init_state(model, objective, config)
    window_start = int(math.floor((1.0 - GRAD_WINDOW_FRAC) * n_steps))
    grad_sum = np.zeros(model.param_dim)
    grad_count = 0
    max_moment4 = 0.0
    warming_steps = 0

    rows_t: List[float] = []
    rows_theta: List[np.ndarray] = []
    rows_gn: List[float] = []
    rows_jh: List[float] = []

    def _partial_record(diverged_at: int) -> RunRecord:
        return RunRecord(
            model_name=model.name,
            times=np.array(rows_t),
            thetas=np.array(rows_theta).reshape(len(rows_t), model.param_dim),
            grad_norms=np.array(rows_gn),
            j_hats=np.array(rows_jh),
            theta_final=state.theta.copy(),
            grad_time_avg=grad_sum / max(grad_count, 1),
            n_steps=n_steps,
            dt=config.dt,
            seed=config.seed,
            backend="numpy",
            diagnostics={
                "max_moment4": max_moment4,
                "moment_warning": bool(max_moment4 > config.moment_ceiling),
                "warming_steps": int(warming_steps),
                "diverged": True,
                "diverged_step": int(diverged_at),
            },
        )

    for k in range(n_steps):
        record_now = k % config.record_every == 0
        if record_now:
            theta_pre = state.theta.copy()
        try:
            res = step(model, objective, state, config)
        except IntegrationDivergedError as err:
            err.record = _partial_record(err.step)
            raise
        if record_now:
            rows_t.append(k * config.dt)
            rows_theta.append(theta_pre)
            rows_gn.append(res.grad_norm)
            rows_jh.append(res.j_hat)
        if k >= window_start:
            grad_sum += res.grad
            grad_count += 1
        if res.warming:
            warming_steps += 1
        if res.moment4 > max_moment4:
            max_moment4 = res.moment4

    grad_fin, j_hat_fin, _ = observe(objective, state, push=False)
    rows_t.append(n_steps * config.dt)
    rows_theta.append(state.theta.copy())
    rows_gn.append(float(np.linalg.norm(grad_fin)))
    rows_jh.append(j_hat_fin)

    moment_warning = max_moment4 > config.moment_ceiling
    if moment_warning:
        warnings.warn(
            f"fourth-moment diagnostic {max_moment4:.3g} exceeded ceiling "
            f"{config.moment_ceiling:.3g} (model {model.name!r})",
            RuntimeWarning,
        )

    record = RunRecord(
        model_name=model.name,
        times=np.array(rows_t),
        thetas=np.array(rows_theta),
        grad_norms=np.array(rows_gn),
        j_hats=np.array(rows_jh),
        theta_final=state.theta.copy(),
        grad_time_avg=grad_sum / max(grad_count, 1),
        n_steps=n_steps,
        dt=config.dt,
        seed=config.seed,
        backend="numpy",
        diagnostics={
            "max_moment4": max_moment4,
            "moment_warning": bool(moment_warning),
            "warming_steps": int(warming_steps),
        },
    )
    if return_state:
        return record, state
    return record


def noise_audit(model: ModelSpec, objective: ObjectiveSpec, config: RunConfig) -> Dict[str, object]:
    """Account for every counter address a run consumes.

    Runs the numpy path with a logging noise source and returns, per
    stream tag, the set of steps drawn from and the per-draw block shape.
    The tangent ensemble appears nowhere: it reuses the main stream's
    increments and consumes no addresses of its own.
    """
    log: List[Tuple[int, int, int, int]] = []

    class _LoggingSource(NoiseSource):
        def normals(self, tag, step, n_particles, dim):
            log.append((tag, step, n_particles, dim))
            return super().normals(tag, step, n_particles, dim)

    state = init_state(model, objective, config)
    state.noise = _LoggingSource(config.seed)
    for _ in range(config.n_steps):
        step(model, objective, state, config)

    by_tag: Dict[int, List[int]] = {TAG_MAIN: [], TAG_REPLICA: []}
    for tag, k, n, dim in log:
        by_tag.setdefault(tag, []).append(k)
    draws_per_step = config.n_particles * model.noise_dim
    return {
        "n_steps": config.n_steps,
        "draws_per_step_per_tag": draws_per_step,
        "main_steps": sorted(by_tag[TAG_MAIN]),
        "replica_steps": sorted(by_tag[TAG_REPLICA]),
        "total_normals": sum(n * d for _, _, n, d in log),
        "tags_disjoint": set(by_tag) == {TAG_MAIN, TAG_REPLICA},
    }

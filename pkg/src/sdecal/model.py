"""SDE model abstraction: drift, diffusion, and their Jacobians.

A model is the coefficient pair of

    dX_t = mu(X_t, theta) dt + sigma(X_t, theta) dW_t

together with the four Jacobians (mu_x, mu_theta, sigma_x, sigma_theta)
that drive the tangent (pathwise parameter-sensitivity) process.  The
Jacobians are part of the model contract: there is no autodiff here, and
the finite-difference consistency checks live in the test suite.

Coefficient callables are vectorized over leading axes: they accept a
single state of shape (d,) or an ensemble of shape (N, d) and return
correspondingly batched arrays.  Interacting models additionally read a
``PathContext`` (ensemble mean for mean-field coupling, running time
averages for path-dependent drift).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

INTERACTION_NONE = "none"
INTERACTION_ENSEMBLE_MEAN = "ensemble_mean"
INTERACTION_RUNNING_MEAN = "running_mean"

_INTERACTIONS = (
    INTERACTION_NONE,
    INTERACTION_ENSEMBLE_MEAN,
    INTERACTION_RUNNING_MEAN,
)


@dataclass
class PathContext:
    """Extra state an interacting drift may read.

    Exactly the fields demanded by the model's interaction mode are
    present; the rest stay None.  ``ensemble_mean`` is the mean over
    particles at the current step.  ``running_mean`` is the per-particle
    time average (1/t) int_0^t X_s ds in its incremental discretization,
    and ``tangent_running_mean`` / ``tangent_ensemble_mean`` are the same
    aggregates taken over the tangent ensemble, which the linearized
    dynamics of interacting models need.
    """

    ensemble_mean: Optional[np.ndarray] = None          # (d,)
    running_mean: Optional[np.ndarray] = None           # (..., d)
    tangent_running_mean: Optional[np.ndarray] = None   # (..., d, l)
    tangent_ensemble_mean: Optional[np.ndarray] = None  # (d, l)


@dataclass
class ModelSpec:
    """Coefficient functions and dimensions of one parametric SDE.

    drift, drift_jac_x, drift_jac_theta take (x, theta, ctx); diffusion
    and its Jacobians take (x, theta).  Shapes, with leading batch axes
    allowed on x:

        drift               (..., d)
        diffusion           (..., d, noise_dim)
        drift_jac_x         (..., d, d)
        drift_jac_theta     (..., d, l)
        diffusion_jac_x     (..., d, noise_dim, d)
        diffusion_jac_theta (..., d, noise_dim, l)

    For interacting models, ``drift_jac_x`` is the Jacobian holding the
    context fixed; the context sensitivities enter through
    ``drift_jac_mean`` (w.r.t. the ensemble mean) and
    ``drift_jac_runmean`` (w.r.t. the running mean), evaluated like
    ``drift_jac_x`` with shape (..., d, d).

    ``constant_diffusion`` asserts sigma_x and sigma_theta vanish
    identically, letting integrators skip those products.  ``kernel_code``
    and ``kernel_consts`` route built-in models to the compiled numba
    kernels; models without a code run on the numpy path.
    """

    state_dim: int
    param_dim: int
    noise_dim: int
    drift: Callable
    diffusion: Callable
    drift_jac_x: Callable
    drift_jac_theta: Callable
    diffusion_jac_x: Callable
    diffusion_jac_theta: Callable
    interaction: str = INTERACTION_NONE
    drift_jac_mean: Optional[Callable] = None
    drift_jac_runmean: Optional[Callable] = None
    constant_diffusion: bool = False
    kernel_code: Optional[int] = None
    kernel_consts: np.ndarray = field(default_factory=lambda: np.zeros(0))
    name: str = "custom"

    def __post_init__(self):
        for label, n in (
            ("state_dim", self.state_dim),
            ("param_dim", self.param_dim),
            ("noise_dim", self.noise_dim),
        ):
            if int(n) < 1:
                raise ValueError(f"{label} must be a positive integer, got {n}")
        if self.interaction not in _INTERACTIONS:
            raise ValueError(
                f"interaction must be one of {_INTERACTIONS}, got {self.interaction!r}"
            )
        if self.interaction == INTERACTION_ENSEMBLE_MEAN and self.drift_jac_mean is None:
            raise ValueError("mean-field models must supply drift_jac_mean")
        if self.interaction == INTERACTION_RUNNING_MEAN and self.drift_jac_runmean is None:
            raise ValueError("path-dependent models must supply drift_jac_runmean")
        self.kernel_consts = np.asarray(self.kernel_consts, dtype=np.float64)

    def validate_args(
        self,
        x: np.ndarray,
        theta: np.ndarray,
        ctx: Optional[PathContext],
        need_ctx: bool = True,
    ):
        """Shape and context checks shared by the evaluate_* entry points.

        Diffusion coefficients never read the context, so those callers
        pass need_ctx=False.
        """
        x = np.asarray(x, dtype=np.float64)
        theta = np.asarray(theta, dtype=np.float64)
        if x.ndim < 1 or x.shape[-1] != self.state_dim:
            raise ValueError(
                f"state has trailing dimension {x.shape[-1] if x.ndim else 0}, "
                f"model {self.name!r} expects {self.state_dim}"
            )
        if theta.shape != (self.param_dim,):
            raise ValueError(
                f"theta has shape {theta.shape}, model {self.name!r} expects "
                f"({self.param_dim},)"
            )
        if need_ctx and self.interaction == INTERACTION_ENSEMBLE_MEAN:
            if ctx is None or ctx.ensemble_mean is None:
                raise ValueError(
                    f"model {self.name!r} requires PathContext.ensemble_mean"
                )
        if need_ctx and self.interaction == INTERACTION_RUNNING_MEAN:
            if ctx is None or ctx.running_mean is None:
                raise ValueError(
                    f"model {self.name!r} requires PathContext.running_mean"
                )
        return x, theta


def evaluate_drift(
    model: ModelSpec,
    x: np.ndarray,
    theta: np.ndarray,
    ctx: Optional[PathContext] = None,
) -> np.ndarray:
    """mu(x, theta) with shape checking; ctx per the model's interaction mode."""
    x, theta = model.validate_args(x, theta, ctx)
    out = np.asarray(model.drift(x, theta, ctx), dtype=np.float64)
    if out.shape != x.shape:
        raise ValueError(
            f"drift of model {self_name(model)} returned shape {out.shape}, "
            f"expected {x.shape}"
        )
    return out


def evaluate_jacobians(
    model: ModelSpec,
    x: np.ndarray,
    theta: np.ndarray,
    ctx: Optional[PathContext] = None,
):
    """(mu_x, mu_theta, sigma_x, sigma_theta) at (x, theta), shapes checked."""
    x, theta = model.validate_args(x, theta, ctx)
    d, l, w = model.state_dim, model.param_dim, model.noise_dim
    batch = x.shape[:-1]
    mu_x = np.asarray(model.drift_jac_x(x, theta, ctx), dtype=np.float64)
    mu_theta = np.asarray(model.drift_jac_theta(x, theta, ctx), dtype=np.float64)
    sigma_x = np.asarray(model.diffusion_jac_x(x, theta), dtype=np.float64)
    sigma_theta = np.asarray(model.diffusion_jac_theta(x, theta), dtype=np.float64)
    expected = {
        "drift_jac_x": (mu_x, batch + (d, d)),
        "drift_jac_theta": (mu_theta, batch + (d, l)),
        "diffusion_jac_x": (sigma_x, batch + (d, w, d)),
        "diffusion_jac_theta": (sigma_theta, batch + (d, w, l)),
    }
    for label, (arr, shape) in expected.items():
        if arr.shape != shape:
            raise ValueError(
                f"{label} of model {self_name(model)} returned shape "
                f"{arr.shape}, expected {shape}"
            )
    return mu_x, mu_theta, sigma_x, sigma_theta


def evaluate_diffusion(
    model: ModelSpec, x: np.ndarray, theta: np.ndarray
) -> np.ndarray:
    """sigma(x, theta), shape (..., d, noise_dim)."""
    x, theta = model.validate_args(x, theta, None, need_ctx=False)
    out = np.asarray(model.diffusion(x, theta), dtype=np.float64)
    want = x.shape[:-1] + (model.state_dim, model.noise_dim)
    if out.shape != want:
        raise ValueError(
            f"diffusion of model {self_name(model)} returned shape {out.shape}, "
            f"expected {want}"
        )
    return out


def self_name(model: ModelSpec) -> str:
    return repr(model.name)


def builtin(name: str):
    """Look up a built-in experiment by registry name.

    Returns (ModelSpec, ObjectiveSpec, RunConfig) with the recommended
    defaults.  The registry itself lives in ``sdecal.experiments``; this
    is the model-level entry point for it.
    """
    from . import experiments

    entry = experiments.get_entry(name)
    return entry.build()

"""Compiled and reference paths: selection rules and numerical agreement."""

import numpy as np
import pytest

from sdecal import oracle
from sdecal.backend import (
    BackendError,
    HAS_NUMBA,
    active_backend,
    requested_backend,
)
from sdecal.experiments import ou_model, run_experiment
from sdecal.integrator import RunConfig, run
from sdecal.model import ModelSpec
from sdecal.objective import KIND_SUM, ObjectiveSpec, TargetStatistic
from sdecal.schedule import LearningRateSchedule

needs_numba = pytest.mark.skipif(not HAS_NUMBA, reason="numba not installed")

# short horizons keep this cheap while touching every kernel family:
# plain/lagged objectives, additive/multiplicative noise, both couplings
PARITY_CASES = [
    ("ou-mean", 20.0),
    ("ou-two-param", 20.0),
    ("cubic-drift-vol", 10.0),
    ("multi-ou-correlated", 10.0),
    ("mean-field", 10.0),
    ("path-dependent", 10.0),
    ("autocov", 20.0),
]


def _custom_model():
    base = ou_model()
    return ModelSpec(
        state_dim=1, param_dim=1, noise_dim=1,
        drift=base.drift, diffusion=base.diffusion,
        drift_jac_x=base.drift_jac_x, drift_jac_theta=base.drift_jac_theta,
        diffusion_jac_x=base.diffusion_jac_x,
        diffusion_jac_theta=base.diffusion_jac_theta,
        constant_diffusion=True, name="user-supplied",
    )


def test_env_flag_validation(monkeypatch):
    monkeypatch.setenv("SDECAL_BACKEND", "numpy")
    assert requested_backend() == "numpy"
    assert active_backend() == "numpy"
    monkeypatch.setenv("SDECAL_BACKEND", "Auto ")
    assert requested_backend() == "auto"
    monkeypatch.setenv("SDECAL_BACKEND", "gpu")
    with pytest.raises(BackendError):
        requested_backend()


def test_auto_prefers_the_compiled_path(monkeypatch):
    monkeypatch.delenv("SDECAL_BACKEND", raising=False)
    assert active_backend() == ("numba" if HAS_NUMBA else "numpy")


def test_unknown_backend_argument_rejected():
    cfg = RunConfig(n_particles=2, t_end=0.1, theta0=np.array([0.0]))
    obj = ObjectiveSpec((TargetStatistic(KIND_SUM, 2.0),))
    with pytest.raises(BackendError):
        run(ou_model(), obj, cfg, backend="fortran")


def test_custom_model_falls_back_to_numpy_quietly():
    cfg = RunConfig(n_particles=2, t_end=0.1, theta0=np.array([0.0]))
    obj = ObjectiveSpec((TargetStatistic(KIND_SUM, 2.0),))
    rec = run(_custom_model(), obj, cfg, backend=None)
    assert rec.backend == "numpy"


@needs_numba
def test_custom_model_with_explicit_numba_fails_loudly():
    cfg = RunConfig(n_particles=2, t_end=0.1, theta0=np.array([0.0]))
    obj = ObjectiveSpec((TargetStatistic(KIND_SUM, 2.0),))
    with pytest.raises(BackendError, match="no compiled kernel"):
        run(_custom_model(), obj, cfg, backend="numba")


@needs_numba
def test_compiled_runs_are_bit_reproducible():
    a, _ = run_experiment("autocov", seed=9, t_end=5.0, backend="numba",
                          check=False)
    b, _ = run_experiment("autocov", seed=9, t_end=5.0, backend="numba",
                          check=False)
    assert np.array_equal(a.thetas, b.thetas)
    assert np.array_equal(a.j_hats, b.j_hats, equal_nan=True)
    assert a.backend == "numba"


@needs_numba
@pytest.mark.parametrize("name,t_end", PARITY_CASES, ids=[c[0] for c in PARITY_CASES])
def test_backends_agree_to_tolerance(name, t_end):
    nb, _ = run_experiment(name, seed=2, t_end=t_end, backend="numba",
                           check=False)
    np_, _ = run_experiment(name, seed=2, t_end=t_end, backend="numpy",
                            check=False)
    assert nb.backend == "numba" and np_.backend == "numpy"
    scale = np.maximum(np.max(np.abs(np_.thetas), axis=0), 1.0)
    err = np.max(np.abs(nb.thetas - np_.thetas) / scale)
    assert err < 1e-6, f"{name}: backend disagreement {err:.3g}"
    # gradient norms ride the same trajectories
    gn_scale = max(np.nanmax(np_.grad_norms), 1.0)
    gn_err = np.nanmax(np.abs(nb.grad_norms - np_.grad_norms)) / gn_scale
    assert gn_err < 1e-5, f"{name}: grad_norm disagreement {gn_err:.3g}"


@needs_numba
def test_path_simulation_backends_agree():
    model = ou_model()
    theta = np.array([1.5])
    a = oracle.simulate_path(model, theta, t_end=50.0, seed=3, backend="numba")
    b = oracle.simulate_path(model, theta, t_end=50.0, seed=3, backend="numpy")
    np.testing.assert_allclose(a, b, rtol=1e-7, atol=1e-9)


@needs_numba
def test_explicit_numba_path_simulation_needs_a_kernel():
    with pytest.raises(BackendError):
        oracle.simulate_path(_custom_model(), np.array([0.0]), t_end=1.0,
                             backend="numba")

import numpy as np
import pytest

from sdecal.backend import HAS_NUMBA, active_backend
from sdecal.experiments import run_experiment


@pytest.fixture(scope="session")
def warm_backend():
    """Compile the hot kernels once so timed tests measure steady state."""
    if HAS_NUMBA and active_backend() == "numba":
        run_experiment("ou-mean", seed=0, t_end=1.0, check=False)
        run_experiment("autocov", seed=0, t_end=1.0, check=False)
        run_experiment("multi-ou-independent", seed=0, t_end=1.0, check=False)
        run_experiment("mean-field", seed=0, t_end=1.0, check=False)
        run_experiment("path-dependent", seed=0, t_end=1.0, check=False)
    return active_backend()


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance: end-to-end criteria with printed verdict lines"
    )


def assert_allclose_rel(got, want, rel, label=""):
    got = np.asarray(got, dtype=float)
    want = np.asarray(want, dtype=float)
    denom = np.maximum(np.abs(want), 1e-12)
    err = np.max(np.abs(got - want) / denom)
    assert err < rel, f"{label}: relative error {err:.3g} >= {rel}"

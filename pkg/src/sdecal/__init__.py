"""Online calibration of SDE models to stationary-distribution targets.

The package simulates a parameterized diffusion together with a tangent
process (parameter sensitivities, sharing the driving noise) and an
independent replica, and descends the squared mismatch between running
ensemble statistics and their targets while the paths evolve.  Closed
form and long-run simulation oracles live in :mod:`sdecal.oracle`, the
built-in calibration problems in :mod:`sdecal.experiments`, and the
``sdecal`` command line in :mod:`sdecal.cli`.
"""

from .backend import HAS_NUMBA, BackendError, active_backend, requested_backend
from .integrator import (
    AlgorithmState,
    IntegrationDivergedError,
    RunConfig,
    RunRecord,
    init_state,
    noise_audit,
    run,
)
from .model import (
    INTERACTION_ENSEMBLE_MEAN,
    INTERACTION_NONE,
    INTERACTION_RUNNING_MEAN,
    ModelSpec,
    PathContext,
    builtin,
)
from .objective import (
    KIND_LAG,
    KIND_SQ,
    KIND_SUM,
    NotReadyError,
    ObjectiveSpec,
    TargetStatistic,
    objective_closed_form_autocov,
)
from .rng import TAG_MAIN, TAG_REPLICA, NoiseSource, philox4x32, split_seed
from .schedule import (
    COND_DERIVATIVE,
    COND_SQUARE_INTEGRAL,
    COND_STEP_INTEGRAL,
    COND_TAIL_DECAY,
    LearningRateSchedule,
    describe_violation,
    is_admissible,
    rate,
    validate,
)
from .experiments import (
    AcceptanceReport,
    AcceptanceSpec,
    ExperimentEntry,
    evaluate_acceptance,
    get_entry,
    list_experiments,
    run_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "AcceptanceReport",
    "AcceptanceSpec",
    "AlgorithmState",
    "BackendError",
    "COND_DERIVATIVE",
    "COND_SQUARE_INTEGRAL",
    "COND_STEP_INTEGRAL",
    "COND_TAIL_DECAY",
    "ExperimentEntry",
    "HAS_NUMBA",
    "INTERACTION_ENSEMBLE_MEAN",
    "INTERACTION_NONE",
    "INTERACTION_RUNNING_MEAN",
    "IntegrationDivergedError",
    "KIND_LAG",
    "KIND_SQ",
    "KIND_SUM",
    "LearningRateSchedule",
    "ModelSpec",
    "NoiseSource",
    "NotReadyError",
    "ObjectiveSpec",
    "PathContext",
    "RunConfig",
    "RunRecord",
    "TAG_MAIN",
    "TAG_REPLICA",
    "TargetStatistic",
    "active_backend",
    "builtin",
    "describe_violation",
    "evaluate_acceptance",
    "get_entry",
    "init_state",
    "is_admissible",
    "list_experiments",
    "noise_audit",
    "objective_closed_form_autocov",
    "philox4x32",
    "rate",
    "requested_backend",
    "run",
    "run_experiment",
    "split_seed",
    "validate",
]

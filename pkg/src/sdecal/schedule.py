"""Power-decay learning-rate schedules and admissibility checks.

The decay family is a_t = a / (1 + t/b)^gamma.  The admissibility
conditions for the online updates (divergent step integral, square
integrability, integrable derivative, and a vanishing alpha_t^2 *
t^(1/2 + 2p) tail for some p > 0) reduce analytically for this family
to 1/2 < gamma <= 1, so validation is exact rather than numerical.
"""

from __future__ import annotations

from dataclasses import dataclass

# Condition identifiers reported by validate().
COND_STEP_INTEGRAL = "step-integral-divergent"      # int a_t dt = infinity
COND_SQUARE_INTEGRAL = "square-integrable"          # int a_t^2 dt < infinity
COND_DERIVATIVE = "derivative-integrable"           # int |a_t'| dt < infinity
COND_TAIL_DECAY = "tail-decay"                      # a_t^2 t^(1/2+2p) -> 0


@dataclass(frozen=True)
class LearningRateSchedule:
    """Decay schedule a / (1 + t/b)**gamma.

    a: initial rate (> 0).  b: time scale (> 0).  gamma: decay exponent;
    gamma = 0 gives a constant rate, useful for diagnostics but never
    admissible.
    """

    a: float
    b: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"initial rate a must be positive, got {self.a}")
        if not self.b > 0:
            raise ValueError(f"time scale b must be positive, got {self.b}")


def rate(schedule: LearningRateSchedule, t: float) -> float:
    """Rate at time t >= 0, computed directly (no accumulated state)."""
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    return schedule.a / (1.0 + t / schedule.b) ** schedule.gamma


def validate(schedule: LearningRateSchedule) -> list[str]:
    """Return the list of violated admissibility conditions (empty == admissible).

    For the power-decay family each condition is decidable in gamma alone:

    * gamma > 1 makes the step integral finite (rate decays too fast);
    * gamma <= 1/2 makes the square integral diverge;
    * gamma < 0 means the rate grows, so |a_t'| is not integrable;
    * gamma <= 1/4 leaves no p > 0 with a_t^2 t^(1/2+2p) -> 0.
    """
    g = schedule.gamma
    violations = []
    if g > 1:
        violations.append(COND_STEP_INTEGRAL)
    if g <= 0.5:
        violations.append(COND_SQUARE_INTEGRAL)
    if g < 0:
        violations.append(COND_DERIVATIVE)
    if g <= 0.25:
        violations.append(COND_TAIL_DECAY)
    return violations


def is_admissible(schedule: LearningRateSchedule) -> bool:
    return not validate(schedule)


def describe_violation(name: str) -> str:
    """Human-readable form of a violated condition, for CLI output."""
    return {
        COND_STEP_INTEGRAL: "integral of alpha_t dt is finite (must diverge)",
        COND_SQUARE_INTEGRAL: "integral of alpha_t^2 dt = infinity (must be finite)",
        COND_DERIVATIVE: "integral of |alpha_t'| dt = infinity (must be finite)",
        COND_TAIL_DECAY: "alpha_t^2 t^(1/2+2p) does not vanish for any p > 0",
    }[name]

"""Domain types for the live-experiment backend.

Treatments form a bonus x ML-quality matrix. All ML arms run under the
10-pence bonus with the comprehension quiz; the other bonus levels were
fielded without recommendations, so any cell with a bonus other than b10
must carry no ML arm.

Payment rule: a session earns the 200-pence base payment only when its
mean economic performance over the ten main problems reaches 70%, plus
the treatment's pence-per-point bonus for every full percentage point
above 70 (fractions rounded half-up).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..errors import ParameterError
from ..knapsack import KnapsackInstance, Solution

__all__ = [
    "TreatmentConfig",
    "TrialRecord",
    "SessionRecord",
    "compute_payment",
    "BONUS_RATES",
    "ML_ARMS",
    "DEFAULT_ASSIGNMENT_WEIGHTS",
    "BASE_PAYMENT_PENCE",
    "PAYMENT_THRESHOLD_PERCENT",
]

BONUS_RATES = {"none": 0, "b2": 2, "b10": 10, "b20": 20}
ML_ARMS = ("none", "q1", "q2", "q3", "q4", "q5", "q6")

BASE_PAYMENT_PENCE = 200
PAYMENT_THRESHOLD_PERCENT = 70.0


@dataclass(frozen=True)
class TreatmentConfig:
    bonus: str = "b10"
    ml_arm: str = "none"
    comprehension_quiz: bool = False

    def __post_init__(self) -> None:
        if self.bonus not in BONUS_RATES:
            raise ParameterError(f"unknown bonus level {self.bonus!r}")
        if self.ml_arm not in ML_ARMS:
            raise ParameterError(f"unknown ML arm {self.ml_arm!r}")
        if self.bonus != "b10" and self.ml_arm != "none":
            raise ParameterError("ML arms are only fielded under the 10-pence bonus")


#: Assignment weights proportional to the published cell sizes.
DEFAULT_ASSIGNMENT_WEIGHTS: dict[TreatmentConfig, int] = {
    TreatmentConfig(bonus="none", ml_arm="none", comprehension_quiz=False): 102,
    TreatmentConfig(bonus="b2", ml_arm="none", comprehension_quiz=False): 98,
    TreatmentConfig(bonus="b10", ml_arm="none", comprehension_quiz=False): 100,
    TreatmentConfig(bonus="b10", ml_arm="none", comprehension_quiz=True): 117,
    TreatmentConfig(bonus="b10", ml_arm="q1", comprehension_quiz=True): 64,
    TreatmentConfig(bonus="b10", ml_arm="q2", comprehension_quiz=True): 78,
    TreatmentConfig(bonus="b10", ml_arm="q3", comprehension_quiz=True): 194,
    TreatmentConfig(bonus="b10", ml_arm="q4", comprehension_quiz=True): 179,
    TreatmentConfig(bonus="b10", ml_arm="q5", comprehension_quiz=True): 70,
    TreatmentConfig(bonus="b10", ml_arm="q6", comprehension_quiz=True): 191,
    TreatmentConfig(bonus="b20", ml_arm="none", comprehension_quiz=False): 96,
}


def compute_payment(
    mean_econ_percent: float,
    treatment: TreatmentConfig,
    base_pence: int = BASE_PAYMENT_PENCE,
    threshold_percent: float = PAYMENT_THRESHOLD_PERCENT,
) -> int:
    """Payment in pence for a session's mean economic performance.

    Below the threshold the literal rule pays nothing; deployments that
    owe a platform minimum instead can lower ``threshold_percent`` or
    raise ``base_pence`` through the service configuration.
    """
    if not (0.0 <= mean_econ_percent <= 100.0):
        raise ParameterError(f"mean percent must lie in [0, 100], got {mean_econ_percent}")
    if mean_econ_percent < threshold_percent:
        return 0
    points = math.floor(mean_econ_percent - threshold_percent + 0.5)
    return base_pence + BONUS_RATES[treatment.bonus] * points


@dataclass
class TrialRecord:
    """One problem of one session; utilities always recomputed server-side."""

    phase: str  # "practice" | "main"
    index: int  # 1-based within the phase
    instance: KnapsackInstance
    recommendation: Solution | None = None
    started_at: int | None = None  # UTC ms
    submitted: Solution | None = None
    submitted_at: int | None = None
    elapsed_ms: int | None = None
    auto_submitted: bool = False
    econ_utility: float | None = None
    opt_utility: float | None = None

    @property
    def settled(self) -> bool:
        return self.submitted is not None

    @property
    def open(self) -> bool:
        return self.started_at is not None and self.submitted is None


@dataclass
class SessionRecord:
    """Replayed state of one participant session."""

    session_id: str
    treatment: TreatmentConfig
    seed: int
    created_at: int
    practice: list[TrialRecord] = field(default_factory=list)
    main: list[TrialRecord] = field(default_factory=list)
    payment_pence: int | None = None
    mean_econ_percent: float | None = None
    excluded_reason: str | None = None

    @property
    def phase(self) -> str:
        if self.excluded_reason is not None or self.payment_pence is not None:
            return "done"
        if all(t.settled for t in self.main) and self.main:
            return "questionnaire"
        if all(t.settled for t in self.practice) and self.practice:
            return "main"
        if any(t.started_at is not None for t in self.practice):
            return "practice"
        return "tutorial"

    @property
    def trials(self) -> list[TrialRecord]:
        return [*self.practice, *self.main]

    def open_trial(self) -> TrialRecord | None:
        for trial in self.trials:
            if trial.open:
                return trial
        return None

    def next_unstarted(self) -> TrialRecord | None:
        for trial in self.trials:
            if trial.started_at is None:
                return trial
        return None

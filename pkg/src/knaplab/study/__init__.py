"""Live-experiment backend: sessions, timed delivery, payments, export."""

from .model import (
    BONUS_RATES,
    DEFAULT_ASSIGNMENT_WEIGHTS,
    SessionRecord,
    TreatmentConfig,
    TrialRecord,
    compute_payment,
)
from .service import EventLog, ServiceConfig, StudyService, build_arm_recommenders

__all__ = [
    "BONUS_RATES",
    "DEFAULT_ASSIGNMENT_WEIGHTS",
    "SessionRecord",
    "TreatmentConfig",
    "TrialRecord",
    "compute_payment",
    "EventLog",
    "ServiceConfig",
    "StudyService",
    "build_arm_recommenders",
]

"""Event-sourced session backend for the live experiment.

The single source of truth is an append-only event log, one JSON object
per line; every read is a replay. Event schema, version 1 (all events
carry ``v`` = 1, ``type``, ``ts`` in UTC milliseconds, and ``session_id``
except where noted):

``session_created``
    seed, treatment {bonus, ml_arm, comprehension_quiz},
    practice_instances / main_instances (instance-line strings, see
    knapsack.format_instance_line), practice_recommendations /
    main_recommendations (bit strings like "01001...", or null per slot).
    Instances and recommendations are stored inline so replay needs no
    recommender or generator.
``problem_started``
    phase ("practice" | "main"), index (1-based). Written once per
    problem; re-requesting an open problem is idempotent and logs nothing.
``solution_submitted``
    phase, index, selection (bit string), client_elapsed_ms, client_auto,
    auto_submitted, elapsed_ms, econ_utility, opt_utility. auto_submitted
    is true when the client flagged the deadline or the server clock saw
    the submission after the limit plus grace.
``session_finalized``
    mean_econ_percent, payment_pence.
``session_invalidated``
    reason (e.g. "reload"); the session is kept but marked excluded from
    every export.

Concurrency: each session's operations serialize on a per-session lock,
log appends are atomic under their own lock, and cross-session state is
read-only configuration.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

import numpy as np

from ..analysis import TrialObservation
from ..errors import (
    ConflictError,
    EmptyDatasetError,
    FeasibilityError,
    ParameterError,
    PersistenceError,
    PhaseError,
    UnknownSessionError,
)
from ..knapsack import (
    KnapsackInstance,
    Solution,
    UtilityKind,
    format_instance_line,
    generate_instance,
    parse_instance_line,
    utility,
)
from ..recommenders import LabeledDataset, Recommender, calibrate_to_target
from ..rng import derive_seed, make_rng
from .model import (
    DEFAULT_ASSIGNMENT_WEIGHTS,
    SessionRecord,
    TreatmentConfig,
    TrialRecord,
    compute_payment,
)

__all__ = ["ServiceConfig", "StudyService", "EventLog", "build_arm_recommenders"]

#: Table-level treatment targets for the six ML arms.
ARM_TARGETS = {
    "q1": 0.717,
    "q2": 0.800,
    "q3": 0.844,
    "q4": 0.884,
    "q5": 0.899,
    "q6": 0.920,
}


def _now_ms() -> int:
    return int(time.time() * 1000)


@dataclass
class ServiceConfig:
    item_count: int = 18
    w_min: int = 5
    w_max: int = 250
    n_practice: int = 2
    n_main: int = 10
    time_limit_ms: int = 180_000
    grace_ms: int = 2_000
    payment_base_pence: int = 200
    payment_threshold_percent: float = 70.0
    assignment_weights: dict[TreatmentConfig, int] = field(
        default_factory=lambda: dict(DEFAULT_ASSIGNMENT_WEIGHTS)
    )
    #: arm label -> recommender; None defers to build_arm_recommenders()
    arm_recommenders: dict[str, Recommender] | None = None
    calibration_instances: int = 500
    calibration_seed: int = 20240

    def cells(self) -> list[tuple[TreatmentConfig, int]]:
        return sorted(
            self.assignment_weights.items(),
            key=lambda kv: (kv[0].bonus, kv[0].ml_arm, kv[0].comprehension_quiz),
        )


def build_arm_recommenders(config: ServiceConfig) -> dict[str, Recommender]:
    """Calibrate one noisy-greedy recommender per treatment arm."""
    eval_set = [
        generate_instance(
            config.item_count, config.w_min, config.w_max, derive_seed(config.calibration_seed, i)
        )
        for i in range(config.calibration_instances)
    ]
    return {
        arm: calibrate_to_target(target, eval_set, seed=derive_seed(config.calibration_seed, 1, k), label=arm)
        for k, (arm, target) in enumerate(sorted(ARM_TARGETS.items()))
    }


class EventLog:
    """Append-only JSONL log; appends are atomic and flushed."""

    def __init__(self, path=None):
        self._path = path
        self._lock = threading.Lock()
        self._events: list[dict] = []
        if path is not None:
            try:
                with open(path, "r", encoding="utf-8") as fh:
                    self._events = [json.loads(line) for line in fh if line.strip()]
            except FileNotFoundError:
                pass
            except OSError as exc:
                raise PersistenceError(f"cannot read event log {path}: {exc}") from exc

    def append(self, event: dict) -> None:
        with self._lock:
            if self._path is not None:
                try:
                    with open(self._path, "a", encoding="utf-8") as fh:
                        fh.write(json.dumps(event, separators=(",", ":")) + "\n")
                        fh.flush()
                except OSError as exc:
                    raise PersistenceError(f"cannot append to event log: {exc}") from exc
            self._events.append(event)

    def events(self) -> list[dict]:
        with self._lock:
            return list(self._events)


def _bits_str(solution: Solution | None) -> str | None:
    if solution is None:
        return None
    return "".join(str(b) for b in solution.selection)


class StudyService:
    """Sessions, treatment assignment, timed delivery, payments, export."""

    def __init__(
        self,
        config: ServiceConfig | None = None,
        log: EventLog | None = None,
        clock: Callable[[], int] | None = None,
    ):
        self.config = config or ServiceConfig()
        self.log = log or EventLog()
        self.clock = clock or _now_ms
        self._sessions: dict[str, SessionRecord] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._create_lock = threading.Lock()
        self._recommenders: dict[str, Recommender] | None = self.config.arm_recommenders
        for event in self.log.events():
            self._apply(event)

    # -- internal machinery -------------------------------------------------

    def _recommender_for(self, arm: str) -> Recommender:
        if self._recommenders is None:
            self._recommenders = build_arm_recommenders(self.config)
        if arm not in self._recommenders:
            raise ParameterError(f"no recommender configured for arm {arm!r}")
        return self._recommenders[arm]

    def _session(self, session_id: str) -> SessionRecord:
        session = self._sessions.get(session_id)
        if session is None:
            raise UnknownSessionError(f"unknown session {session_id!r}")
        return session

    def _lock_for(self, session_id: str) -> threading.Lock:
        with self._create_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def _record(self, event: dict) -> None:
        self._apply(event)
        self.log.append(event)

    def _apply(self, event: dict) -> None:
        kind = event["type"]
        if kind == "session_created":
            treatment = TreatmentConfig(**event["treatment"])
            session = SessionRecord(
                session_id=event["session_id"],
                treatment=treatment,
                seed=event["seed"],
                created_at=event["ts"],
            )
            for phase, inst_key, rec_key, bucket in (
                ("practice", "practice_instances", "practice_recommendations", session.practice),
                ("main", "main_instances", "main_recommendations", session.main),
            ):
                for i, line in enumerate(event[inst_key]):
                    instance = parse_instance_line(line)
                    rec_bits = event[rec_key][i]
                    rec = (
                        Solution.from_selection(instance, [int(b) for b in rec_bits])
                        if rec_bits is not None
                        else None
                    )
                    bucket.append(
                        TrialRecord(phase=phase, index=i + 1, instance=instance, recommendation=rec)
                    )
            self._sessions[session.session_id] = session
            return

        session = self._sessions[event["session_id"]]
        if kind == "problem_started":
            trial = self._trial(session, event["phase"], event["index"])
            trial.started_at = event["ts"]
        elif kind == "solution_submitted":
            trial = self._trial(session, event["phase"], event["index"])
            trial.submitted = Solution.from_selection(
                trial.instance, [int(b) for b in event["selection"]]
            )
            trial.submitted_at = event["ts"]
            trial.elapsed_ms = event["elapsed_ms"]
            trial.auto_submitted = event["auto_submitted"]
            trial.econ_utility = event["econ_utility"]
            trial.opt_utility = event["opt_utility"]
        elif kind == "session_finalized":
            session.mean_econ_percent = event["mean_econ_percent"]
            session.payment_pence = event["payment_pence"]
        elif kind == "session_invalidated":
            session.excluded_reason = event["reason"]
        else:
            raise PersistenceError(f"unknown event type {kind!r} in log")

    @staticmethod
    def _trial(session: SessionRecord, phase: str, index: int) -> TrialRecord:
        bucket = session.practice if phase == "practice" else session.main
        return bucket[index - 1]

    # -- operations ----------------------------------------------------------

    def draw_treatment(self, seed: int) -> TreatmentConfig:
        """Weighted random treatment cell, deterministic in ``seed``."""
        cells = self.config.cells()
        weights = np.array([w for _, w in cells], dtype=float)
        rng = make_rng(derive_seed(seed, 0xA551))
        return cells[int(rng.choice(len(cells), p=weights / weights.sum()))][0]

    def create_session(
        self,
        assignment_mode: str = "random",
        seed: int = 0,
        treatment: TreatmentConfig | None = None,
    ) -> SessionRecord:
        """Create a session with fresh instances and precomputed recommendations.

        ``random`` draws the treatment cell from the configured weights
        (deterministically from ``seed``); ``forced`` uses the given cell.
        """
        if assignment_mode == "forced":
            if treatment is None:
                raise ParameterError("forced assignment needs a treatment")
        elif assignment_mode == "random":
            treatment = self.draw_treatment(seed)
        else:
            raise ParameterError(f"unknown assignment mode {assignment_mode!r}")

        cfg = self.config
        practice = [
            generate_instance(cfg.item_count, cfg.w_min, cfg.w_max, derive_seed(seed, 1, i))
            for i in range(cfg.n_practice)
        ]
        main = [
            generate_instance(cfg.item_count, cfg.w_min, cfg.w_max, derive_seed(seed, 2, i))
            for i in range(cfg.n_main)
        ]
        if treatment.ml_arm != "none":
            rec = self._recommender_for(treatment.ml_arm)
            practice_recs = [
                _bits_str(rec.recommend(inst, derive_seed(seed, 3, 0, i)))
                for i, inst in enumerate(practice)
            ]
            main_recs = [
                _bits_str(rec.recommend(inst, derive_seed(seed, 3, 1, i)))
                for i, inst in enumerate(main)
            ]
        else:
            practice_recs = [None] * len(practice)
            main_recs = [None] * len(main)

        with self._create_lock:
            index = sum(1 for e in self.log.events() if e["type"] == "session_created")
            session_id = f"s{index:05d}-{derive_seed(seed, index):016x}"
        event = {
            "v": 1,
            "type": "session_created",
            "ts": self.clock(),
            "session_id": session_id,
            "seed": int(seed),
            "treatment": {
                "bonus": treatment.bonus,
                "ml_arm": treatment.ml_arm,
                "comprehension_quiz": treatment.comprehension_quiz,
            },
            "practice_instances": [format_instance_line(inst) for inst in practice],
            "main_instances": [format_instance_line(inst) for inst in main],
            "practice_recommendations": practice_recs,
            "main_recommendations": main_recs,
        }
        self._record(event)
        return self._sessions[session_id]

    def next_problem(self, session_id: str) -> dict:
        """Serve the session's current problem, starting its clock once.

        Repeated calls without a submission return the same problem and
        the original start timestamp.
        """
        with self._lock_for(session_id):
            session = self._session(session_id)
            if session.phase in ("questionnaire", "done"):
                raise PhaseError(f"session is in phase {session.phase!r}; no problems remain")
            trial = session.open_trial()
            if trial is None:
                trial = session.next_unstarted()
                if trial is None:
                    raise PhaseError("no problems remain")
                self._record(
                    {
                        "v": 1,
                        "type": "problem_started",
                        "ts": self.clock(),
                        "session_id": session_id,
                        "phase": trial.phase,
                        "index": trial.index,
                    }
                )
            now = self.clock()
            return {
                "session_id": session_id,
                "phase": trial.phase,
                "problem_index": trial.index,
                "n_problems": len(session.practice) if trial.phase == "practice" else len(session.main),
                "weights": list(trial.instance.weights),
                "values": list(trial.instance.values),
                "capacity": trial.instance.capacity,
                "started_at": trial.started_at,
                "server_now": now,
                "time_limit_ms": self.config.time_limit_ms,
                "remaining_ms": max(0, self.config.time_limit_ms - (now - trial.started_at)),
                "recommendation": list(trial.recommendation.selection)
                if trial.recommendation is not None
                else None,
                "recommendation_value": trial.recommendation.total_value
                if trial.recommendation is not None
                else None,
            }

    def submit_solution(
        self,
        session_id: str,
        problem_index: int,
        selection: Iterable[int],
        client_elapsed_ms: int = 0,
        auto: bool = False,
    ) -> dict:
        """Validate and settle the open problem.

        The server clock governs: submissions arriving after the time
        limit plus grace are flagged auto-submitted regardless of what
        the client claims. Practice trials return utility feedback; main
        trials return a bare acknowledgment.
        """
        with self._lock_for(session_id):
            session = self._session(session_id)
            trial = session.open_trial()
            if trial is None:
                settled = [t for t in session.trials if t.settled and t.index == problem_index]
                if settled:
                    raise ConflictError(f"problem {problem_index} is already settled")
                raise PhaseError("no problem is open for submission")
            if trial.index != problem_index:
                raise ConflictError(
                    f"open problem is {trial.phase} #{trial.index}, not #{problem_index}"
                )
            bits = [int(bool(b)) for b in selection]
            candidate = Solution.from_selection(trial.instance, bits)
            if not candidate.feasible(trial.instance):
                raise FeasibilityError(
                    f"selection weighs {candidate.total_weight}, capacity is {trial.instance.capacity}"
                )
            now = self.clock()
            server_elapsed = now - trial.started_at
            late = server_elapsed > self.config.time_limit_ms + self.config.grace_ms
            auto_submitted = bool(auto) or late
            elapsed_ms = (
                min(server_elapsed, self.config.time_limit_ms) if auto_submitted else server_elapsed
            )
            econ = utility(UtilityKind.ECONOMIC, trial.instance, candidate)
            opt = utility(UtilityKind.OPTIMALITY, trial.instance, candidate)
            self._record(
                {
                    "v": 1,
                    "type": "solution_submitted",
                    "ts": now,
                    "session_id": session_id,
                    "phase": trial.phase,
                    "index": trial.index,
                    "selection": _bits_str(candidate),
                    "client_elapsed_ms": int(client_elapsed_ms),
                    "client_auto": bool(auto),
                    "auto_submitted": auto_submitted,
                    "elapsed_ms": int(elapsed_ms),
                    "econ_utility": econ,
                    "opt_utility": opt,
                }
            )
            response = {
                "ack": True,
                "phase": trial.phase,
                "problem_index": trial.index,
                "auto_submitted": auto_submitted,
            }
            if trial.phase == "practice":
                response["feedback"] = {"econ_percent": round(100.0 * econ, 1)}
            return response

    def finalize_session(self, session_id: str) -> dict:
        """Close the session: settle any open problem as an auto-submitted
        empty selection, compute the payment, and return score-screen data."""
        with self._lock_for(session_id):
            session = self._session(session_id)
            if session.phase == "done":
                raise ConflictError("session is already closed")
            trial = session.open_trial()
            if trial is not None:
                now = self.clock()
                empty = Solution.empty(trial.instance)
                self._record(
                    {
                        "v": 1,
                        "type": "solution_submitted",
                        "ts": now,
                        "session_id": session_id,
                        "phase": trial.phase,
                        "index": trial.index,
                        "selection": _bits_str(empty),
                        "client_elapsed_ms": 0,
                        "client_auto": False,
                        "auto_submitted": True,
                        "elapsed_ms": self.config.time_limit_ms,
                        "econ_utility": 0.0,
                        "opt_utility": 0.0,
                    }
                )
            if session.phase != "questionnaire":
                raise PhaseError("cannot finalize before all main problems are settled")
            mean_percent = 100.0 * float(
                np.mean([t.econ_utility for t in session.main])
            )
            payment = compute_payment(
                mean_percent,
                session.treatment,
                base_pence=self.config.payment_base_pence,
                threshold_percent=self.config.payment_threshold_percent,
            )
            self._record(
                {
                    "v": 1,
                    "type": "session_finalized",
                    "ts": self.clock(),
                    "session_id": session_id,
                    "mean_econ_percent": mean_percent,
                    "payment_pence": payment,
                }
            )
            return {
                "session_id": session_id,
                "mean_econ_percent": mean_percent,
                "payment_pence": payment,
                "trials": [
                    {"problem_index": t.index, "econ_percent": round(100.0 * t.econ_utility, 1)}
                    for t in session.main
                ],
            }

    def invalidate_session(self, session_id: str, reason: str = "reload") -> dict:
        """Mark a session excluded (browser reload / back navigation)."""
        with self._lock_for(session_id):
            self._session(session_id)
            self._record(
                {
                    "v": 1,
                    "type": "session_invalidated",
                    "ts": self.clock(),
                    "session_id": session_id,
                    "reason": reason,
                }
            )
            return {"session_id": session_id, "excluded": True, "reason": reason}

    def get_session(self, session_id: str) -> SessionRecord:
        return self._session(session_id)

    # -- exports ---------------------------------------------------------------

    def _exportable_sessions(
        self, arm: str | None = None, bonus: str | None = None, include_incomplete: bool = False
    ) -> list[SessionRecord]:
        out = []
        for session in self._sessions.values():
            if session.excluded_reason is not None:
                continue
            if not include_incomplete and session.payment_pence is None:
                continue
            if arm is not None and session.treatment.ml_arm != arm:
                continue
            if bonus is not None and session.treatment.bonus != bonus:
                continue
            out.append(session)
        return sorted(out, key=lambda s: s.session_id)

    def export_trials(
        self, arm: str | None = None, bonus: str | None = None, include_incomplete: bool = False
    ) -> list[TrialObservation]:
        """Settled main trials as analysis-layer observations."""
        trials = []
        for session in self._exportable_sessions(arm, bonus, include_incomplete):
            for t in session.main:
                if not t.settled:
                    continue
                trials.append(
                    TrialObservation(
                        session_id=session.session_id,
                        arm=session.treatment.ml_arm,
                        bonus=session.treatment.bonus,
                        instance=t.instance,
                        submitted=t.submitted,
                        recommendation=t.recommendation,
                        elapsed_ms=t.elapsed_ms or 0,
                        auto_submitted=t.auto_submitted,
                    )
                )
        return trials

    def export_epoch_dataset(
        self, arm: str | None = None, bonus: str | None = None, epoch_tag: int = 0
    ) -> LabeledDataset:
        """(instance, submitted solution) pairs ready for imitation training."""
        pairs = tuple(
            (t.instance, t.submitted) for t in self.export_trials(arm=arm, bonus=bonus)
        )
        if not pairs:
            raise EmptyDatasetError("no completed trials match the filter")
        return LabeledDataset(pairs=pairs, epoch_tag=epoch_tag)

    def export_jsonl(
        self, arm: str | None = None, bonus: str | None = None, include_incomplete: bool = False
    ) -> Iterator[str]:
        """Line-delimited trial records for the HTTP export endpoint."""
        for session in self._exportable_sessions(arm, bonus, include_incomplete):
            for t in session.main:
                if not t.settled:
                    continue
                yield json.dumps(
                    {
                        "session_id": session.session_id,
                        "arm": session.treatment.ml_arm,
                        "bonus": session.treatment.bonus,
                        "comprehension_quiz": session.treatment.comprehension_quiz,
                        "phase": t.phase,
                        "problem_index": t.index,
                        "instance": format_instance_line(t.instance),
                        "submitted": _bits_str(t.submitted),
                        "recommendation": _bits_str(t.recommendation),
                        "elapsed_ms": t.elapsed_ms,
                        "auto_submitted": t.auto_submitted,
                        "econ_utility": t.econ_utility,
                        "opt_utility": t.opt_utility,
                    },
                    separators=(",", ":"),
                )

    def audit_log(self) -> list[str]:
        """Recompute every logged utility and payment from raw data.

        Returns a list of human-readable mismatch descriptions; an intact
        log yields an empty list.
        """
        problems = []
        for event in self.log.events():
            if event["type"] == "solution_submitted":
                session = self._sessions[event["session_id"]]
                trial = self._trial(session, event["phase"], event["index"])
                sol = Solution.from_selection(
                    trial.instance, [int(b) for b in event["selection"]]
                )
                econ = utility(UtilityKind.ECONOMIC, trial.instance, sol)
                opt = utility(UtilityKind.OPTIMALITY, trial.instance, sol)
                if abs(econ - event["econ_utility"]) > 1e-12 or opt != event["opt_utility"]:
                    problems.append(
                        f"{event['session_id']} {event['phase']}#{event['index']}: "
                        f"logged utilities {event['econ_utility']}/{event['opt_utility']}, "
                        f"recomputed {econ}/{opt}"
                    )
        for session in self._sessions.values():
            if session.payment_pence is None:
                continue
            mean_percent = 100.0 * float(np.mean([t.econ_utility for t in session.main]))
            expected = compute_payment(
                mean_percent,
                session.treatment,
                base_pence=self.config.payment_base_pence,
                threshold_percent=self.config.payment_threshold_percent,
            )
            if expected != session.payment_pence:
                problems.append(
                    f"{session.session_id}: logged payment {session.payment_pence}, "
                    f"recomputed {expected}"
                )
        return problems

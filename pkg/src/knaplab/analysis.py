"""Estimating empirical characteristic functions from trial logs.

Trials are clustered by participant: repeated observations from one
person are correlated, so standard errors for arm-level means sum the
residuals within each cluster before squaring (CR0, no small-sample
correction; with every cluster a singleton this reduces exactly to the
heteroskedasticity-robust standard error of a mean).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dynamics import CcfPoint
from .errors import DegenerateClusterError, FormatError, ParameterError
from .knapsack import (
    KnapsackInstance,
    Solution,
    UtilityKind,
    format_instance_line,
    parse_instance_line,
    utility,
)

__all__ = [
    "ClusteredMean",
    "clustered_mean",
    "TrialObservation",
    "estimate_ccf",
    "follow_ignore_decomposition",
    "FollowIgnore",
    "write_trials_csv",
    "read_trials_csv",
    "trials_from_jsonl",
    "delta_table_from_trials",
]


@dataclass(frozen=True)
class ClusteredMean:
    mean: float
    se: float
    n_obs: int
    n_clusters: int

    def __post_init__(self) -> None:
        if self.n_clusters > self.n_obs:
            raise ParameterError("cannot have more clusters than observations")
        if self.se < 0:
            raise ParameterError("standard error must be non-negative")


def clustered_mean(values: Sequence[float], cluster_ids: Sequence) -> ClusteredMean:
    """Mean with a CR0 cluster-robust standard error.

    variance = (1/N^2) * sum_g (sum_{i in g} (x_i - mean))^2
    """
    x = np.asarray(values, dtype=float)
    ids = list(cluster_ids)
    if x.size != len(ids):
        raise ParameterError("values and cluster ids must align")
    if x.size == 0:
        raise ParameterError("clustered_mean needs at least one observation")
    clusters = {}
    for value, cid in zip(x, ids):
        clusters.setdefault(cid, []).append(value)
    if len(clusters) < 2:
        raise DegenerateClusterError(f"need >= 2 clusters, got {len(clusters)}")
    mean = float(x.mean())
    variance = sum(
        (np.sum(np.asarray(group) - mean)) ** 2 for group in clusters.values()
    ) / x.size**2
    return ClusteredMean(mean=mean, se=float(np.sqrt(variance)), n_obs=int(x.size), n_clusters=len(clusters))


@dataclass(frozen=True)
class TrialObservation:
    """One main-task trial as the analysis layer sees it."""

    session_id: str
    arm: str
    bonus: str
    instance: KnapsackInstance
    submitted: Solution
    recommendation: Solution | None = None
    elapsed_ms: int = 0
    auto_submitted: bool = False


def estimate_ccf(
    trials: Iterable[TrialObservation],
    kind: UtilityKind = UtilityKind.ECONOMIC,
) -> list[CcfPoint]:
    """Per-arm characteristic-function points from logged trials.

    For each arm carrying recommendations: model utility is the plain mean
    of recommendation utilities, collaboration utility is the session-
    clustered mean of submitted utilities, and the point's standard error
    is the clustered SE of the per-trial (submitted - recommendation)
    difference. Arms without usable data are skipped with a warning.
    Utilities are recomputed from the instances here rather than trusted
    from any log.
    """
    by_arm: dict[str, list[TrialObservation]] = {}
    for trial in trials:
        if trial.arm and trial.arm != "none" and trial.recommendation is not None:
            by_arm.setdefault(trial.arm, []).append(trial)
    if not by_arm:
        raise ParameterError("log contains no trials with recommendations")

    points = []
    for arm, rows in sorted(by_arm.items()):
        sessions = {t.session_id for t in rows}
        if len(sessions) < 2:
            warnings.warn(f"arm {arm!r} has fewer than two sessions; skipped")
            continue
        rec_us = np.array([utility(kind, t.instance, t.recommendation) for t in rows])
        sub_us = np.array([utility(kind, t.instance, t.submitted) for t in rows])
        ids = [t.session_id for t in rows]
        collab = clustered_mean(sub_us, ids)
        delta = clustered_mean(sub_us - rec_us, ids)
        model_mean = float(rec_us.mean())
        points.append(
            CcfPoint(
                model_utility=model_mean,
                collab_utility=collab.mean,
                delta=collab.mean - model_mean,
                se=delta.se,
                label=arm,
                provenance="measured",
            )
        )
    points.sort(key=lambda p: p.model_utility)
    return points


@dataclass(frozen=True)
class FollowIgnore:
    follow_rate: float
    inferior_when_deviating_rate: float | None
    n_trials: int


def follow_ignore_decomposition(
    trials: Iterable[TrialObservation],
) -> dict[str, FollowIgnore]:
    """Per arm: how often the recommendation was submitted verbatim, and,
    among deviating trials, how often the submission was worth less than
    the recommendation. With no deviations the inferior rate is absent."""
    by_arm: dict[str, list[TrialObservation]] = {}
    for trial in trials:
        if trial.arm and trial.arm != "none" and trial.recommendation is not None:
            by_arm.setdefault(trial.arm, []).append(trial)

    out: dict[str, FollowIgnore] = {}
    for arm, rows in sorted(by_arm.items()):
        followed = sum(1 for t in rows if t.submitted.selection == t.recommendation.selection)
        deviating = [t for t in rows if t.submitted.selection != t.recommendation.selection]
        if deviating:
            inferior = sum(
                1 for t in deviating if t.submitted.total_value < t.recommendation.total_value
            )
            inferior_rate = inferior / len(deviating)
        else:
            inferior_rate = None
        out[arm] = FollowIgnore(
            follow_rate=followed / len(rows),
            inferior_when_deviating_rate=inferior_rate,
            n_trials=len(rows),
        )
    return out


def delta_table_from_trials(
    trials: Iterable[TrialObservation],
    arm: str,
    kind: UtilityKind = UtilityKind.ECONOMIC,
) -> tuple[float, ...]:
    """Per-trial (submitted - recommendation) utility deltas for one arm.

    The result plugs straight into an ``empirical_tabular`` human model,
    letting simulations replay the improvement distribution observed in a
    logged study.
    """
    deltas = []
    for t in trials:
        if t.arm != arm or t.recommendation is None:
            continue
        deltas.append(
            utility(kind, t.instance, t.submitted) - utility(kind, t.instance, t.recommendation)
        )
    if not deltas:
        raise ParameterError(f"no trials with recommendations for arm {arm!r}")
    return tuple(deltas)


def trials_from_jsonl(lines: Iterable[str]) -> list[TrialObservation]:
    """Parse the study service's line-delimited export records."""
    import json

    out = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        record = json.loads(line)
        instance = parse_instance_line(record["instance"])
        rec_bits = record.get("recommendation")
        out.append(
            TrialObservation(
                session_id=record["session_id"],
                arm=record.get("arm", "none"),
                bonus=record.get("bonus", "none"),
                instance=instance,
                submitted=Solution.from_selection(instance, [int(b) for b in record["submitted"]]),
                recommendation=(
                    Solution.from_selection(instance, [int(b) for b in rec_bits])
                    if rec_bits
                    else None
                ),
                elapsed_ms=int(record.get("elapsed_ms") or 0),
                auto_submitted=bool(record.get("auto_submitted", False)),
            )
        )
    return out


# ---------------------------------------------------------------------------
# per-trial CSV (regression-ready; round-trips exactly)

TRIALS_CSV_HEADER = [
    "session_id",
    "arm",
    "bonus",
    "instance",
    "submitted",
    "recommendation",
    "elapsed_ms",
    "auto_submitted",
]


def _bits_to_str(sol: Solution | None) -> str:
    if sol is None:
        return "-"
    return "".join(str(b) for b in sol.selection)


def _bits_from_str(text: str, instance: KnapsackInstance) -> Solution | None:
    if text == "-":
        return None
    return Solution.from_selection(instance, [int(ch) for ch in text])


def write_trials_csv(trials: Iterable[TrialObservation], fh) -> None:
    writer = csv.writer(fh)
    writer.writerow(TRIALS_CSV_HEADER)
    for t in trials:
        writer.writerow(
            [
                t.session_id,
                t.arm,
                t.bonus,
                format_instance_line(t.instance),
                _bits_to_str(t.submitted),
                _bits_to_str(t.recommendation),
                t.elapsed_ms,
                int(t.auto_submitted),
            ]
        )


def read_trials_csv(fh) -> list[TrialObservation]:
    reader = csv.reader(fh)
    header = next(reader)
    if header != TRIALS_CSV_HEADER:
        raise FormatError(f"unexpected trials CSV header: {header}")
    out = []
    for row in reader:
        instance = parse_instance_line(row[3])
        out.append(
            TrialObservation(
                session_id=row[0],
                arm=row[1],
                bonus=row[2],
                instance=instance,
                submitted=_bits_from_str(row[4], instance),
                recommendation=_bits_from_str(row[5], instance),
                elapsed_ms=int(row[6]),
                auto_submitted=bool(int(row[7])),
            )
        )
    return out

"""Collaboration dynamics: characteristic functions, learning paths, stable points.

The collaborative characteristic function (CCF) maps a deployed model's
expected utility to the expected utility of human decisions made with that
model's recommendations. Iterating deploy -> label -> retrain under a
perfect learner walks the collaborative learning path (CLP)

    u_model(1) = s,
    u_collab(t) = ccf(u_model(t)),
    u_model(t+1) = learner(u_collab(t)),

which stabilizes once the human-over-model gap falls below the minimum
distinguishable utility change epsilon_hat. Stable points sit on the
45-degree line up to epsilon_hat.

Empirical CCFs are piecewise-linear interpolations of measured points and
are clamped outside the measured range rather than extrapolated: the data
only supports the function on the portion of the domain that was measured,
and inventing slopes beyond it would manufacture fixed points.

The module also runs the loop for real (closed loop over generated
instances, a recommender, a human model, and imitation retraining) and
checks the two monotone-convergence guarantees (improvement and harm) by
simulation.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import FormatError, ParameterError, PreconditionError
from .humans import HumanModel, apply_human
from .knapsack import KnapsackInstance, UtilityKind, generate_instance, utility
from .recommenders import LabeledDataset, Recommender, TrainingConfig, train_imitation
from .rng import derive_seed, make_rng

__all__ = [
    "CcfPoint",
    "Ccf",
    "LearnerMap",
    "PERFECT_LEARNER",
    "LearningPath",
    "PathStep",
    "LoopEpoch",
    "LoopTrace",
    "ccf_eval",
    "simulate_clp",
    "find_fixed_points",
    "run_performative_loop",
    "check_proposition",
    "random_side_ccf",
    "empirical_ccf",
    "save_ccf",
    "load_ccf",
    "write_path_csv",
    "read_path_csv",
    "write_trace_csv",
]

#: Default minimum distinguishable utility change: one percentage point.
#: A measured human-over-model gap of half a point is already treated as
#: "statistically indistinguishable from zero" at the stable arm, so one
#: point operationalizes the epsilon-sensitivity floor.
DEFAULT_EPSILON_HAT = 0.01


@dataclass(frozen=True)
class CcfPoint:
    """One measured (model utility, collaboration utility) pair."""

    model_utility: float
    collab_utility: float
    delta: float | None = None
    se: float = 0.0
    label: str = ""
    provenance: str = ""

    def __post_init__(self) -> None:
        if self.delta is None:
            object.__setattr__(self, "delta", self.collab_utility - self.model_utility)
        elif abs(self.delta - (self.collab_utility - self.model_utility)) > 1e-12:
            raise ParameterError(
                f"delta {self.delta} inconsistent with collab - model = "
                f"{self.collab_utility - self.model_utility}"
            )
        if self.se < 0:
            raise ParameterError("standard error must be non-negative")


@dataclass(frozen=True)
class Ccf:
    """Piecewise-linear characteristic function through >= 2 points.

    Outside the measured model-utility range the function clamps to the
    nearest endpoint's collaboration utility.
    """

    points: tuple[CcfPoint, ...]

    def __post_init__(self) -> None:
        if len(self.points) < 2:
            raise ParameterError("a CCF needs at least two points")
        xs = [p.model_utility for p in self.points]
        if any(a >= b for a, b in zip(xs, xs[1:])):
            raise ParameterError("CCF points must have strictly increasing model utility")
        object.__setattr__(self, "_xs", np.array(xs))
        object.__setattr__(self, "_ys", np.array([p.collab_utility for p in self.points]))

    def __call__(self, u: float) -> float:
        return ccf_eval(self, u)


def ccf_eval(ccf: Ccf, u) -> float:
    """Interpolate the CCF at model utility ``u`` (clamped outside the knots).

    Accepts an array of utilities as well, returning an array.
    """
    out = np.interp(u, ccf._xs, ccf._ys)
    return float(out) if np.isscalar(u) or np.ndim(u) == 0 else out


@dataclass(frozen=True)
class LearnerMap:
    """How much of last epoch's collaboration utility the next model keeps.

    ``perfect`` reproduces it exactly; ``affine_tilt`` applies a clamped
    affine distortion a*u + b, the tilted 45-degree line of an imperfect
    learner.
    """

    kind: str = "perfect"
    slope: float = 1.0
    intercept: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("perfect", "affine_tilt"):
            raise ParameterError(f"unknown learner kind {self.kind!r}")
        if self.kind == "perfect" and (self.slope != 1.0 or self.intercept != 0.0):
            raise ParameterError("a perfect learner has slope 1 and intercept 0")

    def __call__(self, u: float) -> float:
        if self.kind == "perfect":
            return u
        return min(1.0, max(0.0, self.slope * u + self.intercept))


PERFECT_LEARNER = LearnerMap()


@dataclass(frozen=True)
class PathStep:
    epoch: int
    model_utility: float
    collab_utility: float


@dataclass(frozen=True)
class LearningPath:
    """The utility trajectory of one deployment sequence."""

    start_utility: float
    epsilon_hat: float
    steps: tuple[PathStep, ...]
    stable_at: int | None = None

    @property
    def final_utility(self) -> float:
        return self.steps[-1].collab_utility


def simulate_clp(
    ccf: Ccf,
    s: float,
    T: int,
    epsilon_hat: float = DEFAULT_EPSILON_HAT,
    learner: LearnerMap = PERFECT_LEARNER,
) -> LearningPath:
    """Iterate the deployment loop on a CCF from starting utility ``s``.

    The path is marked stable at the first epoch whose human-over-model
    gap is at most ``epsilon_hat``; from then on the recorded utilities
    repeat, since a sub-epsilon change is not a distinguishable update.
    """
    if not (0.0 <= s <= 1.0):
        raise ParameterError(f"start utility must lie in [0, 1], got {s}")
    if T < 1:
        raise ParameterError("need at least one epoch")
    if epsilon_hat <= 0:
        raise ParameterError("epsilon_hat must be positive")

    steps: list[PathStep] = []
    stable_at: int | None = None
    u = s
    c = ccf_eval(ccf, u)
    for t in range(1, T + 1):
        if stable_at is None:
            c = ccf_eval(ccf, u)
        steps.append(PathStep(epoch=t, model_utility=u, collab_utility=c))
        if stable_at is None:
            if abs(c - u) <= epsilon_hat:
                stable_at = t
            else:
                u = learner(c)
    return LearningPath(start_utility=s, epsilon_hat=epsilon_hat, steps=tuple(steps), stable_at=stable_at)


def find_fixed_points(
    ccf: Ccf, epsilon_hat: float = DEFAULT_EPSILON_HAT
) -> list[tuple[float, str]]:
    """Locate utilities where the CCF meets the 45-degree line.

    Scans the knot grid (plus the clamped tails down to 0 and up to 1) for
    points with |ccf(u) - u| <= epsilon_hat and bisects every sign change
    of ccf(u) - u. Stability is classified by the local slope: attracting
    if |slope| < 1, repelling if |slope| > 1, else neutral. The slope rule
    is an implementation convention, not a measured quantity.
    """
    grid = [0.0] + [p.model_utility for p in ccf.points] + [1.0]
    grid = sorted(set(grid))
    gap = [ccf_eval(ccf, u) - u for u in grid]

    candidates: list[float] = []
    for u, g in zip(grid, gap):
        if abs(g) <= epsilon_hat:
            candidates.append(u)
    for (a, ga), (b, gb) in zip(zip(grid, gap), zip(grid[1:], gap[1:])):
        if ga == 0.0 or gb == 0.0 or (ga > 0) == (gb > 0):
            continue
        lo, hi = a, b
        for _ in range(80):
            mid = (lo + hi) / 2.0
            gm = ccf_eval(ccf, mid) - mid
            if gm == 0.0:
                break
            if (gm > 0) == (ga > 0):
                lo = mid
            else:
                hi = mid
        candidates.append((lo + hi) / 2.0)

    # candidates closer than epsilon_hat are indistinguishable at the
    # laboratory's resolution; keep the best representative of each cluster
    roots: list[float] = []
    for u in sorted(candidates):
        if roots and abs(u - roots[-1]) <= epsilon_hat:
            if abs(ccf_eval(ccf, u) - u) < abs(ccf_eval(ccf, roots[-1]) - roots[-1]):
                roots[-1] = u
        else:
            roots.append(u)

    out: list[tuple[float, str]] = []
    h = 1e-6
    for u in roots:
        a = max(0.0, u - h)
        b = min(1.0, u + h)
        slope = (ccf_eval(ccf, b) - ccf_eval(ccf, a)) / (b - a)
        if abs(abs(slope) - 1.0) <= 1e-9:
            stability = "neutral"
        elif abs(slope) < 1.0:
            stability = "attracting"
        else:
            stability = "repelling"
        out.append((u, stability))
    return out


# ---------------------------------------------------------------------------
# proposition checks


@dataclass(frozen=True)
class PropositionReport:
    side: str
    trials: int
    passed: bool
    failures: tuple[tuple[float, str], ...] = ()


def check_proposition(
    ccf: Ccf,
    side: str,
    trials: int,
    seed: int,
    epsilon_hat: float = DEFAULT_EPSILON_HAT,
    grid_size: int = 512,
) -> PropositionReport:
    """Verify the monotone-convergence guarantee by simulation.

    ``improvement`` requires f(u) >= u on the whole sampled grid and
    asserts non-decreasing paths; ``harm`` is the mirror image. Every
    path must stabilize within ceil(1/epsilon_hat) + 1 epochs.
    """
    if side not in ("improvement", "harm"):
        raise ParameterError(f"side must be 'improvement' or 'harm', got {side!r}")
    grid = np.linspace(0.0, 1.0, grid_size)
    values = ccf_eval(ccf, grid)
    tol = 1e-12
    if side == "improvement":
        bad = grid[values < grid - tol]
    else:
        bad = grid[values > grid + tol]
    if bad.size:
        shown = ", ".join(f"{u:.4f}" for u in bad[:5])
        raise PreconditionError(
            f"CCF violates the {side} precondition at u = {shown}"
            + ("..." if bad.size > 5 else "")
        )

    T = int(np.ceil(1.0 / epsilon_hat)) + 1
    rng = make_rng(seed)
    failures: list[tuple[float, str]] = []
    for _ in range(trials):
        s = float(rng.uniform(0.0, 1.0))
        path = simulate_clp(ccf, s, T, epsilon_hat)
        cs = [st.collab_utility for st in path.steps]
        if side == "improvement":
            monotone = all(a <= b + tol for a, b in zip(cs, cs[1:]))
        else:
            monotone = all(a >= b - tol for a, b in zip(cs, cs[1:]))
        if not monotone:
            failures.append((s, "path not monotone"))
        elif path.stable_at is None:
            failures.append((s, f"no stable point within {T} epochs"))
    return PropositionReport(
        side=side, trials=trials, passed=not failures, failures=tuple(failures[:10])
    )


def random_side_ccf(side: str, seed: int, max_knots: int = 8) -> Ccf:
    """Draw a random CCF lying entirely on one side of the identity line.

    Improvement-side functions end at collaboration utility 1.0 and
    harm-side functions start at 0.0, so the clamped tails stay on the
    required side of the identity as well.
    """
    if side not in ("improvement", "harm"):
        raise ParameterError(f"side must be 'improvement' or 'harm', got {side!r}")
    rng = make_rng(seed)
    while True:
        xs = np.unique(np.round(rng.uniform(0.02, 0.98, size=int(rng.integers(2, max_knots + 1))), 6))
        if xs.size >= 2:
            break
    if side == "improvement":
        cs = xs + rng.uniform(0.0, 1.0, size=xs.size) * (1.0 - xs)
        cs[-1] = 1.0
    else:
        cs = xs - rng.uniform(0.0, 1.0, size=xs.size) * xs
        cs[0] = 0.0
    return Ccf(
        points=tuple(
            CcfPoint(model_utility=float(x), collab_utility=float(c)) for x, c in zip(xs, cs)
        )
    )


# ---------------------------------------------------------------------------
# the closed loop


@dataclass(frozen=True)
class LoopEpoch:
    epoch: int
    n_instances: int
    recommender_label: str
    mean_model_utility: float
    mean_collab_utility: float
    training_loss: float


@dataclass(frozen=True)
class LoopTrace:
    epochs: tuple[LoopEpoch, ...]
    train_config: TrainingConfig = field(default_factory=TrainingConfig, compare=False)


def run_performative_loop(
    rec0: Recommender,
    human: HumanModel,
    epochs: int,
    per_epoch: int,
    train_cfg: TrainingConfig | None = None,
    kind: UtilityKind = UtilityKind.ECONOMIC,
    seed: int = 0,
    item_count: int = 18,
    w_min: int = 5,
    w_max: int = 250,
) -> LoopTrace:
    """Run the real deploy -> label -> retrain loop.

    Each epoch draws fresh instances, produces recommendations with the
    current model, lets the human model label them, and trains the next
    epoch's imitation recommender on that epoch's (instance, label)
    pairs only. The recorded training loss is the final-epoch loss of
    the fit performed on that epoch's labels.
    """
    if epochs < 1 or per_epoch < 1:
        raise ParameterError("epochs and per_epoch must both be >= 1")
    cfg = train_cfg if train_cfg is not None else TrainingConfig()

    rec = rec0
    records: list[LoopEpoch] = []
    for t in range(1, epochs + 1):
        instances = [
            generate_instance(item_count, w_min, w_max, derive_seed(seed, t, i))
            for i in range(per_epoch)
        ]
        model_us = []
        collab_us = []
        pairs = []
        for i, inst in enumerate(instances):
            rec_sol = rec.recommend(inst, derive_seed(seed, t, i, 0))
            label = apply_human(human, inst, rec_sol, derive_seed(seed, t, i, 1))
            model_us.append(utility(kind, inst, rec_sol))
            collab_us.append(utility(kind, inst, label))
            pairs.append((inst, label))
        dataset = LabeledDataset(pairs=tuple(pairs), epoch_tag=t)
        next_rec = train_imitation(dataset, cfg, derive_seed(seed, t))
        records.append(
            LoopEpoch(
                epoch=t,
                n_instances=per_epoch,
                recommender_label=rec.label or rec.kind,
                mean_model_utility=float(np.mean(model_us)),
                mean_collab_utility=float(np.mean(collab_us)),
                training_loss=next_rec.training_losses[-1],
            )
        )
        rec = next_rec
    return LoopTrace(epochs=tuple(records), train_config=cfg)


# ---------------------------------------------------------------------------
# the empirical bundle and file formats


def empirical_ccf() -> Ccf:
    """The two measured anchor points of the economic-performance CCF.

    Only the weakest and the stable treatment arms are numerically
    published; intermediate arms are deliberately not fabricated.
    """
    return Ccf(
        points=(
            CcfPoint(model_utility=0.717, collab_utility=0.894, label="q1", provenance="paper"),
            CcfPoint(model_utility=0.920, collab_utility=0.926, label="q6", provenance="paper"),
        )
    )


# CCF bundle file: one comment header, then one knot per line:
#   model_utility collab_utility se label provenance
CCF_HEADER = "# knaplab-ccf 1: model_utility collab_utility se label provenance"


def save_ccf(ccf: Ccf, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CCF_HEADER + "\n")
        for p in ccf.points:
            fh.write(
                f"{p.model_utility!r} {p.collab_utility!r} {p.se!r} "
                f"{p.label or '-'} {p.provenance or '-'}\n"
            )


def load_ccf(path) -> Ccf:
    points = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 5:
                raise FormatError(f"expected 5 fields per CCF knot, got {len(parts)}")
            points.append(
                CcfPoint(
                    model_utility=float(parts[0]),
                    collab_utility=float(parts[1]),
                    se=float(parts[2]),
                    label="" if parts[3] == "-" else parts[3],
                    provenance="" if parts[4] == "-" else parts[4],
                )
            )
    return Ccf(points=tuple(points))


def write_path_csv(path_obj: LearningPath, fh) -> None:
    """CSV export: epoch, model_utility, collab_utility, stable flag."""
    writer = csv.writer(fh)
    writer.writerow(["epoch", "model_utility", "collab_utility", "stable"])
    for step in path_obj.steps:
        stable = path_obj.stable_at is not None and step.epoch >= path_obj.stable_at
        writer.writerow([step.epoch, repr(step.model_utility), repr(step.collab_utility), int(stable)])


def read_path_csv(fh, start_utility: float = 0.0, epsilon_hat: float = DEFAULT_EPSILON_HAT) -> LearningPath:
    reader = csv.reader(fh)
    header = next(reader)
    if header != ["epoch", "model_utility", "collab_utility", "stable"]:
        raise FormatError(f"unexpected path CSV header: {header}")
    steps = []
    stable_at = None
    for row in reader:
        epoch = int(row[0])
        steps.append(PathStep(epoch=epoch, model_utility=float(row[1]), collab_utility=float(row[2])))
        if int(row[3]) and stable_at is None:
            stable_at = epoch
    if not steps:
        raise FormatError("path CSV has no steps")
    start = start_utility or steps[0].model_utility
    return LearningPath(
        start_utility=start, epsilon_hat=epsilon_hat, steps=tuple(steps), stable_at=stable_at
    )


def write_trace_csv(trace: LoopTrace, fh) -> None:
    """CSV export of a closed-loop trace, one row per epoch."""
    writer = csv.writer(fh)
    writer.writerow(
        [
            "epoch",
            "n_instances",
            "recommender_label",
            "mean_model_utility",
            "mean_collab_utility",
            "training_loss",
        ]
    )
    for e in trace.epochs:
        writer.writerow(
            [
                e.epoch,
                e.n_instances,
                e.recommender_label,
                repr(e.mean_model_utility),
                repr(e.mean_collab_utility),
                repr(e.training_loss),
            ]
        )

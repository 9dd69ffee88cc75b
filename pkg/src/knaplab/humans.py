"""Synthetic human decision functions H(X, Y_M).

These models stand in for live participants when simulating the
collaboration dynamics. None of them claims cognitive realism; the
declared stand-in for "a human works on the problem" is budgeted local
search over single-add, single-drop, and 1-for-1 swap moves, scanning
candidates in a seed-randomized order and taking the first improvement.
The budget counts evaluated moves, so a larger budget with the same seed
replays the same trajectory for longer and can only help.

Kinds:

* ``independent``            - ignores the recommendation, searches from scratch
* ``copycat``                - returns the recommendation unchanged
* ``best_of_two``            - the higher-value of own search and recommendation
* ``anchored_search``        - local search started from the recommendation
* ``probabilistic_follower`` - follows with probability p(recommendation utility)
* ``empirical_tabular``      - reproduces logged utility deltas by steering
                               search toward recommendation utility + delta
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import FeasibilityError, FormatError, ParameterError
from .knapsack import KnapsackInstance, Solution, UtilityKind, optimal_value, utility
from .rng import derive_seed, make_rng

__all__ = [
    "HumanModel",
    "apply_human",
    "measure_delta",
    "save_human_model",
    "load_human_model",
]

HUMAN_KINDS = (
    "independent",
    "copycat",
    "best_of_two",
    "anchored_search",
    "probabilistic_follower",
    "empirical_tabular",
)

#: Follow-probability knots (recommendation utility, follow probability).
#: Rising in utility, mirroring the observed pattern that advice usage
#: grows with recommendation quality; the exact values are configuration.
DEFAULT_FOLLOW_CURVE = ((0.0, 0.10), (0.70, 0.45), (1.0, 0.85))


@dataclass(frozen=True)
class HumanModel:
    kind: str
    search_budget: int = 200
    follow_curve: tuple[tuple[float, float], ...] = DEFAULT_FOLLOW_CURVE
    delta_table: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in HUMAN_KINDS:
            raise ParameterError(f"unknown human model kind {self.kind!r}")
        if self.search_budget < 0:
            raise ParameterError("search budget must be non-negative")
        knots = self.follow_curve
        if len(knots) < 1:
            raise ParameterError("follow curve needs at least one knot")
        for u, p in knots:
            if not (0.0 <= u <= 1.0 and 0.0 <= p <= 1.0):
                raise ParameterError(f"follow-curve knot ({u}, {p}) outside the unit square")
        if any(a[0] >= b[0] for a, b in zip(knots, knots[1:])):
            raise ParameterError("follow-curve knots must be sorted by utility")

    def apply(self, instance: KnapsackInstance, recommendation: Solution, seed: int = 0) -> Solution:
        return apply_human(self, instance, recommendation, seed)


# ---------------------------------------------------------------------------
# budgeted local search


class _SearchState:
    __slots__ = ("instance", "bits", "weight", "value")

    def __init__(self, instance: KnapsackInstance, bits: Sequence[int]):
        self.instance = instance
        self.bits = list(bits)
        self.weight = sum(w for w, b in zip(instance.weights, bits) if b)
        self.value = sum(v for v, b in zip(instance.values, bits) if b)

    def moves(self) -> list[tuple[int, int]]:
        """All candidate moves as (drop_index, add_index); -1 means none."""
        inside = [i for i, b in enumerate(self.bits) if b]
        outside = [i for i, b in enumerate(self.bits) if not b]
        out: list[tuple[int, int]] = [(-1, j) for j in outside]
        out.extend((i, -1) for i in inside)
        out.extend((i, j) for i in inside for j in outside)
        return out

    def delta(self, move: tuple[int, int]) -> tuple[int, int]:
        drop, add = move
        w = self.instance.weights
        v = self.instance.values
        dw = (w[add] if add >= 0 else 0) - (w[drop] if drop >= 0 else 0)
        dv = (v[add] if add >= 0 else 0) - (v[drop] if drop >= 0 else 0)
        return dw, dv

    def apply(self, move: tuple[int, int]) -> None:
        drop, add = move
        dw, dv = self.delta(move)
        if drop >= 0:
            self.bits[drop] = 0
        if add >= 0:
            self.bits[add] = 1
        self.weight += dw
        self.value += dv

    def solution(self) -> Solution:
        return Solution.from_selection(self.instance, self.bits)


def _local_search(
    instance: KnapsackInstance,
    start_bits: Sequence[int],
    budget: int,
    rng: np.random.Generator,
    stop_at_value: float | None = None,
) -> Solution:
    """First-improvement hill climb over add/drop/swap moves.

    A move is accepted when it is feasible and strictly increases total
    value. Each pass scans candidates in a fresh seed-randomized order and
    restarts after the first accepted move; the climb ends at a local
    optimum, when the budget of evaluated moves runs out, or (with
    ``stop_at_value``) as soon as the total value reaches that bar.
    """
    state = _SearchState(instance, start_bits)
    remaining = budget
    while remaining > 0:
        if stop_at_value is not None and state.value >= stop_at_value:
            break
        moves = state.moves()
        order = rng.permutation(len(moves))
        improved = False
        for k in order:
            if remaining <= 0:
                return state.solution()
            remaining -= 1
            move = moves[k]
            dw, dv = state.delta(move)
            if state.weight + dw > instance.capacity:
                continue
            if dv > 0:
                state.apply(move)
                improved = True
                break
        if not improved:
            break
    return state.solution()


def _steer_to_value(
    instance: KnapsackInstance,
    start_bits: Sequence[int],
    target_value: float,
    budget: int,
    rng: np.random.Generator,
) -> Solution:
    """Drive the total value as close to ``target_value`` as single moves allow.

    Climb first with the ordinary improving search, stopping once the
    target is reached; a badly packed start can strand that climb on a
    plateau (single drops point away from the target), in which case the
    climb restarts from the empty selection. A final trimming phase then
    repeatedly applies the feasible move that lands nearest the target,
    which walks the overshoot back down to quantization error.
    """
    climbed = _local_search(instance, start_bits, budget, rng, stop_at_value=target_value)
    if climbed.total_value < target_value:
        # restart from the density-greedy pack, a much higher base camp
        from .recommenders import greedy_density

        rebuilt = _local_search(
            instance, greedy_density(instance).selection, budget, rng, stop_at_value=target_value
        )
        if abs(rebuilt.total_value - target_value) < abs(climbed.total_value - target_value):
            climbed = rebuilt
    if climbed.total_value < target_value:
        # target above every climbable pack: trim down from the exact optimum
        from .knapsack import solve_exact

        climbed = solve_exact(instance)

    state = _SearchState(instance, climbed.selection)
    remaining = budget
    while remaining > 0:
        gap = abs(state.value - target_value)
        best_move = None
        best_gap = gap - 1e-12
        moves = state.moves()
        for k in rng.permutation(len(moves)):
            if remaining <= 0:
                break
            remaining -= 1
            move = moves[k]
            dw, dv = state.delta(move)
            if state.weight + dw > instance.capacity:
                continue
            new_gap = abs(state.value + dv - target_value)
            if new_gap < best_gap:
                best_gap = new_gap
                best_move = move
        if best_move is None:
            break
        state.apply(best_move)
    return state.solution()


# ---------------------------------------------------------------------------
# model application


def _follow_probability(model: HumanModel, u_rec: float) -> float:
    xs = np.array([k[0] for k in model.follow_curve])
    ps = np.array([k[1] for k in model.follow_curve])
    return float(np.interp(u_rec, xs, ps))


def apply_human(
    model: HumanModel,
    instance: KnapsackInstance,
    recommendation: Solution,
    seed: int = 0,
) -> Solution:
    """Produce the human decision for one problem given a recommendation."""
    if not recommendation.feasible(instance):
        raise FeasibilityError("recommendation violates the instance capacity")
    rng = make_rng(seed)
    kind = model.kind

    if kind == "copycat":
        return recommendation

    if kind == "independent":
        return _local_search(instance, [0] * instance.item_count, model.search_budget, rng)

    if kind == "anchored_search":
        return _local_search(instance, recommendation.selection, model.search_budget, rng)

    if kind == "best_of_two":
        own = _local_search(instance, [0] * instance.item_count, model.search_budget, rng)
        return own if own.total_value >= recommendation.total_value else recommendation

    if kind == "probabilistic_follower":
        u_rec = utility(UtilityKind.ECONOMIC, instance, recommendation)
        if rng.random() < _follow_probability(model, u_rec):
            return recommendation
        return _local_search(instance, [0] * instance.item_count, model.search_budget, rng)

    # empirical_tabular: deltas are logged in economic-utility terms
    if not model.delta_table:
        raise ParameterError("empirical_tabular model needs a nonempty delta table")
    u_rec = utility(UtilityKind.ECONOMIC, instance, recommendation)
    delta = float(model.delta_table[int(rng.integers(len(model.delta_table)))])
    target_u = min(1.0, max(0.0, u_rec + delta))
    target_value = target_u * optimal_value(instance)
    return _steer_to_value(
        instance, recommendation.selection, target_value, model.search_budget, rng
    )


def measure_delta(
    model: HumanModel,
    recommender,
    instances: Sequence[KnapsackInstance],
    kind: UtilityKind = UtilityKind.ECONOMIC,
    seed: int = 0,
) -> tuple[float, float]:
    """Mean human-over-model utility improvement and its plain standard error."""
    if not instances:
        raise ParameterError("measure_delta needs a nonempty instance set")
    deltas = []
    for i, inst in enumerate(instances):
        rec_sol = recommender.recommend(inst, derive_seed(seed, i, 0))
        out = apply_human(model, inst, rec_sol, derive_seed(seed, i, 1))
        deltas.append(utility(kind, inst, out) - utility(kind, inst, rec_sol))
    arr = np.array(deltas)
    se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return float(arr.mean()), se


# ---------------------------------------------------------------------------
# config file format: one "key value" pair per line
#
#   kind best_of_two
#   search_budget 200
#   follow_curve 0.0:0.1,0.7:0.45,1.0:0.85
#   delta_table 0.175,0.12
#
# follow_curve and delta_table may be omitted to keep defaults.


def save_human_model(model: HumanModel, path) -> None:
    lines = [f"kind {model.kind}", f"search_budget {model.search_budget}"]
    if model.follow_curve != DEFAULT_FOLLOW_CURVE:
        lines.append("follow_curve " + ",".join(f"{u}:{p}" for u, p in model.follow_curve))
    if model.delta_table:
        lines.append("delta_table " + ",".join(repr(d) for d in model.delta_table))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_human_model(path) -> HumanModel:
    fields: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition(" ")
            fields[key] = value.strip()
    if "kind" not in fields:
        raise FormatError("human-model config must declare a kind")
    kwargs: dict = {"kind": fields["kind"]}
    if "search_budget" in fields:
        kwargs["search_budget"] = int(fields["search_budget"])
    if "follow_curve" in fields:
        knots = []
        for part in fields["follow_curve"].split(","):
            u, _, p = part.partition(":")
            knots.append((float(u), float(p)))
        kwargs["follow_curve"] = tuple(knots)
    if "delta_table" in fields:
        kwargs["delta_table"] = tuple(float(x) for x in fields["delta_table"].split(","))
    return HumanModel(**kwargs)

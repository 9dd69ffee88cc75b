"""0-1 knapsack instances, solvers, and utility functions.

An instance holds integer weights, values, and a capacity. Hard instances
are generated with strongly (but imperfectly) correlated weights and values:
the capacity W is drawn uniformly from [w_min, w_max], weights uniformly
from [1, W], and each value from [w_i - floor(W/10), w_i + floor(W/10)],
clipped below at 1.

Two utility functions score a feasible solution against the exact optimum:

* economic - total value divided by the optimal value, in [0, 1];
* optimality - 1.0 if the solution reaches the optimal value, else 0.0.

Instance files are line oriented; see :func:`format_instance_line`.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    DegenerateInputError,
    FeasibilityError,
    FormatError,
    ParameterError,
    SizeError,
)
from .rng import make_rng

__all__ = [
    "KnapsackInstance",
    "Solution",
    "UtilityKind",
    "generate_instance",
    "weight_value_correlation",
    "solve_exact",
    "solve_bruteforce",
    "optimal_value",
    "utility",
    "random_fill",
    "format_instance_line",
    "parse_instance_line",
    "save_instances",
    "load_instances",
]

#: Largest capacity the DP solver will allocate a table for.
DEFAULT_CAPACITY_CAP = 1_000_000

#: Largest item count the brute-force oracle will enumerate.
BRUTEFORCE_MAX_ITEMS = 20


@dataclass(frozen=True)
class KnapsackInstance:
    """One 0-1 knapsack problem: the X the human or model must solve."""

    weights: tuple[int, ...]
    values: tuple[int, ...]
    capacity: int
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.values):
            raise ParameterError(
                f"weights ({len(self.weights)}) and values ({len(self.values)}) differ in length"
            )
        if not self.weights:
            raise ParameterError("instance must have at least one item")
        if self.capacity < 1:
            raise ParameterError(f"capacity must be positive, got {self.capacity}")
        for i, (w, v) in enumerate(zip(self.weights, self.values)):
            if not (1 <= w <= self.capacity):
                raise ParameterError(f"weight {w} of item {i} outside [1, {self.capacity}]")
            if v < 1:
                raise ParameterError(f"value {v} of item {i} must be >= 1")

    @property
    def item_count(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class Solution:
    """An item selection with its derived totals (the label Y)."""

    selection: tuple[int, ...]
    total_weight: int
    total_value: int

    @classmethod
    def from_selection(cls, instance: KnapsackInstance, selection: Sequence[int]) -> "Solution":
        """Build a solution from 0/1 flags, computing the totals."""
        bits = tuple(int(bool(b)) for b in selection)
        if len(bits) != instance.item_count:
            raise ParameterError(
                f"selection length {len(bits)} != item count {instance.item_count}"
            )
        tw = sum(w for w, b in zip(instance.weights, bits) if b)
        tv = sum(v for v, b in zip(instance.values, bits) if b)
        return cls(selection=bits, total_weight=tw, total_value=tv)

    @classmethod
    def empty(cls, instance: KnapsackInstance) -> "Solution":
        return cls(selection=(0,) * instance.item_count, total_weight=0, total_value=0)

    def feasible(self, instance: KnapsackInstance) -> bool:
        return self.total_weight <= instance.capacity


class UtilityKind(str, enum.Enum):
    """The two solution-quality measures."""

    ECONOMIC = "economic"
    OPTIMALITY = "optimality"


def generate_instance(n: int, w_min: int, w_max: int, seed: int) -> KnapsackInstance:
    """Generate a hard instance with correlated weights and values.

    Deterministic given ``seed``. Raises ParameterError on invalid bounds.
    """
    if n < 1:
        raise ParameterError(f"item count must be >= 1, got {n}")
    if not (1 <= w_min <= w_max):
        raise ParameterError(f"capacity bounds must satisfy 1 <= w_min <= w_max, got [{w_min}, {w_max}]")
    rng = make_rng(seed)
    capacity = int(rng.integers(w_min, w_max, endpoint=True))
    weights = rng.integers(1, capacity, size=n, endpoint=True)
    spread = capacity // 10
    values = np.maximum(1, rng.integers(weights - spread, weights + spread, endpoint=True))
    return KnapsackInstance(
        weights=tuple(int(w) for w in weights),
        values=tuple(int(v) for v in values),
        capacity=capacity,
        seed=int(seed),
    )


def weight_value_correlation(instance: KnapsackInstance) -> float:
    """Pearson correlation between item weights and values."""
    if instance.item_count < 2:
        raise DegenerateInputError("correlation needs at least two items")
    w = np.asarray(instance.weights, dtype=float)
    v = np.asarray(instance.values, dtype=float)
    if w.std() == 0.0 or v.std() == 0.0:
        raise DegenerateInputError("correlation undefined for zero-variance weights or values")
    wd = w - w.mean()
    vd = v - v.mean()
    return float(np.dot(wd, vd) / np.sqrt(np.dot(wd, wd) * np.dot(vd, vd)))


def solve_exact(instance: KnapsackInstance, capacity_cap: int = DEFAULT_CAPACITY_CAP) -> Solution:
    """Dynamic-programming optimum over item subsets.

    Among equal-value optima the lexicographically smallest selection is
    returned (prefer leaving an item out when both choices are optimal),
    so results are canonical for testing.
    """
    if instance.capacity > capacity_cap:
        raise SizeError(f"capacity {instance.capacity} exceeds DP cap {capacity_cap}")
    n = instance.item_count
    cap = instance.capacity
    weights = instance.weights
    values = instance.values

    # best[i][c]: max value over items i..n-1 with remaining capacity c.
    best = np.zeros((n + 1, cap + 1), dtype=np.int64)
    for i in range(n - 1, -1, -1):
        w, v = weights[i], values[i]
        row = best[i + 1].copy()
        row[w:] = np.maximum(row[w:], best[i + 1][: cap + 1 - w] + v)
        best[i] = row

    bits = []
    c = cap
    for i in range(n):
        if best[i][c] == best[i + 1][c]:
            bits.append(0)
        else:
            bits.append(1)
            c -= weights[i]
    return Solution.from_selection(instance, bits)


def solve_bruteforce(instance: KnapsackInstance) -> Solution:
    """Exhaustive-enumeration optimum; the independent oracle for the DP.

    Limited to 20 items. Uses the same tie-break as :func:`solve_exact`.
    """
    n = instance.item_count
    if n > BRUTEFORCE_MAX_ITEMS:
        raise SizeError(f"brute force limited to {BRUTEFORCE_MAX_ITEMS} items, got {n}")

    # Subset index k encodes item i at bit (n-1-i), so numeric order on k
    # equals lexicographic order on selections and argmin over optimal k
    # picks the canonical optimum.
    total_w = np.zeros(1, dtype=np.int64)
    total_v = np.zeros(1, dtype=np.int64)
    for i in range(n - 1, -1, -1):
        total_w = np.concatenate([total_w, total_w + instance.weights[i]])
        total_v = np.concatenate([total_v, total_v + instance.values[i]])

    feasible = total_w <= instance.capacity
    values = np.where(feasible, total_v, -1)
    best_value = values.max()
    best_index = int(np.nonzero(values == best_value)[0][0])
    bits = [(best_index >> (n - 1 - i)) & 1 for i in range(n)]
    return Solution.from_selection(instance, bits)


@functools.lru_cache(maxsize=131072)
def optimal_value(instance: KnapsackInstance) -> int:
    """Optimal total value of ``instance`` (cached; instances are immutable)."""
    return solve_exact(instance).total_value


def utility(kind: UtilityKind, instance: KnapsackInstance, solution: Solution) -> float:
    """Score a feasible solution in [0, 1] under the chosen utility."""
    if not solution.feasible(instance):
        raise FeasibilityError(
            f"solution weight {solution.total_weight} exceeds capacity {instance.capacity}"
        )
    opt = optimal_value(instance)
    if UtilityKind(kind) is UtilityKind.ECONOMIC:
        return solution.total_value / opt
    return 1.0 if solution.total_value == opt else 0.0


def random_fill(instance: KnapsackInstance, seed: int) -> Solution:
    """Pack items in a uniformly shuffled order until one no longer fits.

    The scan stops at the first item that would overflow the capacity
    (it does not skip it and continue), which is what keeps the average
    economic utility of random solutions near 60% on hard instances.
    """
    rng = make_rng(seed)
    order = rng.permutation(instance.item_count)
    bits = [0] * instance.item_count
    remaining = instance.capacity
    for i in order:
        if instance.weights[i] > remaining:
            break
        bits[i] = 1
        remaining -= instance.weights[i]
    return Solution.from_selection(instance, bits)


# ---------------------------------------------------------------------------
# Instance file format
#
# One instance per line, five whitespace-separated fields:
#
#   n  capacity  w1,w2,...,wn  v1,v2,...,vn  seed
#
# All fields are decimal integers; the weight and value lists are
# comma-separated with no spaces. Round-trips are exact.
# ---------------------------------------------------------------------------


def format_instance_line(instance: KnapsackInstance) -> str:
    w = ",".join(str(x) for x in instance.weights)
    v = ",".join(str(x) for x in instance.values)
    return f"{instance.item_count} {instance.capacity} {w} {v} {instance.seed}"


def parse_instance_line(line: str) -> KnapsackInstance:
    parts = line.split()
    if len(parts) != 5:
        raise FormatError(f"expected 5 fields (n W weights values seed), got {len(parts)}")
    try:
        n = int(parts[0])
        capacity = int(parts[1])
        weights = tuple(int(x) for x in parts[2].split(","))
        values = tuple(int(x) for x in parts[3].split(","))
        seed = int(parts[4])
    except ValueError as exc:
        raise FormatError(f"malformed instance line: {exc}") from exc
    if len(weights) != n or len(values) != n:
        raise FormatError(f"declared n={n} but got {len(weights)} weights / {len(values)} values")
    return KnapsackInstance(weights=weights, values=values, capacity=capacity, seed=seed)


def save_instances(path, instances: Iterable[KnapsackInstance]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(format_instance_line(inst) + "\n")


def load_instances(path) -> list[KnapsackInstance]:
    with open(path, "r", encoding="utf-8") as fh:
        return [parse_instance_line(line) for line in fh if line.strip()]


def generate_instances(count: int, n: int, w_min: int, w_max: int, seed: int) -> Iterator[KnapsackInstance]:
    """Yield ``count`` instances with per-instance seeds derived from ``seed``."""
    from .rng import derive_seed

    for i in range(count):
        yield generate_instance(n, w_min, w_max, derive_seed(seed, i))

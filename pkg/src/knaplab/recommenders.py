"""Recommendation producers: the deployed models M_t.

Every recommender is a per-item scorer followed by the same post-processing:
sort items by score (descending, ties broken by lower index) and add each
item that still fits. Kinds:

* ``greedy_density`` - score is value/weight;
* ``noisy_greedy``   - density ranking perturbed with magnitude sigma
                       (jittered for small sigma, inverted for large),
                       the family used to hit controlled utility targets;
* ``imitation``      - small feed-forward scorer trained by SGD on
                       per-item binary cross-entropy against labels;
* ``constant``       - oracle that always returns the exact optimum.

The imitation scorer never sees ground-truth utility during training; it
only matches labels. Utility is computed exclusively by evaluation code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CalibrationError,
    DataError,
    FeasibilityError,
    FormatError,
    ParameterError,
    ShapeError,
)
from .knapsack import KnapsackInstance, Solution, UtilityKind, solve_exact, utility
from .rng import derive_seed, make_rng

__all__ = [
    "Recommender",
    "TrainingConfig",
    "LabeledDataset",
    "greedy_density",
    "score_sort_fill",
    "train_imitation",
    "recommend",
    "calibrate_to_target",
    "evaluate_recommender",
    "save_recommender",
    "load_recommender",
    "dumps_recommender",
    "loads_recommender",
]

#: Hidden layer widths of the imitation scorer; input is 2n+3, output n.
HIDDEN_LAYER_SIZES = (90, 550, 90, 84)

RECOMMENDER_KINDS = ("imitation", "greedy_density", "noisy_greedy", "constant")


@dataclass
class TrainingConfig:
    """Hyperparameters of the imitation fit.

    The loss is fixed: mean per-item binary cross-entropy between the
    label bits and the sigmoid outputs. Plain SGD with a constant
    learning rate keeps runs reproducible. The defaults below are
    declared here because no reference values exist for them; they are
    recorded in every experiment log.
    """

    epochs: int = 5
    learning_rate: float = 0.05
    batch_size: int = 32
    density_sort: bool = True
    normalize: bool = True


@dataclass(frozen=True)
class LabeledDataset:
    """(instance, label) pairs from one deployment epoch: the D_t sample."""

    pairs: tuple[tuple[KnapsackInstance, Solution], ...]
    epoch_tag: int = 0

    def __post_init__(self) -> None:
        for inst, sol in self.pairs:
            if len(sol.selection) != inst.item_count:
                raise DataError(
                    f"label length {len(sol.selection)} != item count {inst.item_count}"
                )
            if not sol.feasible(inst):
                raise DataError("dataset label violates its instance capacity")

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass
class Recommender:
    """A scorer plus post-processing flags; immutable after construction."""

    kind: str
    parameters: np.ndarray
    density_sort: bool = False
    normalize: bool = False
    label: str = ""
    n_items: int = 0
    training_losses: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        if self.kind not in RECOMMENDER_KINDS:
            raise ParameterError(f"unknown recommender kind {self.kind!r}")
        self.parameters = np.asarray(self.parameters, dtype=np.float64)

    def recommend(self, instance: KnapsackInstance, seed: int = 0) -> Solution:
        return recommend(self, instance, seed)


# ---------------------------------------------------------------------------
# scoring and post-processing


def score_sort_fill(instance: KnapsackInstance, scores: Sequence[float]) -> Solution:
    """Sort items by score descending (stable, so ties keep index order)
    and add every item that still fits."""
    order = np.argsort(-np.asarray(scores, dtype=float), kind="stable")
    bits = [0] * instance.item_count
    remaining = instance.capacity
    for i in order:
        if instance.weights[i] <= remaining:
            bits[i] = 1
            remaining -= instance.weights[i]
    return Solution.from_selection(instance, bits)


def _densities(instance: KnapsackInstance) -> np.ndarray:
    return np.asarray(instance.values, dtype=float) / np.asarray(instance.weights, dtype=float)


def greedy_density(instance: KnapsackInstance) -> Solution:
    """Fill by value/weight density, the classic knapsack heuristic."""
    return score_sort_fill(instance, _densities(instance))


def _perturbed_densities(instance: KnapsackInstance, sigma: float, noise: np.ndarray) -> np.ndarray:
    """Noisy-greedy scores: (1 - sigma^2) * standardized density + sigma * noise.

    Small sigma jitters the density ranking; large sigma actively inverts
    it. The inversion term is required for the family to span the low end
    of the treatment-utility range: any iid jitter alone degrades the
    ordering at worst to a uniformly random one, whose packed value on
    strongly correlated instances stays well above the weakest treatment
    target.
    """
    d = _densities(instance)
    sd = d.std()
    d_hat = (d - d.mean()) / (sd if sd > 0 else 1.0)
    return (1.0 - sigma * sigma) * d_hat + sigma * noise


def recommend(rec: Recommender, instance: KnapsackInstance, seed: int = 0) -> Solution:
    """Produce a feasible recommendation for ``instance``.

    Deterministic given (parameters, instance) for non-noisy kinds and
    given the seed as well for ``noisy_greedy``.
    """
    if rec.kind == "greedy_density":
        return greedy_density(instance)
    if rec.kind == "noisy_greedy":
        sigma = float(rec.parameters[0])
        noise = make_rng(seed).standard_normal(instance.item_count)
        return score_sort_fill(instance, _perturbed_densities(instance, sigma, noise))
    if rec.kind == "constant":
        return solve_exact(instance)
    # imitation
    if rec.n_items and rec.n_items != instance.item_count:
        raise ShapeError(
            f"recommender trained for {rec.n_items} items, instance has {instance.item_count}"
        )
    scores = _imitation_scores(rec, instance)
    return score_sort_fill(instance, scores)


# ---------------------------------------------------------------------------
# imitation scorer
#
# Architecture: five dense layers (2n+3 -> 90 -> 550 -> 90 -> 84 -> n),
# ReLU on the four hidden layers, sigmoid outputs read as per-item
# selection scores.


def _layer_sizes(n_items: int) -> list[int]:
    return [2 * n_items + 3, *HIDDEN_LAYER_SIZES, n_items]


def _param_count(n_items: int) -> int:
    sizes = _layer_sizes(n_items)
    return sum(sizes[i] * sizes[i + 1] + sizes[i + 1] for i in range(len(sizes) - 1))


def _unpack(params: np.ndarray, n_items: int) -> list[tuple[np.ndarray, np.ndarray]]:
    sizes = _layer_sizes(n_items)
    layers = []
    pos = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = params[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out)
        pos += fan_in * fan_out
        b = params[pos : pos + fan_out]
        pos += fan_out
        layers.append((w, b))
    return layers


def _init_params(n_items: int, rng: np.random.Generator) -> np.ndarray:
    sizes = _layer_sizes(n_items)
    chunks = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        chunks.append(rng.uniform(-limit, limit, size=fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return np.concatenate(chunks)


def _sort_permutation(instance: KnapsackInstance) -> np.ndarray:
    """Item order by density descending, ties by lower index."""
    return np.argsort(-_densities(instance), kind="stable")


def _feature_vector(instance: KnapsackInstance, normalize: bool, perm: np.ndarray) -> np.ndarray:
    """weights ++ values ++ capacity ++ sum(weights) ++ sum(values), 2n+3 long."""
    w = np.asarray(instance.weights, dtype=float)[perm]
    v = np.asarray(instance.values, dtype=float)[perm]
    cap = float(instance.capacity)
    if normalize:
        lo = min(w.min(), v.min())
        hi = max(w.max(), v.max())
        scale = hi - lo if hi > lo else 1.0
        w = (w - lo) / scale
        v = (v - lo) / scale
        cap = instance.capacity / float(max(instance.weights))
    feats = np.concatenate([w, v, [cap, w.sum(), v.sum()]])
    assert feats.shape[0] == 2 * instance.item_count + 3
    return feats


def _forward(layers, x: np.ndarray) -> np.ndarray:
    """Return output logits for a batch x of shape (batch, in_dim)."""
    h = x
    for w, b in layers[:-1]:
        h = np.maximum(h @ w + b, 0.0)
    w, b = layers[-1]
    return h @ w + b


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _bce_from_logits(logits: np.ndarray, y: np.ndarray) -> float:
    """Mean per-item binary cross-entropy, computed stably from logits."""
    return float(np.mean(np.maximum(logits, 0.0) - logits * y + np.log1p(np.exp(-np.abs(logits)))))


def _sgd_step(layers, x: np.ndarray, y: np.ndarray, lr: float) -> float:
    """One plain-SGD minibatch update in place; returns the batch loss."""
    acts = [x]
    h = x
    for w, b in layers[:-1]:
        h = np.maximum(h @ w + b, 0.0)
        acts.append(h)
    w_out, b_out = layers[-1]
    logits = acts[-1] @ w_out + b_out
    loss = _bce_from_logits(logits, y)

    batch = x.shape[0]
    delta = (_sigmoid(logits) - y) / (batch * y.shape[1])
    for li in range(len(layers) - 1, -1, -1):
        w, b = layers[li]
        a = acts[li]
        grad_w = a.T @ delta
        grad_b = delta.sum(axis=0)
        if li > 0:
            delta = (delta @ w.T) * (acts[li] > 0.0)
        w -= lr * grad_w
        b -= lr * grad_b
    return loss


def train_imitation(data: LabeledDataset, cfg: TrainingConfig, seed: int) -> Recommender:
    """Fit the imitation scorer on labeled pairs by minibatch SGD.

    Preprocessing (density sort, min-max normalization) follows the
    config flags and is applied identically at inference time. The
    returned recommender records its per-epoch training losses.
    """
    if len(data) == 0:
        raise DataError("cannot train on an empty dataset")
    n = data.pairs[0][0].item_count
    if any(inst.item_count != n for inst, _ in data.pairs):
        raise DataError("training instances must share one item count")

    xs = np.empty((len(data), 2 * n + 3))
    ys = np.empty((len(data), n))
    identity = np.arange(n)
    for row, (inst, sol) in enumerate(data.pairs):
        perm = _sort_permutation(inst) if cfg.density_sort else identity
        xs[row] = _feature_vector(inst, cfg.normalize, perm)
        ys[row] = np.asarray(sol.selection, dtype=float)[perm]

    rng = make_rng(seed)
    params = _init_params(n, rng)
    layers = _unpack(params, n)

    losses = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(data))
        total, count = 0.0, 0
        for start in range(0, len(data), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            total += _sgd_step(layers, xs[batch], ys[batch], cfg.learning_rate) * len(batch)
            count += len(batch)
        losses.append(total / count)

    return Recommender(
        kind="imitation",
        parameters=params,
        density_sort=cfg.density_sort,
        normalize=cfg.normalize,
        label="imitation",
        n_items=n,
        training_losses=tuple(losses),
    )


def _imitation_scores(rec: Recommender, instance: KnapsackInstance) -> np.ndarray:
    n = instance.item_count
    if rec.parameters.shape[0] != _param_count(n):
        raise ShapeError(
            f"parameter vector has {rec.parameters.shape[0]} entries, "
            f"expected {_param_count(n)} for {n} items"
        )
    perm = _sort_permutation(instance) if rec.density_sort else np.arange(n)
    feats = _feature_vector(instance, rec.normalize, perm)
    logits = _forward(_unpack(rec.parameters, n), feats[None, :])[0]
    scores = np.empty(n)
    scores[perm] = _sigmoid(logits)
    return scores


# ---------------------------------------------------------------------------
# evaluation and calibration


def evaluate_recommender(
    rec,
    instances: Sequence[KnapsackInstance],
    kind: UtilityKind = UtilityKind.ECONOMIC,
    seed: int = 0,
) -> tuple[float, float]:
    """Sample mean and standard deviation of utility over an instance set.

    ``rec`` may be any object with a ``recommend(instance, seed)`` method;
    per-instance seeds are derived from ``seed``.
    """
    if not instances:
        raise ParameterError("cannot evaluate on an empty instance set")
    us = np.array(
        [
            utility(kind, inst, rec.recommend(inst, derive_seed(seed, i)))
            for i, inst in enumerate(instances)
        ]
    )
    sd = float(us.std(ddof=1)) if us.size > 1 else 0.0
    return float(us.mean()), sd


def calibrate_to_target(
    target_mean_utility: float,
    eval_set: Sequence[KnapsackInstance],
    seed: int,
    tolerance: float = 0.01,
    max_steps: int = 80,
    label: str = "",
) -> Recommender:
    """Find a noisy-greedy recommender whose mean economic utility on
    ``eval_set`` is within ``tolerance`` of the target, by bisection on
    the noise magnitude sigma.

    Mean utility is non-increasing in sigma (more noise, worse fills),
    so bisection between sigma=0 (plain greedy) and a doubled-out upper
    bound converges; an unreachable target raises CalibrationError.
    """
    if not (0.5 < target_mean_utility <= 1.0):
        raise ParameterError(f"target must lie in (0.5, 1.0], got {target_mean_utility}")
    if not eval_set:
        raise ParameterError("calibration needs a nonempty eval set")

    def mean_at(sigma: float) -> float:
        rec = Recommender(kind="noisy_greedy", parameters=np.array([sigma]), label=label)
        mean, _ = evaluate_recommender(rec, eval_set, UtilityKind.ECONOMIC, seed=seed)
        return mean

    def done(sigma: float) -> Recommender:
        return Recommender(
            kind="noisy_greedy",
            parameters=np.array([sigma]),
            label=label or f"q@{target_mean_utility:.3f}",
        )

    base = mean_at(0.0)
    if abs(base - target_mean_utility) <= tolerance:
        return done(0.0)
    if base < target_mean_utility:
        raise CalibrationError(
            f"target {target_mean_utility:.3f} above the noise-free mean {base:.3f}; "
            "adding score noise cannot raise utility"
        )

    lo, hi = 0.0, 1.0
    steps = 0
    while mean_at(hi) > target_mean_utility:
        lo, hi = hi, hi * 2.0
        steps += 1
        if steps >= max_steps:
            raise CalibrationError(f"no sigma up to {hi} reaches target {target_mean_utility}")

    while steps < max_steps:
        mid = (lo + hi) / 2.0
        mean = mean_at(mid)
        if abs(mean - target_mean_utility) <= tolerance:
            return done(mid)
        if mean > target_mean_utility:
            lo = mid
        else:
            hi = mid
        steps += 1
    raise CalibrationError(
        f"bisection did not reach target {target_mean_utility} within {max_steps} steps"
    )


# ---------------------------------------------------------------------------
# serialization
#
# Versioned text dump: a header line, key/value lines, then one float per
# line in C99 hex notation so round-trips are bit-exact.
#
#   knaplab-recommender 1
#   kind <kind>
#   label <label>
#   n_items <int>
#   density_sort <0|1>
#   normalize <0|1>
#   params <count>
#   <float.hex() per line>


def dumps_recommender(rec: Recommender) -> str:
    lines = [
        "knaplab-recommender 1",
        f"kind {rec.kind}",
        f"label {rec.label}",
        f"n_items {rec.n_items}",
        f"density_sort {int(rec.density_sort)}",
        f"normalize {int(rec.normalize)}",
        f"params {rec.parameters.size}",
    ]
    lines.extend(float(x).hex() for x in rec.parameters)
    return "\n".join(lines) + "\n"


def loads_recommender(text: str) -> Recommender:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "knaplab-recommender 1":
        raise FormatError("not a version-1 recommender dump")

    fields: dict[str, str] = {}
    for line in lines[1:7]:
        key, _, value = line.partition(" ")
        fields[key] = value
    try:
        count = int(fields["params"])
        params = np.array([float.fromhex(line.strip()) for line in lines[7 : 7 + count]])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"malformed recommender dump: {exc}") from exc
    if params.size != count:
        raise FormatError(f"declared {count} parameters but found {params.size}")
    return Recommender(
        kind=fields.get("kind", ""),
        parameters=params,
        density_sort=fields.get("density_sort") == "1",
        normalize=fields.get("normalize") == "1",
        label=fields.get("label", ""),
        n_items=int(fields.get("n_items", "0")),
    )


def save_recommender(rec: Recommender, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_recommender(rec))


def load_recommender(path) -> Recommender:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_recommender(fh.read())

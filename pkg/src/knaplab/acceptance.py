"""The laboratory's acceptance suite.

Each criterion is a self-contained check with its stated tolerance pinned
in code; ``run_acceptance()`` executes all of them and prints one
PASS/FAIL line per criterion. ``knaplab verify`` wraps this and exits
nonzero on any failure, and tests/test_acceptance.py runs the same checks
under pytest.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .analysis import TrialObservation, estimate_ccf
from .dynamics import (
    check_proposition,
    empirical_ccf,
    random_side_ccf,
    run_performative_loop,
    simulate_clp,
)
from .humans import HumanModel, apply_human, measure_delta
from .knapsack import (
    Solution,
    UtilityKind,
    generate_instance,
    random_fill,
    solve_bruteforce,
    solve_exact,
    utility,
    weight_value_correlation,
)
from .recommenders import Recommender, TrainingConfig, calibrate_to_target, evaluate_recommender
from .rng import derive_seed
from .study.model import TreatmentConfig, compute_payment

__all__ = ["CriterionResult", "ALL_CRITERIA", "run_acceptance"]

TABLE_TARGETS = (0.717, 0.800, 0.844, 0.884, 0.899, 0.920)


@dataclass(frozen=True)
class CriterionResult:
    name: str
    passed: bool
    detail: str


def _instances(count, seed, n=18, w_min=5, w_max=250):
    return [generate_instance(n, w_min, w_max, derive_seed(seed, i)) for i in range(count)]


def check_solver_correctness() -> CriterionResult:
    """solve_exact matches the brute-force oracle on 500 instances in < 10 s."""
    start = time.perf_counter()
    mismatches = 0
    for i in range(500):
        inst = generate_instance(18, 5, 250, derive_seed(11_000, i))
        if solve_exact(inst).total_value != solve_bruteforce(inst).total_value:
            mismatches += 1
    elapsed = time.perf_counter() - start
    passed = mismatches == 0 and elapsed < 10.0
    return CriterionResult(
        "solver correctness",
        passed,
        f"{mismatches} value mismatches over 500 instances in {elapsed:.2f}s (limit 10s)",
    )


def check_generator_fidelity() -> CriterionResult:
    """10,000 instances satisfy every invariant; mean r in [0.96, 1.00]; < 5 s."""
    start = time.perf_counter()
    violations = 0
    rs = np.empty(10_000)
    for i in range(10_000):
        inst = generate_instance(18, 5, 250, derive_seed(12_000, i))
        ok = (
            inst.item_count == 18
            and 5 <= inst.capacity <= 250
            and all(1 <= w <= inst.capacity for w in inst.weights)
            and all(v >= 1 for v in inst.values)
        )
        violations += 0 if ok else 1
        rs[i] = weight_value_correlation(inst)
    elapsed = time.perf_counter() - start
    mean_r = float(rs.mean())
    passed = violations == 0 and 0.96 <= mean_r <= 1.00 and elapsed < 5.0
    return CriterionResult(
        "generator fidelity",
        passed,
        f"{violations} invariant violations, mean r = {mean_r:.4f} "
        f"(band [0.96, 1.00]), {elapsed:.2f}s (limit 5s)",
    )


def check_random_baseline() -> CriterionResult:
    """random_fill averages 55-65% economic utility over 10,000 instances."""
    us = np.empty(10_000)
    for i in range(10_000):
        inst = generate_instance(18, 5, 250, derive_seed(13_000, i))
        us[i] = utility(UtilityKind.ECONOMIC, inst, random_fill(inst, derive_seed(13_001, i)))
    mean = float(us.mean())
    return CriterionResult(
        "random baseline",
        0.55 <= mean <= 0.65,
        f"mean economic utility {mean:.4f} (band [0.55, 0.65])",
    )


def check_calibration() -> CriterionResult:
    """Each treatment target is hit within 0.02 on 2,000 held-out instances."""
    eval_set = _instances(2_000, seed=14_000)
    held_out = _instances(2_000, seed=14_500)
    misses = []
    for target in TABLE_TARGETS:
        rec = calibrate_to_target(target, eval_set, seed=14_900)
        mean, _ = evaluate_recommender(rec, held_out, UtilityKind.ECONOMIC, seed=14_901)
        if abs(mean - target) > 0.02:
            misses.append(f"{target}:{mean:.4f}")
    return CriterionResult(
        "calibration",
        not misses,
        "all six targets within 0.02 on held-out instances"
        if not misses
        else "missed " + ", ".join(misses),
    )


def check_equilibrium() -> CriterionResult:
    """The bundled empirical CCF converges to 91-94% within 10 epochs."""
    ccf = empirical_ccf()
    first_delta = ccf.points[0].delta
    path = simulate_clp(ccf, s=0.717, T=10, epsilon_hat=0.01)
    final = path.final_utility
    passed = (
        path.stable_at is not None
        and path.stable_at <= 10
        and 0.91 <= final <= 0.94
        and abs(first_delta - 0.177) <= 0.005
    )
    return CriterionResult(
        "equilibrium",
        passed,
        f"stable at epoch {path.stable_at}, utility {final:.4f} (band [0.91, 0.94]), "
        f"first-knot delta {first_delta:.3f} (0.177 +/- 0.005)",
    )


def check_propositions() -> CriterionResult:
    """1,000 one-sided CCFs per side: monotone paths, stabilized in time."""
    failures = 0
    for side, base in (("improvement", 15_000), ("harm", 16_000)):
        for k in range(1_000):
            ccf = random_side_ccf(side, derive_seed(base, k))
            report = check_proposition(ccf, side, trials=3, seed=derive_seed(base, k, 1))
            if not report.passed:
                failures += 1
    return CriterionResult(
        "proposition suites",
        failures == 0,
        f"{failures} failing characteristic functions out of 2,000 (1,000 per side)",
    )


def check_best_of_two_dominance() -> CriterionResult:
    """10,000 triples: best-of-two never scores below either component."""
    human = HumanModel(kind="best_of_two")
    independent = HumanModel(kind="independent")
    recommenders = [
        Recommender(kind="greedy_density", parameters=np.array([])),
        Recommender(kind="noisy_greedy", parameters=np.array([0.5])),
        Recommender(kind="noisy_greedy", parameters=np.array([1.5])),
        Recommender(kind="constant", parameters=np.array([])),
    ]
    violations = 0
    for i in range(10_000):
        inst = generate_instance(18, 5, 250, derive_seed(17_000, i))
        rec = recommenders[i % len(recommenders)]
        rec_sol = rec.recommend(inst, derive_seed(17_001, i))
        seed = derive_seed(17_002, i)
        own = apply_human(independent, inst, rec_sol, seed)
        best = apply_human(human, inst, rec_sol, seed)
        u_best = utility(UtilityKind.ECONOMIC, inst, best)
        u_max = max(
            utility(UtilityKind.ECONOMIC, inst, own),
            utility(UtilityKind.ECONOMIC, inst, rec_sol),
        )
        if u_best < u_max:
            violations += 1
    return CriterionResult(
        "best-of-two dominance",
        violations == 0,
        f"{violations} violations over 10,000 (instance, recommender, seed) triples",
    )


def check_payments() -> CriterionResult:
    """Golden payment cases are exact."""
    cases = (
        (85.0, TreatmentConfig(bonus="b2"), 230),
        (70.0, TreatmentConfig(bonus="b20"), 200),
        (69.9, TreatmentConfig(bonus="b10"), 0),
    )
    wrong = [
        f"({percent}, {treatment.bonus}) -> {compute_payment(percent, treatment)} != {expected}"
        for percent, treatment, expected in cases
        if compute_payment(percent, treatment) != expected
    ]
    return CriterionResult(
        "payments", not wrong, "golden cases exact" if not wrong else "; ".join(wrong)
    )


def check_closed_loop() -> CriterionResult:
    """Three retraining epochs with best-of-two humans improve monotonically
    (within a 0.02 sampling band) and end with lower training loss."""
    rec0 = Recommender(kind="noisy_greedy", parameters=np.array([1.5]), label="weak-start")
    trace = run_performative_loop(
        rec0,
        HumanModel(kind="best_of_two"),
        epochs=3,
        per_epoch=500,
        train_cfg=TrainingConfig(),
        seed=18_000,
    )
    collab = [e.mean_collab_utility for e in trace.epochs]
    losses = [e.training_loss for e in trace.epochs]
    monotone = all(b >= a - 0.02 for a, b in zip(collab, collab[1:]))
    loss_drop = losses[-1] < losses[0]
    return CriterionResult(
        "closed loop",
        monotone and loss_drop,
        f"collab means {[round(c, 4) for c in collab]}, "
        f"training losses {[round(l, 4) for l in losses]}",
    )


def check_ccf_self_consistency() -> CriterionResult:
    """A synthetic log from a known human model yields CCF deltas within
    two clustered standard errors of that model's directly measured deltas."""
    human = HumanModel(kind="best_of_two")
    arms = (("q1", 1.5), ("q5", 0.6))
    trials = []
    for arm, sigma in arms:
        rec = Recommender(kind="noisy_greedy", parameters=np.array([sigma]), label=arm)
        for s in range(40):
            sid = f"{arm}-s{s:03d}"
            for p in range(10):
                inst = generate_instance(18, 5, 250, derive_seed(19_000, s, p))
                rec_sol = rec.recommend(inst, derive_seed(19_001, s, p))
                sub = apply_human(human, inst, rec_sol, derive_seed(19_002, s, p))
                trials.append(
                    TrialObservation(
                        session_id=sid,
                        arm=arm,
                        bonus="b10",
                        instance=inst,
                        submitted=sub,
                        recommendation=rec_sol,
                    )
                )
    points = {p.label: p for p in estimate_ccf(trials)}
    drifts = []
    for arm, sigma in arms:
        rec = Recommender(kind="noisy_greedy", parameters=np.array([sigma]), label=arm)
        instances = _instances(400, seed=19_500)
        ref_mean, ref_se = measure_delta(human, rec, instances, seed=19_501)
        point = points[arm]
        width = 2.0 * (point.se + ref_se)
        if abs(point.delta - ref_mean) > width:
            drifts.append(f"{arm}: |{point.delta:.4f} - {ref_mean:.4f}| > {width:.4f}")
    return CriterionResult(
        "ccf self-consistency",
        not drifts,
        "deltas recovered within 2 clustered SEs on both arms"
        if not drifts
        else "; ".join(drifts),
    )


ALL_CRITERIA: tuple[tuple[str, Callable[[], CriterionResult]], ...] = (
    ("solver correctness", check_solver_correctness),
    ("generator fidelity", check_generator_fidelity),
    ("random baseline", check_random_baseline),
    ("calibration", check_calibration),
    ("equilibrium", check_equilibrium),
    ("proposition suites", check_propositions),
    ("best-of-two dominance", check_best_of_two_dominance),
    ("payments", check_payments),
    ("closed loop", check_closed_loop),
    ("ccf self-consistency", check_ccf_self_consistency),
)


def run_acceptance(verbose: bool = True) -> list[CriterionResult]:
    results = []
    for name, check in ALL_CRITERIA:
        result = check()
        results.append(result)
        if verbose:
            status = "PASS" if result.passed else "FAIL"
            print(f"{status}  {result.name}: {result.detail}")
    if verbose:
        failed = sum(1 for r in results if not r.passed)
        print(f"{len(results) - failed}/{len(results)} acceptance criteria passed")
    return results

import io

import numpy as np
import pytest

from knaplab.dynamics import (
    Ccf,
    CcfPoint,
    LearnerMap,
    PERFECT_LEARNER,
    ccf_eval,
    check_proposition,
    empirical_ccf,
    find_fixed_points,
    load_ccf,
    random_side_ccf,
    read_path_csv,
    run_performative_loop,
    save_ccf,
    simulate_clp,
    write_path_csv,
    write_trace_csv,
)
from knaplab.errors import ParameterError, PreconditionError
from knaplab.humans import HumanModel
from knaplab.recommenders import Recommender, TrainingConfig
from knaplab.rng import derive_seed

IDENTITY = Ccf(points=(CcfPoint(0.0, 0.0), CcfPoint(1.0, 1.0)))


def staircase_ccf():
    # f(u) = min(1, u + 0.05)
    return Ccf(points=(CcfPoint(0.0, 0.05), CcfPoint(0.95, 1.0), CcfPoint(1.0, 1.0)))


# ---------------------------------------------------------------------------
# ccf construction and evaluation


def test_ccf_eval_at_knots_and_midpoint():
    ccf = empirical_ccf()
    assert ccf_eval(ccf, 0.717) == pytest.approx(0.894)
    assert ccf_eval(ccf, 0.920) == pytest.approx(0.926)
    assert ccf_eval(ccf, (0.717 + 0.920) / 2) == pytest.approx(0.910)


def test_ccf_eval_clamps_outside_range():
    ccf = empirical_ccf()
    assert ccf_eval(ccf, 0.0) == pytest.approx(0.894)
    assert ccf_eval(ccf, 1.0) == pytest.approx(0.926)


def test_ccf_requires_two_increasing_points():
    with pytest.raises(ParameterError):
        Ccf(points=(CcfPoint(0.5, 0.5),))
    with pytest.raises(ParameterError):
        Ccf(points=(CcfPoint(0.5, 0.5), CcfPoint(0.5, 0.6)))


def test_ccf_point_delta_consistency():
    p = CcfPoint(0.7, 0.9)
    assert p.delta == pytest.approx(0.2)
    with pytest.raises(ParameterError):
        CcfPoint(0.7, 0.9, delta=0.1)


def test_empirical_delta_at_first_knot():
    ccf = empirical_ccf()
    assert ccf.points[0].delta == pytest.approx(0.177, abs=0.005)


# ---------------------------------------------------------------------------
# learning paths


def test_identity_ccf_stable_immediately():
    path = simulate_clp(IDENTITY, s=0.4, T=5, epsilon_hat=0.01)
    assert path.stable_at == 1
    assert path.final_utility == pytest.approx(0.4)
    assert len(path.steps) == 5


def test_empirical_path_converges_near_published_level():
    path = simulate_clp(empirical_ccf(), s=0.717, T=10, epsilon_hat=0.01)
    assert path.stable_at is not None and path.stable_at <= 10
    assert 0.91 <= path.final_utility <= 0.94


def test_staircase_path_strictly_increases():
    path = simulate_clp(staircase_ccf(), s=0.5, T=15, epsilon_hat=0.01)
    cs = [st.collab_utility for st in path.steps]
    pre_stable = cs[: path.stable_at - 1]
    assert all(a < b for a, b in zip(pre_stable, pre_stable[1:]))
    assert path.final_utility >= 0.99


def test_perfect_learner_moves_horizontally():
    path = simulate_clp(empirical_ccf(), s=0.3, T=8, epsilon_hat=1e-6)
    for prev, cur in zip(path.steps, path.steps[1:]):
        if path.stable_at is not None and cur.epoch > path.stable_at:
            break
        assert cur.model_utility == prev.collab_utility


def test_path_frozen_after_stability():
    path = simulate_clp(empirical_ccf(), s=0.717, T=10, epsilon_hat=0.01)
    t0 = path.stable_at
    tail = [s for s in path.steps if s.epoch >= t0]
    assert len({(s.model_utility, s.collab_utility) for s in tail}) == 1
    assert all(abs(s.collab_utility - s.model_utility) <= 0.01 for s in tail)


def test_epochs_are_contiguous():
    path = simulate_clp(empirical_ccf(), s=0.2, T=7)
    assert [s.epoch for s in path.steps] == list(range(1, 8))


def test_learner_map_affine_clamps():
    tilt = LearnerMap(kind="affine_tilt", slope=1.2, intercept=0.0)
    assert tilt(0.5) == pytest.approx(0.6)
    assert tilt(0.9) == 1.0
    assert LearnerMap(kind="affine_tilt", slope=1.0, intercept=-0.3)(0.1) == 0.0
    with pytest.raises(ParameterError):
        LearnerMap(kind="perfect", slope=1.1)


def test_affine_tilt_converges_off_the_identity_line():
    # an imperfect learner loses a fixed share of the collaboration gain
    # each epoch; its model-utility sequence converges, but the human-over-
    # model gap stays above epsilon_hat, so no stable point is declared
    down = LearnerMap(kind="affine_tilt", slope=0.9, intercept=0.0)
    path = simulate_clp(empirical_ccf(), s=0.717, T=30, epsilon_hat=0.01, learner=down)
    assert path.stable_at is None
    us = [s.model_utility for s in path.steps]
    assert abs(us[-1] - us[-2]) < 1e-6
    assert us[-1] < 0.894  # drags below the perfect-learner trajectory


def test_simulate_clp_rejects_bad_args():
    with pytest.raises(ParameterError):
        simulate_clp(IDENTITY, s=1.5, T=5)
    with pytest.raises(ParameterError):
        simulate_clp(IDENTITY, s=0.5, T=0)
    with pytest.raises(ParameterError):
        simulate_clp(IDENTITY, s=0.5, T=5, epsilon_hat=0.0)


# ---------------------------------------------------------------------------
# fixed points


def test_identity_fixed_points_are_neutral():
    points = find_fixed_points(IDENTITY, epsilon_hat=0.01)
    assert points
    assert all(stability == "neutral" for _, stability in points)


def test_empirical_single_attracting_crossing():
    points = find_fixed_points(empirical_ccf(), epsilon_hat=0.01)
    assert len(points) == 1
    u, stability = points[0]
    assert 0.92 <= u <= 0.93
    assert stability == "attracting"


def test_strictly_above_identity_fixes_at_one():
    ccf = Ccf(points=(CcfPoint(0.0, 0.3), CcfPoint(1.0, 1.0)))
    points = find_fixed_points(ccf, epsilon_hat=1e-6)
    assert len(points) == 1
    assert points[0][0] == pytest.approx(1.0)


def test_fixed_points_lie_on_identity_line():
    ccfs = [
        IDENTITY,
        empirical_ccf(),
        staircase_ccf(),
        Ccf(points=(CcfPoint(0.1, 0.05), CcfPoint(0.5, 0.8), CcfPoint(0.9, 0.7))),
    ]
    for k in range(30):
        ccfs.append(random_side_ccf("improvement", derive_seed(4000, k)))
        ccfs.append(random_side_ccf("harm", derive_seed(4001, k)))
    for ccf in ccfs:
        for u, _ in find_fixed_points(ccf, epsilon_hat=0.01):
            assert abs(ccf_eval(ccf, u) - u) <= 0.01


# ---------------------------------------------------------------------------
# proposition suites (small here; the full 1,000-draw suites run in acceptance)


def test_improvement_side_paths_non_decreasing():
    for k in range(60):
        ccf = random_side_ccf("improvement", derive_seed(3000, k))
        report = check_proposition(ccf, "improvement", trials=5, seed=derive_seed(3001, k))
        assert report.passed, report.failures


def test_harm_side_paths_non_increasing():
    for k in range(60):
        ccf = random_side_ccf("harm", derive_seed(3002, k))
        report = check_proposition(ccf, "harm", trials=5, seed=derive_seed(3003, k))
        assert report.passed, report.failures


def test_crossing_ccf_rejected():
    crossing = Ccf(points=(CcfPoint(0.0, 0.2), CcfPoint(1.0, 0.8)))
    with pytest.raises(PreconditionError):
        check_proposition(crossing, "improvement", trials=3, seed=0)
    with pytest.raises(PreconditionError):
        check_proposition(crossing, "harm", trials=3, seed=0)


# ---------------------------------------------------------------------------
# the closed loop


def test_loop_with_copycat_humans():
    rec0 = Recommender(kind="greedy_density", parameters=np.array([]), label="greedy")
    cfg = TrainingConfig(epochs=3)
    trace = run_performative_loop(
        rec0, HumanModel(kind="copycat"), epochs=3, per_epoch=150, train_cfg=cfg, seed=90
    )
    assert len(trace.epochs) == 3
    for e in trace.epochs:
        assert e.mean_collab_utility == pytest.approx(e.mean_model_utility)
    # copycat labels form a perfectly trainable pattern; residual loss at the
    # end of the loop must not exceed the first fit's
    assert trace.epochs[-1].training_loss <= trace.epochs[0].training_loss + 0.02


def test_loop_with_best_of_two_humans():
    rec0 = Recommender(kind="noisy_greedy", parameters=np.array([1.5]), label="weak")
    cfg = TrainingConfig(epochs=3)
    trace = run_performative_loop(
        rec0, HumanModel(kind="best_of_two"), epochs=3, per_epoch=120, train_cfg=cfg, seed=91
    )
    collab = [e.mean_collab_utility for e in trace.epochs]
    for e in trace.epochs:
        assert e.mean_collab_utility >= e.mean_model_utility
    assert all(b >= a - 0.02 for a, b in zip(collab, collab[1:]))
    assert [e.epoch for e in trace.epochs] == [1, 2, 3]


def test_loop_rejects_bad_args():
    rec0 = Recommender(kind="greedy_density", parameters=np.array([]))
    with pytest.raises(ParameterError):
        run_performative_loop(rec0, HumanModel(kind="copycat"), epochs=0, per_epoch=5)


# ---------------------------------------------------------------------------
# file formats


def test_ccf_file_round_trip(tmp_path):
    ccf = empirical_ccf()
    path = tmp_path / "ccf.txt"
    save_ccf(ccf, path)
    again = load_ccf(path)
    assert again == ccf


def test_path_csv_round_trip():
    path = simulate_clp(empirical_ccf(), s=0.717, T=10, epsilon_hat=0.01)
    buf = io.StringIO()
    write_path_csv(path, buf)
    buf.seek(0)
    again = read_path_csv(buf, start_utility=path.start_utility, epsilon_hat=path.epsilon_hat)
    assert again == path


def test_trace_csv_has_all_epochs():
    rec0 = Recommender(kind="greedy_density", parameters=np.array([]))
    trace = run_performative_loop(
        rec0,
        HumanModel(kind="copycat"),
        epochs=2,
        per_epoch=30,
        train_cfg=TrainingConfig(epochs=1),
        seed=92,
    )
    buf = io.StringIO()
    write_trace_csv(trace, buf)
    lines = buf.getvalue().strip().splitlines()
    assert len(lines) == 3  # header + 2 epochs

import numpy as np
import pytest

from knaplab.analysis import estimate_ccf
from knaplab.errors import (
    ConflictError,
    EmptyDatasetError,
    FeasibilityError,
    ParameterError,
    PhaseError,
    UnknownSessionError,
)
from knaplab.knapsack import Solution, UtilityKind, utility
from knaplab.recommenders import Recommender, train_imitation, TrainingConfig, evaluate_recommender
from knaplab.study import (
    EventLog,
    ServiceConfig,
    StudyService,
    TreatmentConfig,
    compute_payment,
)


class FakeClock:
    def __init__(self, start=1_000_000):
        self.now = start

    def __call__(self):
        return self.now

    def advance(self, ms):
        self.now += ms


def greedy_arms():
    greedy = Recommender(kind="greedy_density", parameters=np.array([]))
    return {arm: greedy for arm in ("q1", "q2", "q3", "q4", "q5", "q6")}


def make_service(tmp_path=None, clock=None, **config_kwargs):
    config = ServiceConfig(arm_recommenders=greedy_arms(), **config_kwargs)
    log = EventLog(tmp_path / "events.jsonl" if tmp_path else None)
    return StudyService(config, log=log, clock=clock or FakeClock())


def drive_full_session(service, clock, treatment=None, seed=1, think_ms=5_000):
    """Create and play a session to completion, submitting the served
    recommendation when present and the empty selection otherwise."""
    session = service.create_session(
        assignment_mode="forced" if treatment else "random",
        seed=seed,
        treatment=treatment,
    )
    for _ in range(len(session.practice) + len(session.main)):
        view = service.next_problem(session.session_id)
        clock.advance(think_ms)
        selection = view["recommendation"] or [0] * len(view["weights"])
        service.submit_solution(
            session.session_id,
            problem_index=view["problem_index"],
            selection=selection,
            client_elapsed_ms=think_ms,
        )
    return session, service.finalize_session(session.session_id)


# ---------------------------------------------------------------------------
# payments


def test_payment_golden_cases():
    assert compute_payment(85.0, TreatmentConfig(bonus="b2")) == 230
    assert compute_payment(70.0, TreatmentConfig(bonus="b20")) == 200
    assert compute_payment(69.9, TreatmentConfig(bonus="b10")) == 0


def test_payment_rounds_half_up():
    assert compute_payment(84.5, TreatmentConfig(bonus="b10")) == 200 + 10 * 15
    assert compute_payment(84.4, TreatmentConfig(bonus="b10")) == 200 + 10 * 14
    assert compute_payment(100.0, TreatmentConfig(bonus="b20")) == 200 + 20 * 30


def test_payment_rejects_out_of_range():
    with pytest.raises(ParameterError):
        compute_payment(101.0, TreatmentConfig(bonus="b2"))


def test_treatment_matrix_cells():
    with pytest.raises(ParameterError):
        TreatmentConfig(bonus="b2", ml_arm="q3")
    with pytest.raises(ParameterError):
        TreatmentConfig(bonus="b10", ml_arm="q9")
    TreatmentConfig(bonus="b10", ml_arm="q3", comprehension_quiz=True)  # valid


# ---------------------------------------------------------------------------
# session lifecycle


def test_forced_ml_session_carries_recommendations():
    clock = FakeClock()
    service = make_service(clock=clock)
    treatment = TreatmentConfig(bonus="b10", ml_arm="q6", comprehension_quiz=True)
    session = service.create_session("forced", seed=5, treatment=treatment)
    assert all(t.recommendation is not None for t in session.main)
    assert all(t.recommendation.feasible(t.instance) for t in session.main)


def test_no_ml_session_has_no_recommendations():
    service = make_service()
    session = service.create_session(
        "forced", seed=6, treatment=TreatmentConfig(bonus="none", ml_arm="none")
    )
    assert all(t.recommendation is None for t in session.trials)


def test_random_assignment_reproducible():
    a = make_service()
    b = make_service()
    for seed in range(20):
        assert a.draw_treatment(seed) == b.draw_treatment(seed)


def test_assignment_frequencies_match_weights():
    scipy_stats = pytest.importorskip("scipy.stats")
    service = make_service()
    cells = service.config.cells()
    index = {cell: k for k, (cell, _) in enumerate(cells)}
    counts = np.zeros(len(cells))
    n = 10_000
    for seed in range(n):
        counts[index[service.draw_treatment(seed)]] += 1
    weights = np.array([w for _, w in cells], dtype=float)
    expected = weights / weights.sum() * n
    result = scipy_stats.chisquare(counts, expected)
    assert result.pvalue > 0.001


def test_problem_flow_practice_then_main():
    clock = FakeClock()
    service = make_service(clock=clock)
    session = service.create_session(
        "forced", seed=7, treatment=TreatmentConfig(bonus="b10", ml_arm="none")
    )
    sid = session.session_id
    assert session.phase == "tutorial"
    seen = []
    for _ in range(12):
        view = service.next_problem(sid)
        seen.append((view["phase"], view["problem_index"]))
        clock.advance(1000)
        service.submit_solution(sid, view["problem_index"], [0] * 18, client_elapsed_ms=1000)
    assert seen[:2] == [("practice", 1), ("practice", 2)]
    assert seen[2:] == [("main", i) for i in range(1, 11)]
    assert session.phase == "questionnaire"
    with pytest.raises(PhaseError):
        service.next_problem(sid)


def test_next_problem_idempotent_until_submit():
    clock = FakeClock()
    service = make_service(clock=clock)
    session = service.create_session(
        "forced", seed=8, treatment=TreatmentConfig(bonus="b10", ml_arm="q3", comprehension_quiz=True)
    )
    first = service.next_problem(session.session_id)
    clock.advance(30_000)
    second = service.next_problem(session.session_id)
    assert first["problem_index"] == second["problem_index"]
    assert first["started_at"] == second["started_at"]
    assert second["remaining_ms"] == first["remaining_ms"] - 30_000


def test_unknown_session_rejected():
    service = make_service()
    with pytest.raises(UnknownSessionError):
        service.next_problem("nope")
    with pytest.raises(UnknownSessionError):
        service.submit_solution("nope", 1, [0] * 18)


def test_submit_validates_selection():
    clock = FakeClock()
    service = make_service(clock=clock)
    session = service.create_session(
        "forced", seed=9, treatment=TreatmentConfig(bonus="b10", ml_arm="none")
    )
    sid = session.session_id
    view = service.next_problem(sid)
    overweight = [1] * 18
    with pytest.raises(FeasibilityError):
        service.submit_solution(sid, view["problem_index"], overweight)
    with pytest.raises(ConflictError):
        service.submit_solution(sid, view["problem_index"] + 1, [0] * 18)
    service.submit_solution(sid, view["problem_index"], [0] * 18)
    with pytest.raises(ConflictError):
        service.submit_solution(sid, view["problem_index"], [0] * 18)


def test_practice_feedback_and_main_silence():
    clock = FakeClock()
    service = make_service(clock=clock)
    treatment = TreatmentConfig(bonus="b10", ml_arm="q1", comprehension_quiz=True)
    session = service.create_session("forced", seed=10, treatment=treatment)
    sid = session.session_id

    view = service.next_problem(sid)
    assert view["phase"] == "practice"
    resp = service.submit_solution(sid, view["problem_index"], view["recommendation"])
    assert "feedback" in resp and "econ_percent" in resp["feedback"]

    service.submit_solution(sid, service.next_problem(sid)["problem_index"], [0] * 18)
    main_view = service.next_problem(sid)
    assert main_view["phase"] == "main"
    resp = service.submit_solution(sid, main_view["problem_index"], main_view["recommendation"])
    assert resp["ack"] is True
    assert "feedback" not in resp


def test_server_clock_flags_late_submissions():
    clock = FakeClock()
    service = make_service(clock=clock)
    session = service.create_session(
        "forced", seed=11, treatment=TreatmentConfig(bonus="b10", ml_arm="none")
    )
    sid = session.session_id
    view = service.next_problem(sid)
    clock.advance(180_000 + 2_000 + 1)  # beyond limit + grace
    resp = service.submit_solution(sid, view["problem_index"], [0] * 18, client_elapsed_ms=60_000)
    assert resp["auto_submitted"] is True
    trial = service.get_session(sid).practice[0]
    assert trial.auto_submitted is True
    assert trial.elapsed_ms <= 180_000 + 2_000


def test_within_grace_is_not_auto():
    clock = FakeClock()
    service = make_service(clock=clock)
    session = service.create_session(
        "forced", seed=12, treatment=TreatmentConfig(bonus="b10", ml_arm="none")
    )
    sid = session.session_id
    view = service.next_problem(sid)
    clock.advance(181_000)
    resp = service.submit_solution(sid, view["problem_index"], [0] * 18)
    assert resp["auto_submitted"] is False
    assert service.get_session(sid).practice[0].elapsed_ms == 181_000


def test_client_auto_flag_recorded():
    clock = FakeClock()
    service = make_service(clock=clock)
    session = service.create_session(
        "forced", seed=13, treatment=TreatmentConfig(bonus="b10", ml_arm="none")
    )
    sid = session.session_id
    view = service.next_problem(sid)
    clock.advance(50)
    resp = service.submit_solution(sid, view["problem_index"], [0] * 18, auto=True)
    assert resp["auto_submitted"] is True


# ---------------------------------------------------------------------------
# finalization and payments from the log


def test_full_session_with_recommendations_pays_out():
    clock = FakeClock()
    service = make_service(clock=clock)
    treatment = TreatmentConfig(bonus="b10", ml_arm="q6", comprehension_quiz=True)
    session, score = drive_full_session(service, clock, treatment=treatment, seed=14)
    # greedy recommendations average well above the 70% threshold
    assert score["payment_pence"] >= 200
    assert score["mean_econ_percent"] > 70
    assert len(score["trials"]) == 10
    assert service.get_session(session.session_id).phase == "done"


def test_finalize_requires_completed_main():
    clock = FakeClock()
    service = make_service(clock=clock)
    session = service.create_session(
        "forced", seed=15, treatment=TreatmentConfig(bonus="b10", ml_arm="none")
    )
    with pytest.raises(PhaseError):
        service.finalize_session(session.session_id)


def test_finalize_settles_open_problem_as_auto_empty():
    clock = FakeClock()
    service = make_service(clock=clock)
    treatment = TreatmentConfig(bonus="b10", ml_arm="q2", comprehension_quiz=True)
    session = service.create_session("forced", seed=16, treatment=treatment)
    sid = session.session_id
    for _ in range(11):
        view = service.next_problem(sid)
        clock.advance(1000)
        service.submit_solution(sid, view["problem_index"], view["recommendation"] or [0] * 18)
    service.next_problem(sid)  # open the last problem, never submit
    score = service.finalize_session(sid)
    last = service.get_session(sid).main[-1]
    assert last.auto_submitted is True
    assert last.submitted.total_value == 0
    assert score["trials"][-1]["econ_percent"] == 0.0


def test_finalize_twice_conflicts():
    clock = FakeClock()
    service = make_service(clock=clock)
    _, _ = drive_full_session(
        service, clock, treatment=TreatmentConfig(bonus="b10", ml_arm="none"), seed=17
    )
    sid = next(iter(service._sessions))
    with pytest.raises(ConflictError):
        service.finalize_session(sid)


def test_invalidated_session_excluded_from_exports():
    clock = FakeClock()
    service = make_service(clock=clock)
    treatment = TreatmentConfig(bonus="b10", ml_arm="q3", comprehension_quiz=True)
    session, _ = drive_full_session(service, clock, treatment=treatment, seed=18)
    assert service.export_trials(arm="q3")
    service_session = service.get_session(session.session_id)
    service.invalidate_session(session.session_id, reason="reload")
    assert service_session.excluded_reason == "reload"
    assert service.export_trials(arm="q3") == []


# ---------------------------------------------------------------------------
# the log is the source of truth


def test_replay_reconstructs_sessions(tmp_path):
    clock = FakeClock()
    service = make_service(tmp_path=tmp_path, clock=clock)
    treatment = TreatmentConfig(bonus="b2", ml_arm="none")
    session, score = drive_full_session(service, clock, treatment=treatment, seed=19)

    replayed = StudyService(
        ServiceConfig(arm_recommenders=greedy_arms()),
        log=EventLog(tmp_path / "events.jsonl"),
        clock=clock,
    )
    again = replayed.get_session(session.session_id)
    assert again.payment_pence == score["payment_pence"]
    assert again.mean_econ_percent == score["mean_econ_percent"]
    assert [t.submitted for t in again.main] == [
        t.submitted for t in service.get_session(session.session_id).main
    ]
    assert replayed.audit_log() == []


def test_audit_passes_on_clean_log():
    clock = FakeClock()
    service = make_service(clock=clock)
    for seed in range(3):
        drive_full_session(
            service,
            clock,
            treatment=TreatmentConfig(bonus="b10", ml_arm="q4", comprehension_quiz=True),
            seed=seed,
        )
    assert service.audit_log() == []


def test_session_counts_invariant():
    clock = FakeClock()
    service = make_service(clock=clock)
    session, _ = drive_full_session(
        service, clock, treatment=TreatmentConfig(bonus="b10", ml_arm="none"), seed=20
    )
    record = service.get_session(session.session_id)
    assert len(record.practice) == 2
    assert len(record.main) == 10


# ---------------------------------------------------------------------------
# exports close the loop


def test_export_epoch_dataset_filters_by_arm():
    clock = FakeClock()
    service = make_service(clock=clock)
    t_q1 = TreatmentConfig(bonus="b10", ml_arm="q1", comprehension_quiz=True)
    t_none = TreatmentConfig(bonus="b10", ml_arm="none", comprehension_quiz=True)
    drive_full_session(service, clock, treatment=t_q1, seed=21)
    drive_full_session(service, clock, treatment=t_none, seed=22)
    data = service.export_epoch_dataset(arm="q1")
    assert len(data) == 10
    with pytest.raises(EmptyDatasetError):
        service.export_epoch_dataset(arm="q5")


def test_exported_data_trains_next_epoch_model():
    clock = FakeClock()
    service = make_service(clock=clock)
    treatment = TreatmentConfig(bonus="b10", ml_arm="q6", comprehension_quiz=True)
    for seed in range(12):
        drive_full_session(service, clock, treatment=treatment, seed=seed + 100)
    data = service.export_epoch_dataset(arm="q6")
    assert len(data) == 120
    rec = train_imitation(data, TrainingConfig(epochs=3), seed=1)
    instances = [inst for inst, _ in data.pairs]
    mean, _ = evaluate_recommender(rec, instances, UtilityKind.ECONOMIC, seed=2)
    assert 0.0 <= mean <= 1.0
    # copied-recommendation labels (greedy fills) are imitable ranking
    # targets, so the next-epoch model should stay well above random
    assert mean > 0.8


def test_export_feeds_ccf_estimation():
    clock = FakeClock()
    service = make_service(clock=clock)
    treatment = TreatmentConfig(bonus="b10", ml_arm="q2", comprehension_quiz=True)
    for seed in range(4):
        drive_full_session(service, clock, treatment=treatment, seed=seed + 200)
    trials = service.export_trials(arm="q2")
    points = estimate_ccf(trials)
    assert len(points) == 1
    # submissions copied the recommendation verbatim, so delta is exactly zero
    assert points[0].delta == pytest.approx(0.0, abs=1e-12)


def test_export_jsonl_round_trips_instances():
    import json

    clock = FakeClock()
    service = make_service(clock=clock)
    treatment = TreatmentConfig(bonus="b10", ml_arm="q1", comprehension_quiz=True)
    drive_full_session(service, clock, treatment=treatment, seed=23)
    lines = list(service.export_jsonl(arm="q1"))
    assert len(lines) == 10
    from knaplab.knapsack import parse_instance_line

    for line in lines:
        record = json.loads(line)
        inst = parse_instance_line(record["instance"])
        sub = Solution.from_selection(inst, [int(b) for b in record["submitted"]])
        assert record["econ_utility"] == pytest.approx(
            utility(UtilityKind.ECONOMIC, inst, sub)
        )

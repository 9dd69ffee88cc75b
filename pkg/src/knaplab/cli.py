"""Command-line front door.

    knaplab generate     write hard instances to a file
    knaplab solve        solve instances exactly (or by brute force)
    knaplab train        fit an imitation recommender
    knaplab calibrate    bisect a noisy-greedy recommender to a target utility
    knaplab simulate-clp iterate a learning path on a CCF
    knaplab run-loop     run the closed deploy->label->retrain loop
    knaplab estimate-ccf estimate CCF points from an exported trial log
    knaplab export-csv   flatten an event log into a per-trial CSV
    knaplab verify       run the acceptance suite (exit nonzero on failure)

All commands are deterministic given their --seed flags. Outputs are plain
text or CSV.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .analysis import estimate_ccf, trials_from_jsonl, write_trials_csv
from .dynamics import (
    LearnerMap,
    PERFECT_LEARNER,
    empirical_ccf,
    load_ccf,
    run_performative_loop,
    save_ccf,
    simulate_clp,
    write_path_csv,
    write_trace_csv,
)
from .humans import HumanModel, load_human_model
from .knapsack import (
    UtilityKind,
    format_instance_line,
    generate_instance,
    load_instances,
    save_instances,
    solve_bruteforce,
    solve_exact,
)
from .recommenders import (
    LabeledDataset,
    Recommender,
    TrainingConfig,
    calibrate_to_target,
    evaluate_recommender,
    load_recommender,
    save_recommender,
    train_imitation,
)
from .rng import derive_seed


def _cmd_generate(args) -> int:
    instances = [
        generate_instance(args.n, args.w_min, args.w_max, derive_seed(args.seed, i))
        for i in range(args.count)
    ]
    if args.out:
        save_instances(args.out, instances)
        print(f"wrote {len(instances)} instances to {args.out}")
    else:
        for inst in instances:
            print(format_instance_line(inst))
    return 0


def _cmd_solve(args) -> int:
    instances = load_instances(args.instances)
    solver = solve_bruteforce if args.method == "bruteforce" else solve_exact
    print("index,optimal_value,total_weight,selection")
    for i, inst in enumerate(instances):
        sol = solver(inst)
        bits = "".join(str(b) for b in sol.selection)
        print(f"{i},{sol.total_value},{sol.total_weight},{bits}")
    return 0


def _cmd_train(args) -> int:
    if args.labels == "optimal":
        instances = load_instances(args.instances)
        pairs = tuple((inst, solve_exact(inst)) for inst in instances)
    else:
        with open(args.labels, "r", encoding="utf-8") as fh:
            trials = trials_from_jsonl(fh)
        pairs = tuple((t.instance, t.submitted) for t in trials)
    cfg = TrainingConfig(
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        density_sort=not args.no_density_sort,
        normalize=not args.no_normalize,
    )
    rec = train_imitation(LabeledDataset(pairs=pairs), cfg, seed=args.seed)
    save_recommender(rec, args.out)
    losses = ", ".join(f"{l:.4f}" for l in rec.training_losses)
    print(f"trained on {len(pairs)} pairs; config {cfg}; per-epoch loss [{losses}]")
    print(f"saved recommender to {args.out}")
    return 0


def _cmd_calibrate(args) -> int:
    eval_set = [
        generate_instance(args.n, args.w_min, args.w_max, derive_seed(args.seed, 1, i))
        for i in range(args.count)
    ]
    rec = calibrate_to_target(args.target, eval_set, seed=args.seed, label=args.label)
    mean, sd = evaluate_recommender(rec, eval_set, UtilityKind.ECONOMIC, seed=args.seed)
    save_recommender(rec, args.out)
    print(
        f"calibrated sigma={float(rec.parameters[0]):.6f} "
        f"(eval mean {mean:.4f}, sd {sd:.4f}, target {args.target})"
    )
    print(f"saved recommender to {args.out}")
    return 0


def _cmd_simulate_clp(args) -> int:
    if args.ccf == "empirical":
        ccf = empirical_ccf()
    else:
        ccf = load_ccf(args.ccf)
        shaky = [p.label or f"u={p.model_utility}" for p in ccf.points if p.provenance not in ("paper", "measured")]
        if shaky:
            print(f"# warning: knots with unverified provenance: {', '.join(shaky)}")
    learner = (
        PERFECT_LEARNER
        if args.learner_slope == 1.0 and args.learner_intercept == 0.0
        else LearnerMap(kind="affine_tilt", slope=args.learner_slope, intercept=args.learner_intercept)
    )
    path = simulate_clp(ccf, s=args.start, T=args.epochs, epsilon_hat=args.epsilon, learner=learner)
    print("epoch,model_utility,collab_utility,stable")
    for step in path.steps:
        stable = path.stable_at is not None and step.epoch >= path.stable_at
        print(f"{step.epoch},{step.model_utility:.6f},{step.collab_utility:.6f},{int(stable)}")
    if path.stable_at is None:
        print(f"# no stable point within {args.epochs} epochs")
    else:
        print(f"# stable at epoch {path.stable_at} with utility {path.final_utility:.4f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            write_path_csv(path, fh)
        print(f"# wrote {args.out}")
    return 0


def _cmd_run_loop(args) -> int:
    if args.recommender:
        rec0 = load_recommender(args.recommender)
    else:
        rec0 = Recommender(
            kind="noisy_greedy", parameters=np.array([args.rec_sigma]), label="start"
        )
    human = (
        load_human_model(args.human_config)
        if args.human_config
        else HumanModel(kind=args.human)
    )
    cfg = TrainingConfig(
        epochs=args.train_epochs, learning_rate=args.learning_rate, batch_size=args.batch_size
    )
    trace = run_performative_loop(
        rec0,
        human,
        epochs=args.epochs,
        per_epoch=args.per_epoch,
        train_cfg=cfg,
        kind=UtilityKind(args.kind),
        seed=args.seed,
    )
    print(f"# training config: {cfg}")
    print("epoch,n_instances,recommender,mean_model_utility,mean_collab_utility,training_loss")
    for e in trace.epochs:
        print(
            f"{e.epoch},{e.n_instances},{e.recommender_label},"
            f"{e.mean_model_utility:.6f},{e.mean_collab_utility:.6f},{e.training_loss:.6f}"
        )
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            write_trace_csv(trace, fh)
        print(f"# wrote {args.out}")
    return 0


def _cmd_estimate_ccf(args) -> int:
    with open(args.log, "r", encoding="utf-8") as fh:
        trials = trials_from_jsonl(fh)
    points = estimate_ccf(trials, kind=UtilityKind(args.kind))
    print("# cluster-robust SEs (CR0, participant clusters, no small-sample correction)")
    print("arm,model_utility,collab_utility,delta,clustered_se,provenance")
    for p in points:
        print(
            f"{p.label},{p.model_utility:.6f},{p.collab_utility:.6f},"
            f"{p.delta:.6f},{p.se:.6f},{p.provenance}"
        )
    if args.out:
        if len(points) >= 2:
            from .dynamics import Ccf

            save_ccf(Ccf(points=tuple(points)), args.out)
            print(f"# wrote {args.out}")
        else:
            print("# need at least two arms to write an interpolatable CCF bundle; skipped")
    return 0


def _cmd_export_csv(args) -> int:
    from .study import EventLog, ServiceConfig, StudyService

    service = StudyService(ServiceConfig(), log=EventLog(args.log))
    trials = service.export_trials(
        arm=args.arm, bonus=args.bonus, include_incomplete=args.include_incomplete
    )
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        write_trials_csv(trials, fh)
    print(f"wrote {len(trials)} trials to {args.out}")
    return 0


def _cmd_verify(args) -> int:
    from .acceptance import run_acceptance

    results = run_acceptance(verbose=True)
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="knaplab",
        description="Laboratory for performative human-ML collaboration on 0-1 knapsack tasks",
    )
    parser.add_argument("--version", action="version", version=f"knaplab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate hard instances")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--n", type=int, default=18)
    p.add_argument("--w-min", type=int, default=5)
    p.add_argument("--w-max", type=int, default=250)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("solve", help="solve instances from a file")
    p.add_argument("--instances", required=True)
    p.add_argument("--method", choices=["exact", "bruteforce"], default="exact")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("train", help="fit an imitation recommender")
    p.add_argument("--instances", help="instance file (with --labels optimal)")
    p.add_argument(
        "--labels",
        default="optimal",
        help="'optimal' to self-label with the exact solver, or a JSONL trial export",
    )
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--learning-rate", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--no-density-sort", action="store_true")
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("calibrate", help="calibrate a noisy-greedy recommender")
    p.add_argument("--target", type=float, required=True)
    p.add_argument("--count", type=int, default=2000, help="evaluation instances")
    p.add_argument("--n", type=int, default=18)
    p.add_argument("--w-min", type=int, default=5)
    p.add_argument("--w-max", type=int, default=250)
    p.add_argument("--label", default="")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("simulate-clp", help="iterate a learning path on a CCF")
    p.add_argument("--ccf", default="empirical", help="'empirical' or a CCF bundle file")
    p.add_argument("--start", type=float, default=0.717)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--learner-slope", type=float, default=1.0)
    p.add_argument("--learner-intercept", type=float, default=0.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_simulate_clp)

    p = sub.add_parser("run-loop", help="run the closed performative loop")
    p.add_argument("--human", default="best_of_two")
    p.add_argument("--human-config", default=None, help="human-model config file")
    p.add_argument("--recommender", default=None, help="initial recommender dump")
    p.add_argument("--rec-sigma", type=float, default=1.5, help="noisy-greedy start when no dump")
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--per-epoch", type=int, default=500)
    p.add_argument("--train-epochs", type=int, default=5)
    p.add_argument("--learning-rate", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--kind", choices=["economic", "optimality"], default="economic")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_run_loop)

    p = sub.add_parser("estimate-ccf", help="estimate CCF points from a trial export")
    p.add_argument("--log", required=True, help="JSONL trial export (see GET /export)")
    p.add_argument("--kind", choices=["economic", "optimality"], default="economic")
    p.add_argument("--out", default=None, help="write the points as a CCF bundle")
    p.set_defaults(func=_cmd_estimate_ccf)

    p = sub.add_parser("export-csv", help="flatten an event log into per-trial CSV")
    p.add_argument("--log", required=True, help="study-service event log (JSONL)")
    p.add_argument("--arm", default=None)
    p.add_argument("--bonus", default=None)
    p.add_argument("--include-incomplete", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export_csv)

    p = sub.add_parser("verify", help="run the acceptance suite")
    p.set_defaults(func=_cmd_verify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

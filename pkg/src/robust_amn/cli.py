"""Command-line entry point: ``robust-amn {train,attack,eval,sweep,certify-bounds}``.

Exit codes: 0 success; 1 a sweep cell or certification check failed;
2 bad input (arguments, config, data files); 3 solver failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

from . import __version__
from .amn import Weights, accuracy, map_inference, map_lp
from .attack import InstanceTooLarge, brute_force_attack, build_attacker_lp, generate_attack, heuristic_attack
from .bench import ConfigError, ExperimentConfig, emit_plots, run_experiment
from .certify import certify
from .graph import (
    AttackBudget,
    AttackPlan,
    DatasetError,
    _atomic_write,
    apply_attack,
    load_dataset,
    save_labeling,
)
from .learn import train
from .solvers import SolverError, write_lp_file

EXIT_OK, EXIT_FAILED, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    p.add_argument("--budget-frac", type=float, default=None, help="attack budget as a fraction of |E|")
    p.add_argument("--trials", type=int, default=None, help="randomized rounding trials")
    p.add_argument("--out", help="output path")


def _data_arg(p):
    p.add_argument("--data", help="amn-dataset v1 file (defaults to the config's dataset)")
    p.add_argument("--variant", choices=("D", "AD"), default="D", help="delete-only or add/delete attacks")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="robust-amn", description="Robust associative Markov networks.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train (robust) AMN weights on a dataset")
    _common(p)
    _data_arg(p)
    p.add_argument("-C", "--C", dest="C", type=float, default=1.0, help="trade-off weight")
    p.add_argument("--lp-dump", help="write the training QP in LP text format")

    p = sub.add_parser("attack", help="compute a structural attack plan against trained weights")
    _common(p)
    _data_arg(p)
    p.add_argument("--weights", help="amn-weights v1 file (required for lp/exact modes)")
    p.add_argument("--mode", choices=("lp", "exact", "rs", "rsad"), default="lp")
    p.add_argument("--lp-dump", help="write the attacker LP in LP text format")

    p = sub.add_parser("eval", help="MAP inference and accuracy, optionally after applying a plan")
    _common(p)
    p.add_argument("--data", help="amn-dataset v1 file (defaults to the config's dataset)")
    p.add_argument("--weights", required=True)
    p.add_argument("--plan", help="attack plan to apply first")
    p.add_argument("--lp-dump", help="write the MAP relaxation in LP text format")

    p = sub.add_parser("sweep", help="run a full experiment sweep from a config")
    _common(p)
    p.add_argument("--plots", help="directory for accuracy-vs-budget plots")

    p = sub.add_parser("certify-bounds", help="numerical checks of duality, relaxation and gap bounds")
    _common(p)
    p.add_argument("--instances", type=int, default=10, help="random instances per check")
    return ap


def _config(args) -> ExperimentConfig | None:
    return ExperimentConfig.load(args.config) if args.config else None


def _dataset(args):
    path = args.data
    if path is None:
        cfg = _config(args)
        if cfg is None or cfg.dataset == "synthetic":
            raise ConfigError("pass --data or a --config whose dataset is a file")
        path = cfg.dataset
    return load_dataset(path)


def _budget(args, n_edges):
    frac = 0.0 if args.budget_frac is None else args.budget_frac
    return AttackBudget.from_fraction(frac, n_edges, args.variant)


def cmd_train(args) -> int:
    from .learn import build_robust_qp

    graph, truth = _dataset(args)
    budget = _budget(args, graph.n_edges)
    if args.lp_dump:
        write_lp_file(build_robust_qp(graph, truth, args.C, budget).qp, args.lp_dump)
    w = train(graph, truth, args.C, budget)
    out = args.out or "weights.txt"
    w.save(out)
    print(f"trained K={w.K} d_n={w.d_n} C={args.C} deletions<={budget.deletions} additions<={budget.additions}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_attack(args) -> int:
    graph, truth = _dataset(args)
    budget = _budget(args, graph.n_edges)
    seed = args.seed or 0
    if args.mode in ("rs", "rsad"):
        if args.mode == "rsad" and budget.variant != "AD":
            budget = AttackBudget.from_fraction(args.budget_frac or 0.0, graph.n_edges, "AD")
        plan = heuristic_attack(graph, truth, budget, args.mode, seed)
    else:
        if not args.weights:
            raise ConfigError("--weights is required for lp and exact attacks")
        w = Weights.load(args.weights)
        if args.lp_dump:
            write_lp_file(build_attacker_lp(w, graph, truth, budget).lp, args.lp_dump)
        if args.mode == "lp":
            plan = generate_attack(w, graph, truth, budget, trials=args.trials or 100, seed=seed)
        else:
            _, plan = brute_force_attack(w, graph, truth, budget)
    out = args.out or "plan.txt"
    _atomic_write(out, plan.to_text())
    print(f"{plan.provenance}: {plan.n_deletions} deletions, {plan.n_additions} additions, "
          f"objective={plan.objective:.6g}, shortfall={plan.shortfall}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    graph, truth = _dataset(args)
    w = Weights.load(args.weights)
    if args.plan:
        graph = apply_attack(graph, AttackPlan.from_text(Path(args.plan).read_text()))
    if args.lp_dump:
        write_lp_file(map_lp(w, graph), args.lp_dump)
    inf = map_inference(w, graph, trials=args.trials or 100, seed=args.seed or 0)
    print(f"accuracy={accuracy(inf.labeling, truth):.6f} integral={inf.integral} relaxation={inf.relaxation_value:.9g}")
    if args.out:
        save_labeling(inf.labeling, args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if cfg is None:
        raise ConfigError("sweep needs --config")
    if args.seed is not None:
        cfg.seed = args.seed
    if args.trials is not None:
        cfg.trials = args.trials
    if args.budget_frac is not None:
        cfg.budgets = [args.budget_frac]
    if args.out:
        cfg.out = args.out
    cfg.validate()
    report = run_experiment(cfg, progress=lambda i, n: print(f"seed {i}/{n} done", file=sys.stderr))
    plots = args.plots or cfg.plots
    if plots:
        for f in emit_plots(report, plots):
            print(f"plot {f}")
    for r in report.summary():
        print(f"{r['trainer']:6s} {r['attack']:12s} b={r['b']:.3f} acc={r['mean_accuracy']:.4f} "
              f"+- {r['se_accuracy']:.4f} (n={r['n']})")
    for r in report.failed:
        print(f"FAILED seed={r['seed']} {r['trainer']} {r['attack']} b={r['b']}: {r['status']}", file=sys.stderr)
    print(f"wrote {cfg.out}")
    return EXIT_FAILED if report.failed else EXIT_OK


def cmd_certify(args) -> int:
    checks = certify(args.instances, args.seed or 0, args.trials or 1000)
    for c in checks:
        print(c.line())
    if args.out:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["check", "instance", "lhs", "rhs", "tol", "passed"])
        for c in checks:
            w.writerow([c.name, c.instance, repr(c.lhs), repr(c.rhs), c.tol, int(c.passed)])
        _atomic_write(args.out, buf.getvalue())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_FAILED if failed else EXIT_OK


COMMANDS = {"train": cmd_train, "attack": cmd_attack, "eval": cmd_eval, "sweep": cmd_sweep,
            "certify-bounds": cmd_certify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DatasetError, InstanceTooLarge, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

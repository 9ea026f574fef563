"""Experiment sweeps: split, train, attack, evaluate, report.

A sweep is described by a flat ``key = value`` config file; see
:class:`ExperimentConfig` for the keys.  Each (trainer, attack, budget, seed)
cell becomes one CSV row; a summary CSV holds mean and standard error per
(trainer, attack, budget).
"""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .amn import Weights, accuracy, map_inference
from .attack import generate_attack, heuristic_attack
from .graph import (
    AttackBudget,
    AttackPlan,
    FeatureGraph,
    Labeling,
    _atomic_write,
    apply_attack,
    canonical_edges,
    load_dataset,
    split_train_test,
)
from .learn import cross_validate, fold_splits, theorem2_bound, train

ATTACKS = ("none", "struct-d", "struct-ad", "struct-rs", "struct-rsad")
TRAINERS = ("amn", "r-amn", "svm")
# which training/attack variant each attack calls for
ATTACK_VARIANT = {"none": "D", "struct-d": "D", "struct-rs": "D", "struct-ad": "AD", "struct-rsad": "AD"}

RAW_COLUMNS = (
    "dataset", "trainer", "attack", "b", "seed", "train_size", "test_size", "test_edges", "accuracy",
    "attacker_objective", "bound", "deletions", "additions", "budget_deletions", "budget_additions",
    "C", "b_train", "status", "wall_time",
)
SUMMARY_COLUMNS = ("dataset", "trainer", "attack", "b", "n", "mean_accuracy", "se_accuracy")


class ConfigError(ValueError):
    pass


def _floats(text):
    return [float(t) for t in text.replace(",", " ").split()]


def _words(text):
    return [t for t in text.replace(",", " ").split()]


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class ExperimentConfig:
    """Sweep description.

    ``dataset`` is ``synthetic`` (the two-community generator below) or the
    path of an ``amn-dataset v1`` file.  Lists are comma or space separated.
    """

    dataset: str = "synthetic"
    clusters: int = 2
    nodes: int = 200
    dim: int = 8
    feature_sep: float = 0.5
    feature_noise: float = 1.0
    degree: int = 6
    noisy_edge_frac: float = 0.05
    split_ratio: float = 0.5
    seeds: int = 10
    seed: int = 0
    attacks: list = field(default_factory=lambda: list(ATTACKS))
    budgets: list = field(default_factory=lambda: [0.05, 0.1, 0.2])
    trainers: list = field(default_factory=lambda: list(TRAINERS))
    C_grid: list = field(default_factory=lambda: [0.01, 0.1, 1.0, 10.0])
    b_grid: list = field(default_factory=lambda: [0.0, 0.05, 0.1, 0.2])
    folds: int = 3
    cv_attack_frac: float = 0.1
    cv_trials: int = 20
    trials: int = 100
    nested_budgets: bool = True
    out: str = "report.csv"
    plots: str = ""

    _PARSERS = {
        "dataset": str, "clusters": int, "nodes": int, "dim": int, "feature_sep": float,
        "feature_noise": float, "degree": int, "noisy_edge_frac": float, "split_ratio": float,
        "seeds": int, "seed": int, "attacks": _words, "budgets": _floats, "trainers": _words,
        "C_grid": _floats, "b_grid": _floats, "folds": int, "cv_attack_frac": float, "cv_trials": int,
        "trials": int, "nested_budgets": _bool, "out": str, "plots": str,
    }

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.seeds < 1:
            raise ConfigError("seeds must be at least 1")
        for b in list(self.budgets) + list(self.b_grid) + [self.cv_attack_frac]:
            if not 0.0 <= b <= 1.0:
                raise ConfigError(f"budget fraction {b} outside [0, 1]")
        bad = set(self.attacks) - set(ATTACKS)
        if bad:
            raise ConfigError(f"unknown attacks {sorted(bad)}; choose from {ATTACKS}")
        bad = set(self.trainers) - set(TRAINERS)
        if bad:
            raise ConfigError(f"unknown trainers {sorted(bad)}; choose from {TRAINERS}")
        if any(c <= 0 for c in self.C_grid) or not self.C_grid or not self.b_grid:
            raise ConfigError("C grid must be non-empty and positive; b grid non-empty")
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigError("split_ratio must lie strictly between 0 and 1")
        if self.trials < 1 or self.cv_trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.folds < 2:
            raise ConfigError("folds must be at least 2")

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        values = {}
        for ln, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {ln}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in cls._PARSERS:
                raise ConfigError(f"line {ln}: unknown key {key!r}")
            try:
                values[key] = cls._PARSERS[key](val)
            except ValueError as exc:
                raise ConfigError(f"line {ln}: bad value for {key}: {exc}") from None
        return cls(**values)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())

    def to_text(self) -> str:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                v = ", ".join(str(x) for x in v)
            out.append(f"{f.name} = {v}")
        return "\n".join(out) + "\n"

    @property
    def dataset_name(self) -> str:
        return "synthetic" if self.dataset == "synthetic" else Path(self.dataset).stem


# ---------------------------------------------------------------------------
# data


def synthetic_benchmark(nodes=200, dim=8, sep=0.5, noise=1.0, degree=6, noisy_frac=0.05, clusters=2,
                        seed=0) -> tuple[FeatureGraph, Labeling]:
    """Community graph with weakly informative nonnegative features.

    Every node draws ``degree`` partners from its own community; then
    ``noisy_frac`` times that many cross-community edges are added.  Features
    are ``max(0, 1 + sep * onehot_block(c) + noise * N(0, 1))`` over ``dim``
    dimensions split into per-community blocks, plus a constant bias column.
    """
    rng = np.random.default_rng(seed)
    y = np.arange(nodes) % clusters
    rng.shuffle(y)
    mu = np.ones((clusters, dim))
    for c, blk in enumerate(np.array_split(np.arange(dim), clusters)):
        mu[c, blk] += sep
    X = np.clip(mu[y] + noise * rng.normal(size=(nodes, dim)), 0.0, None)
    X = np.hstack([X, np.ones((nodes, 1))])
    members = [np.flatnonzero(y == c) for c in range(clusters)]
    edges = set()
    for i in range(nodes):
        pool = members[y[i]][members[y[i]] != i]
        for j in rng.choice(pool, min(degree, len(pool)), replace=False):
            edges.add((min(i, j), max(i, j)))
    n_cross = int(round(noisy_frac * len(edges)))
    possible = sum(len(a) * len(b) for c, a in enumerate(members) for b in members[c + 1 :])
    n_cross = min(n_cross, possible)
    while n_cross > 0:
        i, j = (int(v) for v in rng.integers(0, nodes, 2))
        key = (min(i, j), max(i, j))
        if y[i] != y[j] and key not in edges:
            edges.add(key)
            n_cross -= 1
    return FeatureGraph(X, canonical_edges(sorted(edges))), Labeling(y, clusters)


def load_experiment_data(cfg: ExperimentConfig, seed: int):
    if cfg.dataset == "synthetic":
        return synthetic_benchmark(cfg.nodes, cfg.dim, cfg.feature_sep, cfg.feature_noise, cfg.degree,
                                   cfg.noisy_edge_frac, cfg.clusters, seed)
    return load_dataset(cfg.dataset)


# ---------------------------------------------------------------------------
# structure-blind baseline


class LinearSVMModel:
    """Per-node linear classifier; ignores the graph."""

    def __init__(self, clf, C):
        self.clf = clf
        self.C = C

    def predict(self, graph: FeatureGraph, K: int) -> Labeling:
        return Labeling(self.clf.predict(graph.X).astype(np.int64), K)


def train_svm(features, labels, C: float = 1.0) -> LinearSVMModel:
    """L2-regularised hinge-loss linear SVM (liblinear)."""
    from sklearn.svm import LinearSVC

    y = np.asarray(labels)
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("SVM needs at least two classes in the training labels")
    if classes.size > 2:
        raise ValueError("the SVM baseline is binary (K = 2)")
    clf = LinearSVC(C=C, loss="hinge", dual=True, max_iter=200_000, tol=1e-6, random_state=0)
    clf.fit(np.asarray(features, float), y)
    return LinearSVMModel(clf, C)


def tune_svm(graph: FeatureGraph, truth: Labeling, C_grid, folds: int, seed: int) -> LinearSVMModel:
    """Pick ``C`` on the same node folds as the AMN models, then refit on all of ``graph``."""
    scores = {}
    for C in sorted(C_grid):
        accs = []
        for gtr, ytr, gva, yva in fold_splits(graph, truth, folds, seed):
            model = train_svm(gtr.X, ytr.labels, C)
            accs.append(accuracy(model.predict(gva, truth.K), yva))
        scores[C] = float(np.mean(accs))
    best = max(scores.items(), key=lambda kv: (kv[1], -kv[0]))[0]
    return train_svm(graph.X, truth.labels, best)


# ---------------------------------------------------------------------------
# the sweep


@dataclass
class ExperimentReport:
    rows: list
    dataset: str = "synthetic"

    @property
    def failed(self) -> list:
        return [r for r in self.rows if r["status"] != "ok"]

    def summary(self) -> list:
        groups = {}
        for r in self.rows:
            if r["status"] == "ok":
                groups.setdefault((r["dataset"], r["trainer"], r["attack"], r["b"]), []).append(r["accuracy"])
        out = []
        for key in sorted(groups):
            a = np.asarray(groups[key], float)
            se = float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else 0.0
            out.append(dict(zip(SUMMARY_COLUMNS, (*key, a.size, float(a.mean()), se))))
        return out

    def mean(self, trainer, attack, b) -> float:
        for r in self.summary():
            if r["trainer"] == trainer and r["attack"] == attack and abs(r["b"] - b) < 1e-12:
                return r["mean_accuracy"]
        raise KeyError((trainer, attack, b))

    def write(self, path) -> tuple[Path, Path]:
        path = Path(path)
        summary = path.with_name(path.stem + ".summary" + (path.suffix or ".csv"))
        path.parent.mkdir(parents=True, exist_ok=True)
        _atomic_write(path, _csv(RAW_COLUMNS, self.rows))
        _atomic_write(summary, _csv(SUMMARY_COLUMNS, self.summary()))
        return path, summary

    @classmethod
    def read(cls, path) -> "ExperimentReport":
        rows = []
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                for k in ("b", "accuracy", "attacker_objective", "bound", "C", "b_train", "wall_time"):
                    r[k] = float(r[k]) if r[k] != "" else float("nan")
                for k in ("seed", "train_size", "test_size", "test_edges", "deletions", "additions",
                          "budget_deletions", "budget_additions"):
                    r[k] = int(r[k])
                rows.append(r)
        return cls(rows, rows[0]["dataset"] if rows else "synthetic")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


@dataclass
class _Model:
    trainer: str
    variant: str
    weights: Weights | None = None
    svm: LinearSVMModel | None = None
    C: float = float("nan")
    b_train: float = float("nan")

    def predict(self, graph: FeatureGraph, K: int, seed: int) -> Labeling:
        if self.svm is not None:
            return self.svm.predict(graph, K)
        return map_inference(self.weights, graph, seed=seed).labeling


def _fit_models(cfg, tr, seed, variants):
    models = {}
    if "amn" in cfg.trainers:
        cv = cross_validate(tr.graph, tr.labels, cfg.C_grid, [0.0], cfg.folds, seed, "D", 0.0, cfg.cv_trials)
        w = train(tr.graph, tr.labels, cv.C, AttackBudget(0))
        for v in variants:
            models[("amn", v)] = _Model("amn", v, w, C=cv.C, b_train=0.0)
    if "r-amn" in cfg.trainers:
        for v in variants:
            cv = cross_validate(tr.graph, tr.labels, cfg.C_grid, cfg.b_grid, cfg.folds, seed, v,
                                cfg.cv_attack_frac, cfg.cv_trials)
            w = train(tr.graph, tr.labels, cv.C, AttackBudget.from_fraction(cv.b, tr.graph.n_edges, v))
            models[("r-amn", v)] = _Model("r-amn", v, w, C=cv.C, b_train=cv.b)
    if "svm" in cfg.trainers:
        svm = tune_svm(tr.graph, tr.labels, cfg.C_grid, cfg.folds, seed)
        for v in variants:
            models[("svm", v)] = _Model("svm", v, svm=svm, C=svm.C)
    return models


def _plan(model: _Model, attack, graph, truth, budget, cfg, seed, cache):
    if attack in ("struct-rs", "struct-rsad"):
        key = (attack, budget)
        if key not in cache:
            mode = "rs" if attack == "struct-rs" else "rsad"
            cache[key] = heuristic_attack(graph, truth, budget, mode, seed)
        return cache[key]
    if model.weights is None:
        # the optimised attacks need a model with edge potentials to target
        return AttackPlan.empty("none")
    return generate_attack(model.weights, graph, truth, budget, trials=cfg.trials, seed=seed)


def run_seed(cfg: ExperimentConfig, s: int) -> list[dict]:
    seed = cfg.seed + s
    variants = sorted({ATTACK_VARIANT[a] for a in cfg.attacks}) or ["D"]
    base = dict(dataset=cfg.dataset_name, seed=seed, train_size=0, test_size=0, test_edges=0)
    try:
        graph, truth = load_experiment_data(cfg, seed)
        tr, te = split_train_test(graph, truth, cfg.split_ratio, seed)
        base.update(train_size=tr.graph.n_nodes, test_size=te.graph.n_nodes, test_edges=te.graph.n_edges)
        models = _fit_models(cfg, tr, seed, variants)
    except Exception as exc:  # noqa: BLE001 - recorded per cell, sweep continues
        rows = []
        for trainer in cfg.trainers:
            for attack in cfg.attacks:
                for b in [0.0] if attack == "none" else cfg.budgets:
                    rows.append(_failed_row(base, trainer, attack, b, exc))
        return rows
    rows = []
    heuristic_cache = {}
    for trainer in cfg.trainers:
        for attack in cfg.attacks:
            model = models[(trainer, ATTACK_VARIANT[attack])]
            budgets = [0.0] if attack == "none" else sorted(cfg.budgets)
            worst = None
            for b in budgets:
                t0 = time.perf_counter()
                try:
                    variant = ATTACK_VARIANT[attack]
                    budget = AttackBudget.from_fraction(b, te.graph.n_edges, variant)
                    if attack == "none" or (budget.deletions == 0 and budget.additions == 0):
                        plan = AttackPlan.empty("none")
                    else:
                        plan = _plan(model, attack, te.graph, te.labels, budget, cfg, seed, heuristic_cache)
                    if not plan.respects(budget):
                        raise RuntimeError("attack plan exceeds its budget")
                    acc = accuracy(model.predict(apply_attack(te.graph, plan), truth.K, seed), te.labels)
                    cand = (acc, plan)
                    # a budget-b attacker may also play any plan found for a smaller budget
                    if cfg.nested_budgets and worst is not None and worst[0] < acc:
                        cand = worst
                    worst = cand
                    acc, plan = cand
                    bound = float("nan")
                    if model.weights is not None:
                        bound = theorem2_bound(model.weights, model.C, te.graph.n_edges, truth.K, budget.additions)
                    rows.append(dict(
                        base, trainer=trainer, attack=attack, b=float(b), accuracy=float(acc),
                        attacker_objective=float(plan.objective), bound=bound, deletions=plan.n_deletions,
                        additions=plan.n_additions, budget_deletions=budget.deletions,
                        budget_additions=budget.additions, C=float(model.C), b_train=float(model.b_train),
                        status="ok", wall_time=time.perf_counter() - t0,
                    ))
                except Exception as exc:  # noqa: BLE001
                    rows.append(_failed_row(base, trainer, attack, b, exc))
    return rows


def _failed_row(base, trainer, attack, b, exc):
    msg = f"error: {type(exc).__name__}: {exc}".replace("\n", " ")
    return dict(base, trainer=trainer, attack=attack, b=float(b), accuracy=float("nan"),
                attacker_objective=float("nan"), bound=float("nan"), deletions=0, additions=0,
                budget_deletions=0, budget_additions=0, C=float("nan"), b_train=float("nan"),
                status=msg, wall_time=0.0)


def run_experiment(cfg: ExperimentConfig, write: bool = True, progress=None) -> ExperimentReport:
    """Run every seed of the sweep; rows come out in (seed, trainer, attack, b) order."""
    rows = []
    for s in range(cfg.seeds):
        rows.extend(run_seed(cfg, s))
        if progress is not None:
            progress(s + 1, cfg.seeds)
    report = ExperimentReport(rows, cfg.dataset_name)
    if write and cfg.out:
        report.write(cfg.out)
    return report


# ---------------------------------------------------------------------------
# plots


def emit_plots(report: ExperimentReport, outdir) -> list[Path]:
    """One accuracy-vs-budget PNG per (dataset, trainer, attack); byte-identical on re-runs."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    summary = report.summary()
    if not summary:
        raise ValueError("empty report")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    meta = {"Software": None}
    files = []
    attacks = sorted({r["attack"] for r in summary} - {"none"})
    trainers = sorted({r["trainer"] for r in summary})
    dataset = summary[0]["dataset"]
    if not attacks:
        fig, ax = plt.subplots(figsize=(4, 3), dpi=100)
        vals = [next(r for r in summary if r["trainer"] == t) for t in trainers]
        ax.bar(trainers, [v["mean_accuracy"] for v in vals], yerr=[v["se_accuracy"] for v in vals], color="0.6")
        ax.set_ylabel("clean accuracy")
        ax.set_ylim(0, 1)
        path = outdir / f"{dataset}_clean.png"
        fig.tight_layout()
        fig.savefig(path, format="png", metadata=meta)
        plt.close(fig)
        return [path]
    for trainer in trainers:
        clean = [r for r in summary if r["trainer"] == trainer and r["attack"] == "none"]
        for attack in attacks:
            pts = clean + [r for r in summary if r["trainer"] == trainer and r["attack"] == attack]
            pts.sort(key=lambda r: r["b"])
            fig, ax = plt.subplots(figsize=(4, 3), dpi=100)
            ax.errorbar([r["b"] for r in pts], [r["mean_accuracy"] for r in pts],
                        yerr=[r["se_accuracy"] for r in pts], marker="o", capsize=3)
            ax.set_xlabel("budget fraction b")
            ax.set_ylabel("accuracy")
            ax.set_title(f"{dataset}: {trainer} under {attack}")
            fig.tight_layout()
            path = outdir / f"{dataset}_{trainer}_{attack}.png"
            fig.savefig(path, format="png", metadata=meta)
            plt.close(fig)
            files.append(path)
    return files

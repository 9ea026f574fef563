"""Robust max-margin AMN training by dualizing the attacker relaxation.

The inner attacker problem is an LP whose objective is affine in the weights
and whose constraints do not depend on them.  Replacing it by its LP dual
turns the min-max training problem into a single convex QP over the weights
and the dual variables.  The dual is generated mechanically from the primal
structure, so every change to the attacker LP carries over automatically.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .amn import Weights, accuracy, map_inference
from .attack import ParametricLP, attacker_template, generate_attack
from .graph import AttackBudget, FeatureGraph, Labeling, apply_attack
from .solvers import LP_TOL, QP_TOL, LinearProgram, ProgramBuilder, Solution, require_optimal, solve_qp

# dual block names for the attacker-LP row families and bounded variables
DUAL_SYMBOLS = {
    "simplex": "t_i",
    "cap_i": "t_ij",
    "cap_j": "t_ji",
    "cap_e": "s_ij",
    "budget_del": "t_D",
    "capbar_i": "tbar_ij",
    "capbar_j": "tbar_ji",
    "capbar_e": "sbar_ij",
    "budget_add": "tbar_D",
    "degree": "t_deg",
    "ub:e": "p_ij",
    "ub:ebar": "pbar_ij",
}


class DualizationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ParametricDual:
    """Dual of ``max (c0 + Cw w)'x + off0 + offw'w`` over a fixed polyhedron.

    The dual reads::

        min  b'd + off0 + offw'w
        s.t. G d - Cw w  >=  c0   (rows of primal variables with x >= 0)
             G d - Cw w   =  c0   (rows of free primal variables)
             d >= 0 except duals of equality rows

    where ``G = [A_eq' | A_ub' | U]`` and ``U`` picks the variables with a
    finite upper bound.
    """

    primal: ParametricLP
    G: sp.csr_matrix  # (n_primal, n_dual)
    b: np.ndarray  # (n_dual,)
    dual_blocks: tuple  # (name, size, free, source)
    stat_rows: tuple  # (primal block name, start, size, sense)

    @property
    def n_dual(self) -> int:
        return self.G.shape[1]

    def _add_dual_blocks(self, builder: ProgramBuilder):
        for name, size, free, _ in self.dual_blocks:
            builder.add_block(name, size, -np.inf if free else 0.0, np.inf)

    def _add_stat_rows(self, builder: ProgramBuilder, M: sp.csr_matrix, rhs: np.ndarray):
        for name, start, size, sense in self.stat_rows:
            blk = M[start : start + size].tocoo()
            builder.add_rows(f"stat_{name}", size, blk.row, blk.col, blk.data, rhs[start : start + size], sense)

    def at(self, wvec) -> LinearProgram:
        """Dual LP with the weights fixed; its optimum equals the primal optimum."""
        wvec = np.asarray(wvec, float)
        b = ProgramBuilder()
        self._add_dual_blocks(b)
        self._add_stat_rows(b, self.G, self.primal.c0 + self.primal.Cw @ wvec)
        return b.build_lp(self.b, "min", self.primal.off0 + float(self.primal.offw @ wvec))

    def inner_value(self, wvec, dvec) -> float:
        return float(self.b @ dvec) + self.primal.off0 + float(self.primal.offw @ wvec)


def dualize_parametric_lp(plp: ParametricLP) -> ParametricDual:
    lp = plp.structure
    if lp.sense != "max":
        raise DualizationError("expected a maximisation problem")
    if plp.Cw.shape[0] != lp.n_vars:
        raise DualizationError("weight dependence must be confined to objective coefficients")
    n = lp.n_vars
    blocks, parts, bvec = [], [], []
    for fam in lp.families:
        A = lp.A_eq if fam.kind == "eq" else lp.A_ub
        rhs = lp.b_eq if fam.kind == "eq" else lp.b_ub
        parts.append(A[fam.slice].T)
        bvec.append(rhs[fam.slice])
        blocks.append((DUAL_SYMBOLS.get(fam.name, f"dual_{fam.name}"), fam.size, fam.kind == "eq", fam.name))
    stat = []
    for blk in lp.blocks:
        lo = lp.lower[blk.slice]
        up = lp.upper[blk.slice]
        if np.all(lo == 0.0):
            sense = ">="
        elif np.all(np.isneginf(lo)):
            sense = "="
        else:
            raise DualizationError(f"block {blk.name!r}: lower bounds must be all 0 or all -inf")
        stat.append((blk.name, blk.start, blk.size, sense))
        fin = np.flatnonzero(np.isfinite(up))
        if fin.size:
            U = sp.csr_matrix((np.ones(fin.size), (blk.start + fin, np.arange(fin.size))), shape=(n, fin.size))
            parts.append(U)
            bvec.append(up[fin])
            key = f"ub:{blk.name}"
            blocks.append((DUAL_SYMBOLS.get(key, f"ub_{blk.name}"), fin.size, False, key))
    G = sp.hstack(parts, format="csr") if parts else sp.csr_matrix((n, 0))
    b = np.concatenate(bvec) if bvec else np.zeros(0)
    return ParametricDual(plp, G, b, tuple(blocks), tuple(stat))


# ---------------------------------------------------------------------------
# robust QP


@dataclass(frozen=True, eq=False)
class RobustProblem:
    graph: FeatureGraph
    truth: Labeling
    C: float
    budget: AttackBudget
    qp: object  # ConvexQP
    dual: ParametricDual

    @property
    def dual_map(self) -> dict:
        """Dual block name -> attacker-LP row family (or ``ub:<block>`` for bounds) it dualizes."""
        return {name: src for name, _, _, src in self.dual.dual_blocks}

    def split(self, x):
        nw = self.dual.primal.n_params
        return x[:nw], x[nw:]

    def weights(self, sol: Solution) -> Weights:
        wvec, _ = self.split(sol.x)
        wvec = wvec.copy()
        K, d = self.truth.K, self.graph.d_n
        wvec[K * d :] = np.maximum(wvec[K * d :], 0.0)
        return Weights.from_vector(wvec, K, d)

    def inner_value(self, sol: Solution) -> float:
        """``sum t_i + sum p_ij + (D- - |E|) t_D + ... + const`` at the solution."""
        wvec, dvec = self.split(sol.x)
        return self.dual.inner_value(wvec, dvec)


def build_robust_qp(graph: FeatureGraph, truth: Labeling, C: float, budget: AttackBudget) -> RobustProblem:
    """``min 1/2 ||w||^2 + C * (dual of the attacker LP)`` with ``w_e >= 0``."""
    if not C > 0:
        raise ValueError("C must be positive")
    K, d = truth.K, graph.d_n
    plp = attacker_template(graph, truth, budget, K=K)
    dual = dualize_parametric_lp(plp)
    nw = plp.n_params
    b = ProgramBuilder()
    lower = np.concatenate([np.full(K * d, -np.inf), np.zeros(K)])
    b.add_block("w", nw, lower, np.inf)
    dual._add_dual_blocks(b)
    M = sp.hstack([-plp.Cw, dual.G], format="csr")
    dual._add_stat_rows(b, M, plp.c0)
    n = b.n_vars
    P = sp.diags(np.concatenate([np.ones(nw), np.zeros(n - nw)]), format="csr")
    c = C * np.concatenate([plp.offw, dual.b])
    qp = b.build_qp(P, c, C * plp.off0)
    return RobustProblem(graph, truth, float(C), budget, qp, dual)


def train(graph: FeatureGraph, truth: Labeling, C: float, budget: AttackBudget | None = None,
          tol: float = QP_TOL) -> Weights:
    """Robust max-margin training; ``budget=None`` or a zero budget gives standard AMN training."""
    budget = AttackBudget(0) if budget is None else budget
    prob = build_robust_qp(graph, truth, C, budget)
    sol = require_optimal(solve_qp(prob.qp, tol), "robust training QP")
    return prob.weights(sol)


def train_with_problem(graph, truth, C, budget, tol: float = QP_TOL):
    prob = build_robust_qp(graph, truth, C, budget)
    sol = require_optimal(solve_qp(prob.qp, tol), "robust training QP")
    return prob, sol


def objective_value(w: Weights, C: float, inner: float) -> float:
    """``1/2 ||w||^2 + C * inner``: the training objective for a given inner maximum."""
    return 0.5 * w.norm_sq() + C * inner


def theorem2_bound(w: Weights, C: float, n_edges: int, K: int, additions: int = 0) -> float:
    """Gap bound ``(K+3) C (|E| + K D+) eps / (K+4)`` with ``eps = max_k w_e^k``."""
    eps = float(w.edge.max(initial=0.0))
    return (K + 3) * C * (n_edges + K * additions) * eps / (K + 4)


# ---------------------------------------------------------------------------
# model selection


class CVResult(NamedTuple):
    C: float
    b: float
    table: dict  # (C, b) -> mean validation accuracy


def _fold_budget(frac, n_edges, variant):
    return AttackBudget.from_fraction(frac, n_edges, variant)


def node_folds(n_nodes: int, folds: int, seed: int = 0, labels=None) -> list[np.ndarray]:
    """Seeded partition of ``range(n_nodes)`` into ``folds`` sorted index arrays.

    With ``labels`` the folds are stratified: nodes are shuffled within each
    label and dealt round-robin, so every fold sees the same class balance.
    """
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if n_nodes < folds:
        raise ValueError(f"a fold is empty: {n_nodes} nodes cannot fill {folds} folds")
    rng = np.random.default_rng(seed)
    if labels is None:
        order = rng.permutation(n_nodes)
    else:
        labels = np.asarray(labels)
        order = np.concatenate([rng.permutation(np.flatnonzero(labels == k)) for k in np.unique(labels)])
    return [np.sort(order[f::folds]) for f in range(folds)]


def fold_splits(graph: FeatureGraph, truth: Labeling, folds: int, seed: int = 0):
    """``(train graph, train labels, validation graph, validation labels)`` per fold, induced subgraphs."""
    parts = node_folds(graph.n_nodes, folds, seed, truth.labels)
    out = []
    for f, val in enumerate(parts):
        tr = np.sort(np.concatenate([p for g, p in enumerate(parts) if g != f]))
        out.append((graph.subgraph(tr), truth.subset(tr), graph.subgraph(val), truth.subset(val)))
    return out


def cross_validate(graph: FeatureGraph, truth: Labeling, C_grid, b_grid, folds: int = 3, seed: int = 0,
                   variant: str = "D", attack_frac: float = 0.1, trials: int = 20) -> CVResult:
    """Grid search over ``(C, b)`` with label-stratified node folds and an attacked validation part.

    Each validation part is attacked with :func:`generate_attack` at budget
    ``attack_frac`` using the fold model's own weights; ``attack_frac=0``
    scores clean validation accuracy.  Ties go to the smaller ``C``, then the
    smaller ``b``.
    """
    C_grid = sorted({float(c) for c in C_grid})
    b_grid = sorted({float(b) for b in b_grid})
    if not C_grid or not b_grid:
        raise ValueError("empty hyperparameter grid")
    splits = fold_splits(graph, truth, folds, seed)
    table = {}
    for C in C_grid:
        for b in b_grid:
            accs = []
            for f, (gtr, ytr, gva, yva) in enumerate(splits):
                w = train(gtr, ytr, C, _fold_budget(b, gtr.n_edges, variant))
                att = _fold_budget(attack_frac, gva.n_edges, variant)
                if att.deletions or att.additions:
                    plan = generate_attack(w, gva, yva, att, trials=trials, seed=seed + f)
                    gva = apply_attack(gva, plan)
                pred = map_inference(w, gva, seed=seed).labeling
                accs.append(accuracy(pred, yva))
            table[(C, b)] = float(np.mean(accs))
    best = max(table.items(), key=lambda kv: (kv[1], -kv[0][0], -kv[0][1]))
    return CVResult(best[0][0], best[0][1], table)

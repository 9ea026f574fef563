"""Structural attacks on a trained AMN.

The attacker picks labels ``y``, kept-edge indicators ``e`` (and, for the
add/delete variant, added non-edges ``a`` drawn from pairs with differing true
labels) to maximise the loss-augmented margin violation

    A(y, e, a) = const + sum_i sum_k (w_n^k.x_i - yhat_i^k) y_i^k
               + sum_E  sum_k w_e^k (y_i^k y_j^k - yhat_i^k yhat_j^k) e_ij
               + sum_Ebar sum_k w_e^k y_i^k y_j^k a_ij

with ``const = N - sum_i w_n^{yhat_i}.x_i`` so that ``A`` is exactly the
inner value of the robust learning constraint.  Optimal attacks come from the
LP relaxation (trilinear terms replaced by capped agreement variables) and
randomized rounding followed by coefficient-ordered edge selection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from . import kernels
from .amn import Weights, node_potentials
from .graph import AttackBudget, AttackPlan, FeatureGraph, Labeling, reduced_nonedges
from .solvers import LP_TOL, LinearProgram, ProgramBuilder, require_optimal, solve_lp

BRUTE_FORCE_LIMIT = 10**8


class InstanceTooLarge(ValueError):
    pass


# ---------------------------------------------------------------------------
# objective terms


@dataclass(frozen=True, eq=False)
class AttackerObjectiveTerms:
    node: np.ndarray  # (N, K): w_n^k.x_i - yhat_i^k
    edge_w: np.ndarray  # (K,): agreement coefficients
    hat_agree: np.ndarray  # (m,): sum_k w_e^k yhat_i^k yhat_j^k; e_ij carries -hat_agree
    constant: float
    edges: np.ndarray
    nonedges: np.ndarray

    @classmethod
    def build(cls, w: Weights, graph: FeatureGraph, truth: Labeling, nonedges=None) -> "AttackerObjectiveTerms":
        if np.any(w.edge < 0):
            raise ValueError("agreement coefficients must be nonnegative")
        phi = node_potentials(w, graph)
        Yh = truth.onehot()
        yh = truth.labels
        a, b = yh[graph.edges[:, 0]], yh[graph.edges[:, 1]]
        hat_agree = np.where(a == b, w.edge[a], 0.0)
        constant = graph.n_nodes - float(phi[np.arange(graph.n_nodes), yh].sum())
        if nonedges is None:
            nonedges = np.zeros((0, 2), dtype=np.int64)
        return cls(phi - Yh, w.edge.copy(), hat_agree, constant, graph.edges, np.asarray(nonedges, dtype=np.int64))

    def edge_coefficients(self, labels: np.ndarray) -> np.ndarray:
        """Coefficient of each ``e_ij`` with labels fixed; works on ``(N,)`` or ``(T, N)``."""
        a, b = labels[..., self.edges[:, 0]], labels[..., self.edges[:, 1]]
        return np.where(a == b, self.edge_w[a], 0.0) - self.hat_agree

    def addition_gains(self, labels: np.ndarray) -> np.ndarray:
        a, b = labels[..., self.nonedges[:, 0]], labels[..., self.nonedges[:, 1]]
        return np.where(a == b, self.edge_w[a], 0.0)

    def value(self, labels, keep, add=None) -> np.ndarray | float:
        """Integral objective ``A`` for labels ``(.., N)``, keep mask ``(.., m)``, add mask ``(.., q)``."""
        labels = np.asarray(labels)
        N = self.node.shape[0]
        v = self.constant + self.node[np.arange(N), labels].sum(axis=-1)
        v = v + (self.edge_coefficients(labels) * np.asarray(keep, float)).sum(axis=-1)
        if add is not None and self.nonedges.size:
            v = v + (self.addition_gains(labels) * np.asarray(add, float)).sum(axis=-1)
        return v

    def relaxed_parts(self, Y, e, z, zbar=None) -> tuple[float, float]:
        """Split of the relaxed objective into the part linear in ``(y, e)`` and the agreement part."""
        a1 = self.constant + float((self.node * Y).sum()) - float(self.hat_agree @ e)
        a2 = float((z * self.edge_w[None, :]).sum())
        if zbar is not None and zbar.size:
            a2 += float((zbar * self.edge_w[None, :]).sum())
        return a1, a2


# ---------------------------------------------------------------------------
# the relaxation


@dataclass(frozen=True, eq=False)
class ParametricLP:
    """``max (c0 + Cw w)'x + off0 + offw'w`` over a fixed constraint structure.

    ``structure`` carries the blocks, bounds and rows; its own objective is
    ignored.  Only the objective depends on the weight vector ``w``.
    """

    structure: LinearProgram
    c0: np.ndarray
    Cw: sp.csr_matrix
    off0: float
    offw: np.ndarray

    @property
    def n_params(self) -> int:
        return self.Cw.shape[1]

    def at(self, wvec) -> LinearProgram:
        wvec = np.asarray(wvec, float)
        s = self.structure
        return LinearProgram(
            blocks=s.blocks,
            lower=s.lower,
            upper=s.upper,
            c=self.c0 + self.Cw @ wvec,
            sense="max",
            A_eq=s.A_eq,
            b_eq=s.b_eq,
            A_ub=s.A_ub,
            b_ub=s.b_ub,
            families=s.families,
            offset=self.off0 + float(self.offw @ wvec),
        )


def _param_index(K, d_n):
    node = np.arange(K * d_n).reshape(K, d_n)
    edge = K * d_n + np.arange(K)
    return node, edge


def attacker_template(graph: FeatureGraph, truth: Labeling, budget: AttackBudget, K: int | None = None,
                      nonedges=None) -> ParametricLP:
    """Relaxed attacker LP with the objective left affine in the weight vector.

    Variable blocks: ``y`` (N*K), ``e`` (m), ``z`` (m*K) and for the AD variant
    ``ebar`` (q), ``zbar`` (q*K).  Row families: ``simplex`` (=),
    ``cap_i``/``cap_j``/``cap_e`` (agreement caps), ``budget_del``, and for AD
    ``capbar_i``/``capbar_j``/``capbar_e``/``budget_add``; ``degree`` when a
    degree cap is set.
    """
    K = truth.K if K is None else K
    N, m, d = graph.n_nodes, graph.n_edges, graph.d_n
    if budget.deletions > m:
        raise ValueError(f"deletion budget {budget.deletions} exceeds the {m} available edges")
    ad = budget.variant == "AD"
    if ad and nonedges is None:
        nonedges = reduced_nonedges(graph, truth)
    nonedges = np.zeros((0, 2), dtype=np.int64) if not ad else np.asarray(nonedges, dtype=np.int64)
    q = nonedges.shape[0]

    b = ProgramBuilder()
    yv = b.add_block("y", N * K).reshape(N, K)
    ev = b.add_block("e", m, 0.0, 1.0)
    zv = b.add_block("z", m * K).reshape(m, K)
    if ad:
        ebv = b.add_block("ebar", q, 0.0, 1.0)
        zbv = b.add_block("zbar", q * K).reshape(q, K)

    b.add_rows("simplex", N, np.repeat(np.arange(N), K), yv.ravel(), 1.0, 1.0, "=")

    def caps(prefix, zblk, pairs, indicator):
        n = zblk.size
        rows = np.arange(n)
        ones = np.ones(n)
        for name, other in (
            ("i", yv[pairs[:, 0]].ravel()),
            ("j", yv[pairs[:, 1]].ravel()),
            ("e", np.repeat(indicator, K)),
        ):
            b.add_rows(f"{prefix}_{name}", n, np.concatenate([rows, rows]), np.concatenate([zblk.ravel(), other]),
                       np.concatenate([ones, -ones]), 0.0, "<=")

    caps("cap", zv, graph.edges, ev)
    # |E| - sum e <= D-
    b.add_rows("budget_del", 1, np.zeros(m, dtype=np.int64), ev, -1.0, budget.deletions - m, "<=")
    if ad:
        caps("capbar", zbv, nonedges, ebv)
        b.add_rows("budget_add", 1, np.zeros(q, dtype=np.int64), ebv, 1.0, budget.additions, "<=")
    if budget.degree_cap is not None:
        # deletions and additions touching node v: sum (1 - e) + sum ebar <= cap
        rows = [graph.edges[:, 0], graph.edges[:, 1]]
        cols = [ev, ev]
        vals = [-np.ones(m), -np.ones(m)]
        if ad:
            rows += [nonedges[:, 0], nonedges[:, 1]]
            cols += [ebv, ebv]
            vals += [np.ones(q), np.ones(q)]
        deg = graph.degrees()
        b.add_rows("degree", N, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
                   budget.degree_cap - deg, "<=")

    structure = b.build_lp(np.zeros(b.n_vars), "max")
    n = b.n_vars
    node_idx, edge_idx = _param_index(K, d)
    Yh = truth.onehot() if truth.K == K else np.eye(K)[truth.labels]
    c0 = np.zeros(n)
    c0[yv.ravel()] = -Yh.ravel()
    rows, cols, vals = [], [], []
    # y_i^k : x_i . w_n^k
    Xr, Xc = np.nonzero(graph.X)
    for k in range(K):
        rows.append(yv[Xr, k])
        cols.append(node_idx[k, Xc])
        vals.append(graph.X[Xr, Xc])
    # e_ij : -w_e^k when both true labels equal k
    yh = truth.labels
    same = yh[graph.edges[:, 0]] == yh[graph.edges[:, 1]]
    rows.append(ev[same])
    cols.append(edge_idx[yh[graph.edges[same, 0]]])
    vals.append(-np.ones(int(same.sum())))
    # z_ij^k, zbar_ij^k : w_e^k
    rows.append(zv.ravel())
    cols.append(np.tile(edge_idx, m))
    vals.append(np.ones(m * K))
    if ad:
        rows.append(zbv.ravel())
        cols.append(np.tile(edge_idx, q))
        vals.append(np.ones(q * K))
    Cw = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, K * d + K))
    offw = np.zeros(K * d + K)
    offw[: K * d] = -(Yh.T @ graph.X).ravel()
    return ParametricLP(structure, c0, Cw, float(N), offw)


@dataclass(frozen=True, eq=False)
class AttackerLP:
    lp: LinearProgram
    template: ParametricLP
    terms: AttackerObjectiveTerms
    budget: AttackBudget

    @property
    def nonedges(self) -> np.ndarray:
        return self.terms.nonedges


def build_attacker_lp(w: Weights, graph: FeatureGraph, truth: Labeling, budget: AttackBudget) -> AttackerLP:
    nonedges = reduced_nonedges(graph, truth) if budget.variant == "AD" else None
    tpl = attacker_template(graph, truth, budget, K=w.K, nonedges=nonedges)
    terms = AttackerObjectiveTerms.build(w, graph, truth, nonedges)
    return AttackerLP(tpl.at(w.to_vector()), tpl, terms, budget)


@dataclass(frozen=True, eq=False)
class FractionalAttack:
    Y: np.ndarray  # (N, K)
    e: np.ndarray  # (m,)
    z: np.ndarray  # (m, K)
    ebar: np.ndarray  # (q,)
    zbar: np.ndarray  # (q, K)
    objective: float
    A1: float
    A2: float

    def lower_bound(self) -> float:
        """Guaranteed expected value of rounding: ``A1 + A2 / (K + 4)``."""
        return self.A1 + self.A2 / (self.Y.shape[1] + 4)


def solve_attacker_lp(alp: AttackerLP, tol: float = LP_TOL) -> FractionalAttack:
    """Solve the relaxation and tighten the agreement variables to their caps.

    With nonnegative agreement coefficients an optimum exists with
    ``z = min(y_i, y_j, e)``; the tightened point is checked to keep the
    optimal objective.
    """
    lp = alp.lp
    sol = require_optimal(solve_lp(lp, tol), "attacker relaxation")
    K = alp.terms.node.shape[1]
    N = alp.terms.node.shape[0]
    Y = np.clip(sol.value(lp, "y").reshape(N, K), 0.0, 1.0)
    e = np.clip(sol.value(lp, "e"), 0.0, 1.0)
    E = alp.terms.edges
    z = np.minimum(np.minimum(Y[E[:, 0]], Y[E[:, 1]]), e[:, None])
    q = alp.terms.nonedges.shape[0]
    if alp.budget.variant == "AD":
        ebar = np.clip(sol.value(lp, "ebar"), 0.0, 1.0)
        NE = alp.terms.nonedges
        zbar = np.minimum(np.minimum(Y[NE[:, 0]], Y[NE[:, 1]]), ebar[:, None])
    else:
        ebar, zbar = np.zeros(0), np.zeros((0, K))
    a1, a2 = alp.terms.relaxed_parts(Y, e, z, zbar)
    scale = 1.0 + abs(sol.objective)
    if abs(a1 + a2 - sol.objective) > 1e-6 * scale:
        raise RuntimeError(
            f"tightened agreement variables changed the relaxed objective ({a1 + a2} vs {sol.objective})"
        )
    return FractionalAttack(Y, e, z, ebar, zbar, sol.objective, a1, a2)


# ---------------------------------------------------------------------------
# rounding


def rround(frac: FractionalAttack, seed=0, trials: int = 1):
    """Phase-based randomized rounding of the node labels and edge decisions.

    Returns ``labels (T, N)`` and ``keep (T, m)`` as produced by the phases,
    before any budget repair.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    Y = frac.Y / frac.Y.sum(axis=1, keepdims=True)
    labels, keep = kernels.rround(Y, frac.e, trials, rng)
    return labels, keep.astype(bool)


def repair_deletions(keep: np.ndarray, coef: np.ndarray, limit: int) -> np.ndarray:
    """Keep at most ``limit`` deletions, preferring the most negative coefficients.

    ``keep`` and ``coef`` are ``(T, m)``; ties go to the lower edge index.
    """
    keep = keep.copy()
    deleted = ~keep
    over = np.flatnonzero(deleted.sum(axis=1) > limit)
    for t in over:
        idx = np.flatnonzero(deleted[t])
        order = idx[np.lexsort((idx, coef[t, idx]))]
        keep[t, order[limit:]] = True
    return keep


def _select(values: np.ndarray, limit: int, positive: bool) -> np.ndarray:
    """Row-wise mask of up to ``limit`` strictly improving entries, best first, ties by index."""
    T, m = values.shape
    mask = np.zeros((T, m), dtype=bool)
    if limit <= 0 or m == 0:
        return mask
    key = -values if positive else values
    order = np.argsort(key, axis=1, kind="stable")[:, :limit]
    picked = np.take_along_axis(key, order, axis=1) < 0
    rows = np.repeat(np.arange(T), order.shape[1]).reshape(order.shape)
    mask[rows[picked], order[picked]] = True
    return mask


def _select_capped(c, g, terms: AttackerObjectiveTerms, budget: AttackBudget):
    """Greedy deletion then addition selection honouring a per-node degree-change cap."""
    N = terms.node.shape[0]
    deg = np.zeros(N, dtype=np.int64)
    cap = budget.degree_cap
    keep = np.ones(c.shape[0], dtype=bool)
    for r in np.lexsort((np.arange(c.shape[0]), c)):
        if (~keep).sum() >= budget.deletions or c[r] >= 0:
            break
        i, j = terms.edges[r]
        if deg[i] < cap and deg[j] < cap:
            keep[r] = False
            deg[i] += 1
            deg[j] += 1
    add = np.zeros(g.shape[0], dtype=bool)
    for r in np.lexsort((np.arange(g.shape[0]), -g)):
        if add.sum() >= budget.additions or g[r] <= 0:
            break
        i, j = terms.nonedges[r]
        if deg[i] < cap and deg[j] < cap:
            add[r] = True
            deg[i] += 1
            deg[j] += 1
    return keep, add


def semi_rround(labels: np.ndarray, terms: AttackerObjectiveTerms, budget: AttackBudget) -> np.ndarray:
    """Best edge decisions for fixed integral labels.

    With labels fixed the objective is linear in ``e``; edges are deleted in
    ascending coefficient order (ties by edge index) while the coefficient is
    negative and budget remains.  Accepts ``(N,)`` or ``(T, N)`` labels and
    returns the matching keep mask.
    """
    labels = np.asarray(labels)
    single = labels.ndim == 1
    L = labels[None, :] if single else labels
    c = terms.edge_coefficients(L)
    if budget.degree_cap is None:
        keep = ~_select(c, budget.deletions, positive=False)
    else:
        keep = np.array([_select_capped(c[t], np.zeros(0), terms, _no_add(budget))[0] for t in range(len(L))])
    return keep[0] if single else keep


def _no_add(budget):
    return AttackBudget(budget.deletions, 0, "D", budget.degree_cap)


def select_additions(labels: np.ndarray, terms: AttackerObjectiveTerms, budget: AttackBudget) -> np.ndarray:
    """Add the non-edges with the largest positive agreement gain, up to the addition budget."""
    labels = np.asarray(labels)
    single = labels.ndim == 1
    L = labels[None, :] if single else labels
    add = _select(terms.addition_gains(L), budget.additions, positive=True)
    return add[0] if single else add


class TrialBatch(NamedTuple):
    labels: np.ndarray  # (T, N)
    keep_rounded: np.ndarray  # (T, m) after budget repair
    keep: np.ndarray  # (T, m) after coefficient-ordered selection
    add: np.ndarray  # (T, q)
    values_rounded: np.ndarray  # objective with the repaired rounded edges
    values: np.ndarray  # objective of the final plans


def attack_trials(frac: FractionalAttack, terms: AttackerObjectiveTerms, budget: AttackBudget, trials: int,
                  seed=0) -> TrialBatch:
    labels, keep_raw = rround(frac, seed, trials)
    coef = terms.edge_coefficients(labels)
    keep_r = repair_deletions(keep_raw, coef, budget.deletions)
    if budget.degree_cap is None:
        keep = ~_select(coef, budget.deletions, positive=False)
        if budget.variant == "AD":
            add = _select(terms.addition_gains(labels), budget.additions, positive=True)
        else:
            add = np.zeros((trials, terms.nonedges.shape[0]), dtype=bool)
    else:
        g = terms.addition_gains(labels)
        pairs = [_select_capped(coef[t], g[t], terms, budget) for t in range(trials)]
        keep = np.array([p[0] for p in pairs]).reshape(trials, -1)
        add = np.array([p[1] for p in pairs]).reshape(trials, -1)
    v_r = terms.value(labels, keep_r)
    v = terms.value(labels, keep, add)
    if budget.degree_cap is not None:
        # the greedy under a cap is not exact; never do worse than the repaired rounding
        worse = v < v_r
        if worse.any():
            from_r = keep_r[worse]
            ok = _degree_ok(from_r, terms, budget.degree_cap)
            idx = np.flatnonzero(worse)[ok]
            keep[idx] = keep_r[idx]
            add[idx] = False
            v = terms.value(labels, keep, add)
    return TrialBatch(labels, keep_r, keep, add, v_r, v)


def _degree_ok(keep_rows, terms, cap):
    out = []
    for row in keep_rows:
        deg = np.bincount(terms.edges[~row].ravel(), minlength=terms.node.shape[0])
        out.append(deg.max(initial=0) <= cap)
    return np.array(out, dtype=bool)


def _plan_from(terms, labels, keep, add, provenance, value):
    return AttackPlan(
        terms.edges[~keep],
        terms.nonedges[add] if terms.nonedges.size else np.zeros((0, 2), dtype=np.int64),
        provenance,
        float(value),
        labeling=np.asarray(labels, dtype=np.int64),
    )


def generate_attack(w: Weights, graph: FeatureGraph, truth: Labeling, budget: AttackBudget, trials: int = 100,
                    seed=0, tol: float = LP_TOL) -> AttackPlan:
    """Best of ``trials`` rounded plans from one solve of the relaxation."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    alp = build_attacker_lp(w, graph, truth, budget)
    frac = solve_attacker_lp(alp, tol)
    batch = attack_trials(frac, alp.terms, budget, trials, seed)
    t = int(np.argmax(batch.values))
    return _plan_from(alp.terms, batch.labels[t], batch.keep[t], batch.add[t], "lp-round", batch.values[t])


# ---------------------------------------------------------------------------
# oracles and baselines


def enumeration_size(N, K, m, q, budget: AttackBudget) -> int:
    dels = sum(math.comb(m, d) for d in range(min(budget.deletions, m) + 1))
    adds = sum(math.comb(q, a) for a in range(min(budget.additions, q) + 1))
    return K**N * dels * adds


def brute_force_attack(w: Weights, graph: FeatureGraph, truth: Labeling, budget: AttackBudget,
                       limit: int = BRUTE_FORCE_LIMIT) -> tuple[Labeling, AttackPlan]:
    """Exact maximiser of the integral attacker objective by exhaustive enumeration."""
    if budget.deletions > graph.n_edges:
        raise ValueError(f"deletion budget {budget.deletions} exceeds the {graph.n_edges} available edges")
    nonedges = reduced_nonedges(graph, truth) if budget.variant == "AD" else np.zeros((0, 2), dtype=np.int64)
    size = enumeration_size(graph.n_nodes, w.K, graph.n_edges, nonedges.shape[0], budget)
    if size > limit:
        raise InstanceTooLarge(f"enumeration needs {size:.3g} points, limit is {limit:.3g}")
    terms = AttackerObjectiveTerms.build(w, graph, truth, nonedges)
    cap = -1 if budget.degree_cap is None else budget.degree_cap
    value, labels, dels, adds = kernels.brute_force_scan(
        terms.node, terms.edges, terms.edge_w, terms.hat_agree, terms.nonedges,
        budget.deletions, budget.additions, cap, terms.constant,
    )
    plan = AttackPlan(terms.edges[dels], terms.nonedges[adds] if adds.size else np.zeros((0, 2), dtype=np.int64),
                      "brute-force", value, labeling=labels)
    return Labeling(labels, w.K), plan


def heuristic_attack(graph: FeatureGraph, truth: Labeling, budget: AttackBudget, mode: str = "rs",
                     seed=0) -> AttackPlan:
    """Random baseline: delete same-label edges (``rs``), also add different-label non-edges (``rsad``)."""
    if mode not in ("rs", "rsad"):
        raise ValueError(f"unknown heuristic mode {mode!r}")
    if mode == "rs" and budget.variant != "D":
        raise ValueError("mode 'rs' only deletes edges; use a delete-only budget")
    rng = np.random.default_rng(seed)
    y = truth.labels
    same = np.flatnonzero(y[graph.edges[:, 0]] == y[graph.edges[:, 1]])
    n_del = min(budget.deletions, same.size)
    dels = graph.edges[np.sort(rng.choice(same, n_del, replace=False))] if n_del else np.zeros((0, 2), np.int64)
    shortfall = budget.deletions - n_del
    adds = np.zeros((0, 2), dtype=np.int64)
    if mode == "rsad":
        cand = reduced_nonedges(graph, truth)
        n_add = min(budget.additions, len(cand))
        if n_add:
            adds = cand[np.sort(rng.choice(len(cand), n_add, replace=False))]
        shortfall += budget.additions - n_add
    return AttackPlan(dels, adds, mode, float("nan"), shortfall)

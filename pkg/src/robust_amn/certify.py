"""Numerical certificates for the attacker relaxation and the robust QP.

Each check runs on small random instances where exact enumeration is
affordable and returns :class:`Check` records; ``certify-bounds`` on the
command line prints them and fails if any does not pass.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .amn import Weights
from .attack import brute_force_attack, build_attacker_lp, generate_attack
from .graph import AttackBudget, FeatureGraph, Labeling
from .learn import theorem2_bound, train_with_problem
from .solvers import require_optimal, solve_lp


class Check(NamedTuple):
    name: str
    instance: int
    lhs: float
    rhs: float
    tol: float
    passed: bool

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.name}[{self.instance}] lhs={self.lhs:.9g} rhs={self.rhs:.9g} tol={self.tol:g}"


def random_instance(rng: np.random.Generator, n_nodes: int, n_edges: int, d: int = 3, K: int = 2,
                    homophily: float = 0.0):
    """Random graph with exactly ``min(n_edges, C(N, 2))`` edges, features in [0, 1) and labels.

    ``homophily > 0`` makes same-label pairs ``1 + homophily`` times as likely
    to be picked, which yields nonzero learned edge weights.
    """
    i, j = np.triu_indices(n_nodes, k=1)
    m = min(n_edges, i.size)
    y = rng.integers(0, K, n_nodes)
    p = np.where(y[i] == y[j], 1.0 + homophily, 1.0)
    pick = np.sort(rng.choice(i.size, m, replace=False, p=p / p.sum()))
    X = rng.random((n_nodes, d))
    return FeatureGraph(X, np.column_stack([i[pick], j[pick]])), Labeling(y, K)


def random_weights(rng: np.random.Generator, K: int, d: int, scale: float = 1.0) -> Weights:
    return Weights(scale * rng.normal(size=(K, d)), scale * rng.random(K))


def strong_duality_checks(n: int, seed: int = 0, tol: float = 1e-5) -> list[Check]:
    """Inner value of the trained robust QP equals the attacker-LP optimum at the trained weights."""
    rng = np.random.default_rng(seed)
    out = []
    for t in range(n):
        N = int(rng.integers(4, 21))
        g, y = random_instance(rng, N, int(rng.integers(N, 2 * N + 1)))
        variant = "AD" if t % 2 else "D"
        d_del = min(int(rng.integers(0, 3)), g.n_edges)
        budget = AttackBudget(d_del, d_del if variant == "AD" else 0, variant)
        C = float(rng.choice([0.1, 1.0, 10.0]))
        prob, sol = train_with_problem(g, y, C, budget)
        w = prob.weights(sol)
        primal = require_optimal(solve_lp(build_attacker_lp(w, g, y, budget).lp), "attacker LP").objective
        inner = prob.inner_value(sol)
        out.append(Check("strong-duality", t, inner, primal, tol, abs(inner - primal) <= tol))
    return out


def sandwich_checks(n: int, seed: int = 0, trials: int = 1000, tol: float = 1e-6) -> list[Check]:
    """``generate_attack <= brute force <= LP`` on oracle-sized instances."""
    rng = np.random.default_rng(seed)
    out = []
    for t in range(n):
        N = int(rng.integers(3, 9))
        g, y = random_instance(rng, N, int(rng.integers(1, 11)))
        w = random_weights(rng, 2, g.d_n)
        variant = "AD" if t % 3 == 2 else "D"
        d_del = min(int(rng.integers(0, 3)), g.n_edges)
        budget = AttackBudget(d_del, min(d_del, 1) if variant == "AD" else 0, variant)
        lp = require_optimal(solve_lp(build_attacker_lp(w, g, y, budget).lp), "attacker LP").objective
        _, exact = brute_force_attack(w, g, y, budget)
        plan = generate_attack(w, g, y, budget, trials=trials, seed=seed + t)
        out.append(Check("brute<=lp", t, exact.objective, lp, tol, exact.objective <= lp + tol))
        out.append(Check("round<=brute", t, plan.objective, exact.objective, tol, plan.objective <= exact.objective + tol))
    return out


def theorem2_checks(n: int, seed: int = 0, tol: float = 1e-6) -> list[Check]:
    """``C * (LP inner max - exact inner max)`` at the trained weights stays below the gap bound."""
    rng = np.random.default_rng(seed)
    out = []
    for t in range(n):
        N = int(rng.integers(4, 9))
        g, y = random_instance(rng, N, int(rng.integers(2, 9)), homophily=20.0)
        variant = "AD" if t % 2 else "D"
        d_del = min(int(rng.integers(0, 3)), g.n_edges)
        budget = AttackBudget(d_del, 1 if variant == "AD" else 0, variant)
        C = float(rng.choice([0.5, 1.0, 5.0]))
        prob, sol = train_with_problem(g, y, C, budget)
        w = prob.weights(sol)
        relaxed = require_optimal(solve_lp(build_attacker_lp(w, g, y, budget).lp), "attacker LP").objective
        _, exact = brute_force_attack(w, g, y, budget)
        gap = C * (relaxed - exact.objective)
        bound = theorem2_bound(w, C, g.n_edges, 2, budget.additions)
        out.append(Check(f"theorem2-{variant}", t, gap, bound, tol, gap <= bound + tol))
    return out


def certify(n: int = 10, seed: int = 0, trials: int = 1000) -> list[Check]:
    return strong_duality_checks(n, seed) + sandwich_checks(n, seed, trials) + theorem2_checks(n, seed)

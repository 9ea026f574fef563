import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import attacker_value, exhaustive_attack
from robust_amn.amn import Weights
from robust_amn.attack import (
    AttackerObjectiveTerms,
    InstanceTooLarge,
    attack_trials,
    brute_force_attack,
    build_attacker_lp,
    generate_attack,
    heuristic_attack,
    repair_deletions,
    rround,
    select_additions,
    semi_rround,
    solve_attacker_lp,
)
from robust_amn.certify import random_instance, random_weights
from robust_amn.graph import AttackBudget, FeatureGraph, Labeling, reduced_nonedges
from robust_amn.solvers import solve_lp


def _tiny(seed, N=6, m=7):
    rng = np.random.default_rng(seed)
    g, y = random_instance(rng, N, m)
    return g, y, random_weights(rng, 2, g.d_n), rng


def _two_node():
    g = FeatureGraph(np.ones((2, 1)), [(0, 1)])
    y = Labeling(np.array([0, 0]), 2)
    w = Weights(np.zeros((2, 1)), [1.0, 0.0])
    return g, y, w


def test_two_node_example_deletes_the_edge():
    g, y, w = _two_node()
    alp = build_attacker_lp(w, g, y, AttackBudget(1))
    frac = solve_attacker_lp(alp)
    assert frac.objective == pytest.approx(2.0)
    assert frac.e == pytest.approx([0.0])
    _, plan = brute_force_attack(w, g, y, AttackBudget(1))
    assert plan.objective == pytest.approx(2.0)
    assert plan.deletions.tolist() == [[0, 1]]
    assert attacker_value(w.node, w.edge, g.X, g.edges, y.labels, (1, 1), [(0, 1)]) == pytest.approx(2.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_zero_budget_lp_equals_inner_margin_max(seed):
    g, y, w, _ = _tiny(seed)
    lp = solve_lp(build_attacker_lp(w, g, y, AttackBudget(0)).lp).objective
    exact = exhaustive_attack(w.node, w.edge, g.X, g.edges, y.labels, 2, 0)
    assert lp == pytest.approx(exact, abs=1e-7)  # K = 2: the relaxation is tight


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 2), st.booleans())
def test_brute_force_matches_definition_oracle(seed, d, ad):
    g, y, w, _ = _tiny(seed, N=5, m=5)
    budget = AttackBudget(min(d, g.n_edges), 1 if ad else 0, "AD" if ad else "D")
    _, plan = brute_force_attack(w, g, y, budget)
    ne = reduced_nonedges(g, y) if ad else []
    expect = exhaustive_attack(w.node, w.edge, g.X, g.edges, y.labels, 2, budget.deletions, ne, budget.additions)
    assert plan.objective == pytest.approx(expect, abs=1e-9)
    value = attacker_value(w.node, w.edge, g.X, g.edges, y.labels, plan.labeling, plan.deletions, plan.additions)
    assert value == pytest.approx(plan.objective, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 3), st.sampled_from(["D", "AD"]))
def test_relaxation_sandwich(seed, d, variant):
    rng = np.random.default_rng(seed)
    g, y = random_instance(rng, 8, 10)
    w = random_weights(rng, 2, g.d_n)
    budget = AttackBudget(min(d, g.n_edges), 1 if variant == "AD" else 0, variant)
    lp = solve_lp(build_attacker_lp(w, g, y, budget).lp).objective
    _, exact = brute_force_attack(w, g, y, budget)
    plan = generate_attack(w, g, y, budget, trials=50, seed=seed)
    assert exact.objective <= lp + 1e-7
    assert plan.objective <= exact.objective + 1e-9
    assert plan.respects(budget)
    ne = {tuple(p) for p in reduced_nonedges(g, y)}
    assert all(tuple(p) in ne for p in plan.additions)
    assert all(tuple(p) in g.edge_set() for p in plan.deletions)


def test_budget_infeasible():
    g, y, w = _two_node()
    with pytest.raises(ValueError):
        build_attacker_lp(w, g, y, AttackBudget(2))


def test_fractional_point_is_feasible_and_tight():
    g, y, w, _ = _tiny(3, N=8, m=12)
    budget = AttackBudget(3, 2, "AD")
    frac = solve_attacker_lp(build_attacker_lp(w, g, y, budget))
    assert np.allclose(frac.Y.sum(axis=1), 1.0)
    assert g.n_edges - frac.e.sum() <= 3 + 1e-7
    assert frac.ebar.sum() <= 2 + 1e-7
    E = g.edges
    assert np.allclose(frac.z, np.minimum(np.minimum(frac.Y[E[:, 0]], frac.Y[E[:, 1]]), frac.e[:, None]))
    assert frac.A1 + frac.A2 == pytest.approx(frac.objective)


def _terms_with_coefficients(c):
    """Path graph whose edge coefficients under the all-zero labeling are exactly ``c``."""
    m = len(c)
    g = FeatureGraph(np.ones((m + 1, 1)), [(i, i + 1) for i in range(m)])
    terms = AttackerObjectiveTerms(
        np.zeros((m + 1, 2)), np.zeros(2), -np.asarray(c, float), 0.0, g.edges, np.zeros((0, 2), np.int64)
    )
    return terms, np.zeros(m + 1, dtype=np.int64)


def test_semi_rround_examples():
    terms, y = _terms_with_coefficients([-3.0, -1.0, 2.0])
    assert semi_rround(y, terms, AttackBudget(1)).tolist() == [False, True, True]
    assert semi_rround(y, terms, AttackBudget(3)).tolist() == [False, False, True]
    terms, y = _terms_with_coefficients([0.0, 1.0, 2.0])
    assert semi_rround(y, terms, AttackBudget(2)).all()


def test_semi_rround_tie_breaks_by_index():
    terms, y = _terms_with_coefficients([-1.0, -2.0, -1.0, -1.0])
    assert semi_rround(y, terms, AttackBudget(2)).tolist() == [False, False, True, True]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_semi_rround_is_optimal_over_subsets(seed):
    from itertools import combinations

    g, y, w, rng = _tiny(seed, N=7, m=9)
    terms = AttackerObjectiveTerms.build(w, g, y)
    labels = rng.integers(0, 2, g.n_nodes)
    keep = semi_rround(labels, terms, AttackBudget(3))
    best = max(
        terms.value(labels, np.isin(np.arange(g.n_edges), s, invert=True))
        for r in range(4)
        for s in combinations(range(g.n_edges), r)
    )
    assert terms.value(labels, keep) == pytest.approx(best)


def test_repair_keeps_most_negative_deletions():
    keep = np.array([[False, False, False, True]])
    coef = np.array([[-1.0, -5.0, -2.0, -9.0]])
    out = repair_deletions(keep, coef, 2)
    assert out.tolist() == [[True, False, False, True]]


def test_rround_returns_integral_point_unchanged():
    g, y, w, _ = _tiny(1)
    frac = solve_attacker_lp(build_attacker_lp(w, g, y, AttackBudget(0)))
    assert np.allclose(frac.Y, np.round(frac.Y), atol=1e-9)
    labels, keep = rround(frac, seed=0, trials=20)
    assert np.all(labels == np.argmax(np.round(frac.Y), axis=1))
    assert keep.all()


def test_trials_never_worse_than_their_rounding():
    g, y, w, _ = _tiny(5, N=8, m=12)
    budget = AttackBudget(3)
    alp = build_attacker_lp(w, g, y, budget)
    frac = solve_attacker_lp(alp)
    batch = attack_trials(frac, alp.terms, budget, 200, seed=1)
    assert np.all(batch.values >= batch.values_rounded - 1e-12)
    assert np.all((~batch.keep_rounded).sum(axis=1) <= 3)


def test_additions_take_largest_gains():
    g = FeatureGraph(np.ones((4, 1)), [(0, 1)])
    y = Labeling(np.array([0, 0, 1, 1]), 2)
    w = Weights(np.zeros((2, 1)), [2.0, 1.0])
    terms = AttackerObjectiveTerms.build(w, g, y, reduced_nonedges(g, y))
    labels = np.array([0, 0, 0, 1])
    add = select_additions(labels, terms, AttackBudget(0, 1, "AD"))
    assert [tuple(p) for p in terms.nonedges[add]] == [(0, 2)]


def test_zero_budget_plan_is_empty():
    g, y, w, _ = _tiny(2)
    plan = generate_attack(w, g, y, AttackBudget(0, 0, "AD"), trials=5)
    assert plan.n_deletions == plan.n_additions == 0
    lp = solve_lp(build_attacker_lp(w, g, y, AttackBudget(0)).lp).objective
    assert plan.objective == pytest.approx(lp, abs=1e-7)


def test_degree_cap_is_respected():
    rng = np.random.default_rng(0)
    g, y = random_instance(rng, 8, 14)
    w = random_weights(rng, 2, g.d_n)
    budget = AttackBudget(4, 2, "AD", degree_cap=1)
    plan = generate_attack(w, g, y, budget, trials=30)
    touched = np.bincount(np.concatenate([plan.deletions.ravel(), plan.additions.ravel()]).astype(int),
                          minlength=g.n_nodes)
    assert touched.max(initial=0) <= 1
    _, exact = brute_force_attack(w, g, y, budget)
    assert plan.objective <= exact.objective + 1e-9


def test_brute_force_size_guard():
    rng = np.random.default_rng(0)
    g, y = random_instance(rng, 30, 40)
    with pytest.raises(InstanceTooLarge):
        brute_force_attack(random_weights(rng, 2, g.d_n), g, y, AttackBudget(2))


def test_theorem1_bound_holds_in_expectation():
    g, y, w, _ = _tiny(11, N=8, m=12)
    budget = AttackBudget(2)
    alp = build_attacker_lp(w, g, y, budget)
    frac = solve_attacker_lp(alp)
    batch = attack_trials(frac, alp.terms, budget, 500, seed=0)
    se = batch.values.std(ddof=1) / np.sqrt(500)
    assert batch.values.mean() >= frac.lower_bound() - 3 * se


# heuristic baselines


def test_rs_without_candidates_records_shortfall():
    g = FeatureGraph(np.ones((2, 1)), [(0, 1)])
    y = Labeling(np.array([0, 1]), 2)
    plan = heuristic_attack(g, y, AttackBudget(1), "rs", seed=0)
    assert plan.n_deletions == 0 and plan.shortfall == 1


def test_rsad_is_deterministic():
    g = FeatureGraph(np.ones((4, 1)), [(0, 1), (2, 3)])
    y = Labeling(np.array([0, 0, 1, 1]), 2)
    b = AttackBudget(1, 1, "AD")
    p1 = heuristic_attack(g, y, b, "rsad", seed=4)
    p2 = heuristic_attack(g, y, b, "rsad", seed=4)
    assert p1.to_text() == p2.to_text()
    assert p1.n_deletions == 1 and p1.n_additions == 1
    with pytest.raises(ValueError):
        heuristic_attack(g, y, b, "rs")


def test_rs_only_deletes_same_label_edges():
    rng = np.random.default_rng(0)
    g, y = random_instance(rng, 20, 60)
    for seed in range(1000):
        plan = heuristic_attack(g, y, AttackBudget(5), "rs", seed=seed)
        assert np.all(y.labels[plan.deletions[:, 0]] == y.labels[plan.deletions[:, 1]])

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from robust_amn.solvers import (
    INFEASIBLE,
    OPTIMAL,
    ProgramBuilder,
    SolverError,
    check_kkt,
    require_optimal,
    solve_lp,
    solve_qp,
    write_lp_file,
)


def _box_lp(c, sense="max"):
    b = ProgramBuilder()
    x = b.add_block("x", len(c), 0.0, 1.0)
    b.add_rows("sum", 1, np.zeros(len(c), dtype=np.int64), x, 1.0, 1.5, "<=")
    return b.build_lp(np.asarray(c, float), sense)


def test_textbook_lp_and_duals():
    # max x s.t. x <= 1, x >= 0: dual lambda = 1
    b = ProgramBuilder()
    x = b.add_block("x", 1)
    b.add_rows("cap", 1, [0], x, 1.0, 1.0, "<=")
    lp = b.build_lp(np.array([1.0]), "max")
    sol = solve_lp(lp)
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(1.0)
    assert sol.dual(lp, "cap") == pytest.approx([1.0])
    assert check_kkt(lp, sol, 1e-9).passed


def test_offset_is_part_of_objective():
    lp = _box_lp([1.0, 2.0])
    lp2 = ProgramBuilder()
    x = lp2.add_block("x", 2, 0.0, 1.0)
    lp2.add_rows("sum", 1, [0, 0], x, 1.0, 1.5, "<=")
    lp2 = lp2.build_lp(np.array([1.0, 2.0]), "max", offset=3.0)
    assert solve_lp(lp2).objective == pytest.approx(solve_lp(lp).objective + 3.0)


def test_ge_rows_and_equalities():
    # min x + y s.t. x + y >= 2, x - y = 0 -> x = y = 1
    b = ProgramBuilder()
    v = b.add_block("v", 2)
    b.add_rows("cover", 1, [0, 0], v, 1.0, 2.0, ">=")
    b.add_rows("bal", 1, [0, 0], v, [1.0, -1.0], 0.0, "=")
    lp = b.build_lp(np.ones(2), "min")
    sol = require_optimal(solve_lp(lp))
    assert sol.x == pytest.approx([1.0, 1.0])
    assert sol.residuals.passed


def test_infeasible_lp_reported():
    b = ProgramBuilder()
    x = b.add_block("x", 1, 0.0, 1.0)
    b.add_rows("big", 1, [0], x, 1.0, 2.0, ">=")
    sol = solve_lp(b.build_lp(np.ones(1), "max"))
    assert sol.status == INFEASIBLE
    with pytest.raises(SolverError):
        require_optimal(sol)


def test_qp_projection():
    # min 1/2 w^2 s.t. w >= 2
    b = ProgramBuilder()
    w = b.add_block("w", 1, -np.inf, np.inf)
    b.add_rows("lb", 1, [0], w, 1.0, 2.0, ">=")
    qp = b.build_qp(sp.eye(1), np.zeros(1))
    sol = require_optimal(solve_qp(qp))
    assert sol.x == pytest.approx([2.0], abs=1e-7)
    assert sol.objective == pytest.approx(2.0, abs=1e-6)
    assert sol.residuals.passed


def test_qp_rejects_asymmetric_matrix():
    b = ProgramBuilder()
    b.add_block("w", 2)
    with pytest.raises(ValueError):
        b.build_qp(sp.csr_matrix(np.array([[1.0, 1.0], [0.0, 1.0]])), np.zeros(2))


def test_builder_validation():
    b = ProgramBuilder()
    b.add_block("x", 2)
    with pytest.raises(ValueError):
        b.add_block("x", 1)
    with pytest.raises(ValueError):
        b.add_rows("r", 1, [0], [5], 1.0, 0.0)
    with pytest.raises(ValueError):
        b.add_rows("r", 1, [0], [0], 1.0, 0.0, "<>")


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 5), st.integers(0, 10_000))
def test_random_lps_match_reference_and_certify(n, m, seed):
    rng = np.random.default_rng(seed)
    A = rng.random((m, n))
    rhs = rng.random(m) + 0.5
    c = rng.normal(size=n)
    b = ProgramBuilder()
    x = b.add_block("x", n, 0.0, 2.0)
    r, col = np.nonzero(A)
    b.add_rows("rows", m, r, x[col], A[r, col], rhs, "<=")
    lp = b.build_lp(c, "max")
    sol = require_optimal(solve_lp(lp))
    ref = linprog(-c, A_ub=A, b_ub=rhs, bounds=[(0, 2)] * n, method="highs-ipm")
    assert sol.objective == pytest.approx(-ref.fun, abs=1e-7)
    rep = check_kkt(lp, sol, 1e-7)
    assert rep.passed, str(rep)


def test_lp_dump(tmp_path):
    lp = _box_lp([1.0, -2.0])
    write_lp_file(lp, tmp_path / "p.lp")
    text = (tmp_path / "p.lp").read_text()
    assert "Maximize" in text and "Subject To" in text and text.rstrip().endswith("End")
    assert "sum_0: 1 x_0 + 1 x_1 <= 1.5" in text
    assert "0 <= x_1 <= 1" in text

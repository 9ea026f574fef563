"""Solver-agnostic LP/QP descriptions, solver back ends and an independent KKT check.

Problems are assembled with :class:`ProgramBuilder` from named variable blocks
and named constraint families, then frozen into an immutable
:class:`LinearProgram` or :class:`ConvexQP`.  Inequality rows are stored in
``A_ub x <= b_ub`` form; ``>=`` rows are negated on insertion.

Multipliers on a :class:`Solution` always follow the minimisation-form
Lagrangian (a maximisation is solved as ``min -c``)::

    L = f(x) + lam_eq.(A_eq x - b_eq) + lam_ub.(A_ub x - b_ub)
             - mu_lo.(x - lo) + mu_up.(x - up)

with ``lam_ub, mu_lo, mu_up >= 0``.  :func:`check_kkt` recomputes every
residual from the problem data and never trusts the back end's own report.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

LP_TOL = 1e-8
QP_TOL = 1e-7

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_FAILURE = "numerical-failure"


class SolverError(RuntimeError):
    """Raised by callers that require an optimal solution and did not get one."""

    def __init__(self, message: str, solution: "Solution | None" = None):
        super().__init__(message)
        self.solution = solution


@dataclass(frozen=True)
class VarBlock:
    name: str
    start: int
    size: int

    @property
    def slice(self) -> slice:
        return slice(self.start, self.start + self.size)


@dataclass(frozen=True)
class RowFamily:
    name: str
    kind: str  # "eq" or "ub"
    start: int
    size: int

    @property
    def slice(self) -> slice:
        return slice(self.start, self.start + self.size)


@dataclass(frozen=True, eq=False)
class LinearProgram:
    blocks: tuple[VarBlock, ...]
    lower: np.ndarray
    upper: np.ndarray
    c: np.ndarray
    sense: str
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_ub: sp.csr_matrix
    b_ub: np.ndarray
    families: tuple[RowFamily, ...]
    offset: float = 0.0

    def __post_init__(self):
        n = self.n_vars
        if self.sense not in ("max", "min"):
            raise ValueError(f"unknown objective sense {self.sense!r}")
        if self.c.shape != (n,) or self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("objective/bounds length does not match variable blocks")
        if self.A_eq.shape[1] != n or self.A_ub.shape[1] != n:
            raise ValueError("constraint rows reference undeclared variables")
        if np.any(self.lower > self.upper):
            bad = int(np.flatnonzero(self.lower > self.upper)[0])
            raise ValueError(f"lower > upper for variable {self.var_name(bad)}")
        for arr in (self.lower, self.upper, self.c, self.b_eq, self.b_ub):
            arr.setflags(write=False)

    @property
    def n_vars(self) -> int:
        return sum(b.size for b in self.blocks)

    def block(self, name: str) -> VarBlock:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    def family(self, name: str) -> RowFamily:
        for f in self.families:
            if f.name == name:
                return f
        raise KeyError(name)

    def var_name(self, index: int) -> str:
        for b in self.blocks:
            if b.start <= index < b.start + b.size:
                return f"{b.name}_{index - b.start}"
        raise IndexError(index)

    def objective(self, x: np.ndarray) -> float:
        """Objective value in the problem's own sense, offset included."""
        return float(self.c @ x) + self.offset

    def _min_form(self):
        sign = -1.0 if self.sense == "max" else 1.0
        return None, sign * self.c


@dataclass(frozen=True, eq=False)
class ConvexQP(LinearProgram):
    """``min 1/2 x'Px + c'x + offset`` under the same row/bound structure.

    ``P`` is symmetric and positive semidefinite; builders in this package only
    ever place a scaled identity on the weight block, so PSD holds by
    construction.
    """

    P: sp.csr_matrix = None

    def __post_init__(self):
        super().__post_init__()
        if self.sense != "min":
            raise ValueError("ConvexQP is always a minimisation")
        n = self.n_vars
        if self.P is None or self.P.shape != (n, n):
            raise ValueError("quadratic form has wrong shape")
        diff = abs(self.P - self.P.T)
        if diff.nnz and diff.max() > 1e-12:
            raise ValueError("quadratic form is not symmetric")

    def objective(self, x: np.ndarray) -> float:
        return 0.5 * float(x @ (self.P @ x)) + float(self.c @ x) + self.offset

    def _min_form(self):
        return self.P, self.c


@dataclass
class Solution:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    lam_eq: np.ndarray | None = None
    lam_ub: np.ndarray | None = None
    mu_lower: np.ndarray | None = None
    mu_upper: np.ndarray | None = None
    iterations: int = 0
    wall_time: float = 0.0
    message: str = ""
    residuals: "ResidualReport | None" = None

    def __post_init__(self):
        if self.status == OPTIMAL and (self.x is None or self.lam_ub is None):
            raise ValueError("optimal solution must carry primal and dual values")

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def value(self, problem: LinearProgram, block: str) -> np.ndarray:
        return self.x[problem.block(block).slice]

    def dual(self, problem: LinearProgram, family: str) -> np.ndarray:
        f = problem.family(family)
        return (self.lam_eq if f.kind == "eq" else self.lam_ub)[f.slice]


@dataclass
class ResidualReport:
    primal: float
    dual: float
    stationarity: float
    complementarity: float
    gap: float
    tol: float
    worst: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return max(self.primal, self.dual, self.stationarity, self.complementarity) <= self.tol and (
            self.gap <= self.tol
        )

    def __str__(self) -> str:
        state = "pass" if self.passed else "FAIL"
        return (
            f"KKT {state} (tol={self.tol:g}): primal={self.primal:.2e} dual={self.dual:.2e} "
            f"stationarity={self.stationarity:.2e} complementarity={self.complementarity:.2e} "
            f"gap={self.gap:.2e}"
        )


class ProgramBuilder:
    """Incremental assembly of block-structured programs.

    Rows are added a family at a time in COO form with *local* row indices,
    which keeps assembly vectorised for graphs with thousands of edges.
    """

    def __init__(self):
        self._blocks: list[VarBlock] = []
        self._lower: list[np.ndarray] = []
        self._upper: list[np.ndarray] = []
        self._n = 0
        self._rows = {"eq": [], "ub": []}
        self._nrows = {"eq": 0, "ub": 0}
        self._families: list[RowFamily] = []

    def add_block(self, name: str, size: int, lower=0.0, upper=np.inf) -> np.ndarray:
        if any(b.name == name for b in self._blocks):
            raise ValueError(f"duplicate block {name!r}")
        self._blocks.append(VarBlock(name, self._n, int(size)))
        self._lower.append(np.broadcast_to(np.asarray(lower, float), (size,)).copy())
        self._upper.append(np.broadcast_to(np.asarray(upper, float), (size,)).copy())
        idx = np.arange(self._n, self._n + size)
        self._n += int(size)
        return idx

    @property
    def n_vars(self) -> int:
        return self._n

    def add_rows(self, family: str, n_rows: int, rows, cols, vals, rhs, sense: str = "<="):
        """Add ``n_rows`` constraints ``sum_j vals * x[cols] (sense) rhs``."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.broadcast_to(np.asarray(vals, float), rows.shape).astype(float)
        rhs = np.broadcast_to(np.asarray(rhs, float), (n_rows,)).astype(float)
        if rows.size and (rows.min() < 0 or rows.max() >= n_rows):
            raise ValueError(f"row index out of range in family {family!r}")
        if cols.size and (cols.min() < 0 or cols.max() >= self._n):
            raise ValueError(f"family {family!r} references an undeclared variable")
        if sense == ">=":
            vals, rhs, kind = -vals, -rhs, "ub"
        elif sense == "<=":
            kind = "ub"
        elif sense in ("=", "=="):
            kind = "eq"
        else:
            raise ValueError(f"unknown row sense {sense!r}")
        if any(f.name == family for f in self._families):
            raise ValueError(f"duplicate row family {family!r}")
        start = self._nrows[kind]
        self._rows[kind].append((rows + start, cols, vals, rhs))
        self._nrows[kind] += n_rows
        self._families.append(RowFamily(family, kind, start, n_rows))

    def _matrix(self, kind):
        parts = self._rows[kind]
        m = self._nrows[kind]
        if not parts:
            return sp.csr_matrix((0, self._n)), np.zeros(0)
        r = np.concatenate([p[0] for p in parts])
        c = np.concatenate([p[1] for p in parts])
        v = np.concatenate([p[2] for p in parts])
        b = np.concatenate([p[3] for p in parts])
        A = sp.csr_matrix((v, (r, c)), shape=(m, self._n))
        A.sum_duplicates()
        return A, b

    def _common(self, c, sense, offset):
        c = np.asarray(c, float)
        if c.shape != (self._n,):
            raise ValueError("objective length does not match variable blocks")
        A_eq, b_eq = self._matrix("eq")
        A_ub, b_ub = self._matrix("ub")
        return dict(
            blocks=tuple(self._blocks),
            lower=np.concatenate(self._lower) if self._lower else np.zeros(0),
            upper=np.concatenate(self._upper) if self._upper else np.zeros(0),
            c=c.copy(),
            sense=sense,
            A_eq=A_eq,
            b_eq=b_eq,
            A_ub=A_ub,
            b_ub=b_ub,
            families=tuple(self._families),
            offset=float(offset),
        )

    def build_lp(self, c, sense="max", offset=0.0) -> LinearProgram:
        return LinearProgram(**self._common(c, sense, offset))

    def build_qp(self, P, c, offset=0.0) -> ConvexQP:
        P = sp.csr_matrix(P)
        return ConvexQP(**self._common(c, "min", offset), P=P)


# ---------------------------------------------------------------------------
# verification


def _finite(a):
    return np.where(np.isfinite(a), a, 0.0)


def check_kkt(problem: LinearProgram, solution: Solution, tol: float) -> ResidualReport:
    """Recompute primal/dual feasibility, stationarity, complementarity and gap.

    Feasibility and complementarity residuals are absolute (max-norm).
    Stationarity is relative to ``1 + max|c|`` so that scaling the objective
    (a large trade-off weight, say) does not fail an otherwise exact point,
    and the gap is relative to ``1 + |objective|``.
    """
    if solution.status != OPTIMAL:
        raise ValueError(f"cannot check KKT conditions of a {solution.status} solution")
    n = problem.n_vars
    x = np.asarray(solution.x, float)
    lam_eq = np.asarray(solution.lam_eq, float)
    lam_ub = np.asarray(solution.lam_ub, float)
    mu_lo = np.asarray(solution.mu_lower, float)
    mu_up = np.asarray(solution.mu_upper, float)
    if (
        x.shape != (n,)
        or mu_lo.shape != (n,)
        or mu_up.shape != (n,)
        or lam_eq.shape != (problem.A_eq.shape[0],)
        or lam_ub.shape != (problem.A_ub.shape[0],)
    ):
        raise ValueError("solution blocks do not match problem blocks")

    P, q = problem._min_form()
    lo, up = problem.lower, problem.upper
    r_eq = problem.A_eq @ x - problem.b_eq
    r_ub = problem.A_ub @ x - problem.b_ub
    primal = max(
        np.abs(r_eq).max(initial=0.0),
        np.maximum(r_ub, 0).max(initial=0.0),
        np.maximum(lo - x, 0).max(initial=0.0),
        np.maximum(x - up, 0).max(initial=0.0),
    )
    # multipliers on infinite bounds must vanish
    dual = max(
        np.maximum(-lam_ub, 0).max(initial=0.0),
        np.maximum(-mu_lo, 0).max(initial=0.0),
        np.maximum(-mu_up, 0).max(initial=0.0),
        np.abs(mu_lo[~np.isfinite(lo)]).max(initial=0.0),
        np.abs(mu_up[~np.isfinite(up)]).max(initial=0.0),
    )
    grad = q.copy()
    quad = 0.0
    if P is not None:
        Px = P @ x
        grad = grad + Px
        quad = float(x @ Px)
    grad = grad + problem.A_eq.T @ lam_eq + problem.A_ub.T @ lam_ub - mu_lo + mu_up
    stationarity = float(np.abs(grad).max(initial=0.0)) / (1.0 + float(np.abs(q).max(initial=0.0)))
    complementarity = max(
        np.abs(lam_ub * r_ub).max(initial=0.0),
        np.abs(mu_lo * _finite(x - lo)).max(initial=0.0),
        np.abs(mu_up * _finite(up - x)).max(initial=0.0),
    )
    f_min = 0.5 * quad + float(q @ x)
    g_min = (
        -0.5 * quad
        - float(problem.b_eq @ lam_eq)
        - float(problem.b_ub @ lam_ub)
        + float(_finite(lo) @ mu_lo)
        - float(_finite(up) @ mu_up)
    )
    gap = abs(f_min - g_min) / (1.0 + abs(f_min))
    worst = {
        "primal_eq_row": int(np.abs(r_eq).argmax()) if r_eq.size else -1,
        "primal_ub_row": int(r_ub.argmax()) if r_ub.size else -1,
        "stationarity_var": problem.var_name(int(np.abs(grad).argmax())) if n else "",
    }
    return ResidualReport(
        primal=float(primal),
        dual=float(dual),
        stationarity=stationarity,
        complementarity=float(complementarity),
        gap=float(gap),
        tol=tol,
        worst=worst,
    )


# ---------------------------------------------------------------------------
# back ends


def solve_lp(problem: LinearProgram, tol: float = LP_TOL) -> Solution:
    """Solve with HiGHS dual simplex; duals come back in the module convention."""
    if isinstance(problem, ConvexQP):
        raise TypeError("use solve_qp for quadratic programs")
    _, q = problem._min_form()
    t0 = time.perf_counter()
    htol = float(np.clip(tol, 1e-10, 1e-7))
    bounds = np.column_stack([problem.lower, problem.upper])
    res = linprog(
        q,
        A_ub=problem.A_ub if problem.A_ub.shape[0] else None,
        b_ub=problem.b_ub if problem.A_ub.shape[0] else None,
        A_eq=problem.A_eq if problem.A_eq.shape[0] else None,
        b_eq=problem.b_eq if problem.A_eq.shape[0] else None,
        bounds=bounds,
        method="highs-ds",
        options={
            "primal_feasibility_tolerance": htol,
            "dual_feasibility_tolerance": htol,
            "presolve": True,
        },
    )
    wall = time.perf_counter() - t0
    if res.status == 2:
        return Solution(INFEASIBLE, message=res.message, wall_time=wall)
    if res.status == 3:
        return Solution(UNBOUNDED, message=res.message, wall_time=wall)
    if res.status != 0:
        return Solution(NUMERICAL_FAILURE, message=res.message, wall_time=wall)
    n = problem.n_vars
    x = np.asarray(res.x, float)
    sol = Solution(
        OPTIMAL,
        x=x,
        objective=problem.objective(x),
        lam_eq=-np.asarray(res.eqlin.marginals, float) if problem.A_eq.shape[0] else np.zeros(0),
        lam_ub=-np.asarray(res.ineqlin.marginals, float) if problem.A_ub.shape[0] else np.zeros(0),
        mu_lower=np.asarray(res.lower.marginals, float) if n else np.zeros(0),
        mu_upper=-np.asarray(res.upper.marginals, float) if n else np.zeros(0),
        iterations=int(res.nit),
        wall_time=wall,
        message=res.message,
    )
    return _certify(problem, sol, tol)


def solve_qp(problem: ConvexQP, tol: float = QP_TOL) -> Solution:
    """Solve with the Clarabel interior-point method.

    Finite variable bounds become explicit nonnegative-cone rows; their cone
    multipliers are mapped back onto ``mu_lower``/``mu_upper``.
    """
    import clarabel

    n = problem.n_vars
    lo, up = problem.lower, problem.upper
    has_lo = np.flatnonzero(np.isfinite(lo))
    has_up = np.flatnonzero(np.isfinite(up))
    m_eq, m_ub = problem.A_eq.shape[0], problem.A_ub.shape[0]
    A = sp.vstack(
        [
            problem.A_eq,
            problem.A_ub,
            sp.csr_matrix((-np.ones(has_lo.size), (np.arange(has_lo.size), has_lo)), shape=(has_lo.size, n)),
            sp.csr_matrix((np.ones(has_up.size), (np.arange(has_up.size), has_up)), shape=(has_up.size, n)),
        ],
        format="csc",
    )
    b = np.concatenate([problem.b_eq, problem.b_ub, -lo[has_lo], up[has_up]])
    cones = []
    if m_eq:
        cones.append(clarabel.ZeroConeT(m_eq))
    if m_ub + has_lo.size + has_up.size:
        cones.append(clarabel.NonnegativeConeT(m_ub + has_lo.size + has_up.size))
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    inner = min(tol, 1e-8) * 1e-2
    settings.tol_gap_abs = inner
    settings.tol_gap_rel = inner
    settings.tol_feas = inner
    settings.tol_ktratio = 1e-8
    settings.max_iter = 400
    settings.presolve_enable = False  # keeps the row <-> multiplier mapping one-to-one
    P = sp.triu(problem.P, format="csc")
    t0 = time.perf_counter()
    solver = clarabel.DefaultSolver(P, np.asarray(problem.c, float), A, b, cones, settings)
    res = solver.solve()
    wall = time.perf_counter() - t0
    status = str(res.status)
    if "PrimalInfeasible" in status:
        return Solution(INFEASIBLE, message=status, wall_time=wall, iterations=res.iterations)
    if "DualInfeasible" in status:
        return Solution(UNBOUNDED, message=status, wall_time=wall, iterations=res.iterations)
    if status not in ("Solved", "AlmostSolved"):
        return Solution(NUMERICAL_FAILURE, message=status, wall_time=wall, iterations=res.iterations)
    x = np.asarray(res.x, float)
    z = np.asarray(res.z, float)
    mu_lo = np.zeros(n)
    mu_up = np.zeros(n)
    o = m_eq + m_ub
    mu_lo[has_lo] = z[o : o + has_lo.size]
    mu_up[has_up] = z[o + has_lo.size :]
    sol = Solution(
        OPTIMAL,
        x=x,
        objective=problem.objective(x),
        lam_eq=z[:m_eq].copy(),
        lam_ub=z[m_eq:o].copy(),
        mu_lower=mu_lo,
        mu_upper=mu_up,
        iterations=int(res.iterations),
        wall_time=wall,
        message=status,
    )
    return _certify(problem, sol, tol)


def _certify(problem, sol: Solution, tol: float) -> Solution:
    report = check_kkt(problem, sol, tol)
    sol.residuals = report
    if not report.passed:
        sol.status = NUMERICAL_FAILURE
        sol.message = f"{sol.message}; {report}"
    return sol


def require_optimal(solution: Solution, what: str = "problem") -> Solution:
    if solution.status != OPTIMAL:
        raise SolverError(f"{what}: solver returned {solution.status} ({solution.message})", solution)
    return solution


# ---------------------------------------------------------------------------
# debug dump


def _lp_terms(coefs: Sequence[tuple[float, str]]) -> str:
    out = []
    for i, (v, name) in enumerate(coefs):
        sign = "-" if v < 0 else "+"
        if i == 0 and sign == "+":
            out.append(f"{abs(v):.17g} {name}")
        else:
            out.append(f"{sign} {abs(v):.17g} {name}")
    return " ".join(out) if out else "0 " + "__zero"


def write_lp_file(problem: LinearProgram, path: str | Path) -> None:
    """Write the problem in CPLEX LP text format (quadratic terms in ``[ ]/2``)."""
    names = [problem.var_name(j) for j in range(problem.n_vars)]
    lines = ["\\ offset " + repr(problem.offset)]
    lines.append("Maximize" if problem.sense == "max" else "Minimize")
    obj = _lp_terms([(v, names[j]) for j, v in enumerate(problem.c) if v != 0])
    if isinstance(problem, ConvexQP):
        P = sp.triu(problem.P).tocoo()
        quad = []
        for i, j, v in zip(P.row, P.col, P.data):
            if i == j:
                quad.append(f"+ {v:.17g} {names[i]} ^ 2")
            else:
                quad.append(f"+ {2 * v:.17g} {names[i]} * {names[j]}")
        if quad:
            obj += " + [ " + " ".join(quad)[2:] + " ] / 2"
    lines.append(" obj: " + obj)
    lines.append("Subject To")
    for fam in problem.families:
        A = problem.A_eq if fam.kind == "eq" else problem.A_ub
        b = problem.b_eq if fam.kind == "eq" else problem.b_ub
        op = "=" if fam.kind == "eq" else "<="
        for r in range(fam.start, fam.start + fam.size):
            row = A.getrow(r)
            terms = _lp_terms([(v, names[j]) for j, v in zip(row.indices, row.data)])
            lines.append(f" {fam.name}_{r - fam.start}: {terms} {op} {b[r]:.17g}")
    lines.append("Bounds")
    for j, nm in enumerate(names):
        lo, up = problem.lower[j], problem.upper[j]
        if np.isinf(lo) and np.isinf(up):
            lines.append(f" {nm} free")
        else:
            lo_s = "-inf" if np.isinf(lo) else f"{lo:.17g}"
            up_s = "+inf" if np.isinf(up) else f"{up:.17g}"
            lines.append(f" {lo_s} <= {nm} <= {up_s}")
    lines.append("End")
    Path(path).write_text("\n".join(lines) + "\n")

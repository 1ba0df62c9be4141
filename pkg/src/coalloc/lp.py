"""Dense two-phase simplex with dual values and dual-range analysis.

Programs are small (a few hundred variables), so everything is held in a
dense tableau.  Pivoting is deterministic: Dantzig's rule with lowest-index
ties, falling back to Bland's rule after a run of degenerate pivots.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping

import numpy as np

FEAS_TOL = 1e-9
OPT_TOL = 1e-7
_PIVOT_TOL = 1e-9
_BLAND_AFTER = 50
_MAX_ITER = 50_000

LE, EQ, GE = "<=", "==", ">="


@dataclass
class Constraint:
    coeffs: dict[int, float]
    relation: str
    rhs: float
    tag: Hashable | None = None


@dataclass
class LinearProgram:
    """``maximize c.x`` subject to tagged linear rows and variable bounds."""

    objective: list[float] = field(default_factory=list)
    lower: list[float] = field(default_factory=list)
    upper: list[float] = field(default_factory=list)
    names: list[Hashable] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)

    @property
    def n_vars(self) -> int:
        return len(self.objective)

    def add_variable(self, name: Hashable = None, lower: float = 0.0, upper: float = math.inf,
                     objective: float = 0.0) -> int:
        if lower > upper:
            raise ValueError(f"variable {name!r}: lower bound {lower} exceeds upper {upper}")
        self.objective.append(float(objective))
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        self.names.append(name)
        return len(self.objective) - 1

    def add_constraint(self, coeffs: Mapping[int, float], relation: str, rhs: float,
                       tag: Hashable | None = None) -> int:
        if relation not in (LE, EQ, GE):
            raise ValueError(f"unknown relation {relation!r}")
        merged: dict[int, float] = {}
        for j, a in coeffs.items():
            if not math.isfinite(a):
                raise ValueError(f"non-finite coefficient in constraint {tag!r}")
            merged[j] = merged.get(j, 0.0) + float(a)
        self.constraints.append(Constraint(merged, relation, float(rhs), tag))
        return len(self.constraints) - 1

    def row_of(self, tag: Hashable) -> int:
        for i, con in enumerate(self.constraints):
            if con.tag == tag:
                return i
        raise KeyError(f"no constraint tagged {tag!r}")

    def matrix(self) -> np.ndarray:
        a = np.zeros((len(self.constraints), self.n_vars))
        for i, con in enumerate(self.constraints):
            for j, v in con.coeffs.items():
                a[i, j] = v
        return a

    def copy(self) -> "LinearProgram":
        return LinearProgram(
            list(self.objective), list(self.lower), list(self.upper), list(self.names),
            [Constraint(dict(c.coeffs), c.relation, c.rhs, c.tag) for c in self.constraints],
        )


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded | failure
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    objective: float = math.nan
    message: str = ""
    program: LinearProgram | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def dual(self, tag: Hashable) -> float:
        return float(self.duals[self.program.row_of(tag)])

    def value(self, j: int) -> float:
        return float(self.x[j])


class _Standardized:
    """Maps a LinearProgram onto ``max c'y, A'y (rel) b', y >= 0``."""

    def __init__(self, lp: LinearProgram):
        n = lp.n_vars
        a = lp.matrix()
        cols: list[tuple[int, float]] = []   # internal column -> (original var, sign)
        offset = np.zeros(n)
        bound_rows: list[tuple[int, float]] = []  # (internal col, upper) rows y <= upper
        for j in range(n):
            lo, hi = lp.lower[j], lp.upper[j]
            if math.isfinite(lo):
                offset[j] = lo
                cols.append((j, 1.0))
                if math.isfinite(hi):
                    bound_rows.append((len(cols) - 1, hi - lo))
            elif math.isfinite(hi):
                offset[j] = hi
                cols.append((j, -1.0))
            else:
                cols.append((j, 1.0))
                cols.append((j, -1.0))
        self.cols = cols
        self.offset = offset
        k = len(cols)
        t = np.zeros((n, k))
        for col, (j, s) in enumerate(cols):
            t[j, col] = s
        self.transform = t

        m0 = len(lp.constraints)
        rows = np.zeros((m0 + len(bound_rows), k))
        rhs = np.zeros(m0 + len(bound_rows))
        rel = []
        if m0:
            rows[:m0] = a @ t
            rhs[:m0] = np.array([c.rhs for c in lp.constraints]) - a @ offset
        rel.extend(c.relation for c in lp.constraints)
        for r, (col, ub) in enumerate(bound_rows):
            rows[m0 + r, col] = 1.0
            rhs[m0 + r] = ub
            rel.append(LE)
        self.n_original_rows = m0
        # Flip rows so every right-hand side is nonnegative.
        self.row_sign = np.where(rhs < 0, -1.0, 1.0)
        rows *= self.row_sign[:, None]
        rhs *= self.row_sign
        flip = {LE: GE, GE: LE, EQ: EQ}
        self.rel = [flip[r] if s < 0 else r for r, s in zip(rel, self.row_sign)]
        self.a = rows
        self.b = rhs
        self.c = np.asarray(lp.objective, dtype=float) @ t
        self.const = float(np.dot(lp.objective, offset))

    def to_original(self, y: np.ndarray) -> np.ndarray:
        return self.offset + self.transform @ y


def _pivot(tab: np.ndarray, r: int, e: int) -> None:
    tab[r] /= tab[r, e]
    col = tab[:, e].copy()
    col[r] = 0.0
    nz = np.nonzero(np.abs(col) > 0)[0]
    if nz.size:
        tab[nz] -= np.outer(col[nz], tab[r])
    tab[:, e] = 0.0
    tab[r, e] = 1.0


def _run(tab: np.ndarray, basis: list[int], allowed: np.ndarray) -> str:
    """Pivot ``tab`` (last row = reduced costs, last column = rhs) to optimality."""
    m = tab.shape[0] - 1
    degenerate = 0
    bland = False
    for _ in range(_MAX_ITER):
        red = tab[-1, :-1]
        candidates = np.nonzero((red < -_PIVOT_TOL) & allowed)[0]
        if candidates.size == 0:
            return "optimal"
        if bland:
            e = int(candidates[0])
        else:
            e = int(candidates[np.argmin(red[candidates])])
        colv = tab[:m, e]
        pos = np.nonzero(colv > _PIVOT_TOL)[0]
        if pos.size == 0:
            return "unbounded"
        ratios = tab[pos, -1] / colv[pos]
        best = ratios.min()
        ties = pos[ratios <= best + 1e-12 * max(1.0, abs(best))]
        r = int(min(ties, key=lambda i: basis[i]))
        if tab[r, -1] <= FEAS_TOL:
            degenerate += 1
            if degenerate > _BLAND_AFTER:
                bland = True
        else:
            degenerate = 0
        _pivot(tab, r, e)
        basis[r] = e
    return "failure"


def solve(lp: LinearProgram) -> LpSolution:
    """Solve ``lp`` to optimality, returning primal values and row duals."""
    for j in range(lp.n_vars):
        if lp.lower[j] > lp.upper[j]:
            return LpSolution("infeasible", message=f"empty bounds on variable {j}", program=lp)
    std = _Standardized(lp)
    m, k = std.a.shape

    # Column layout: structural | slack/surplus | artificial.
    ineq = [i for i in range(m) if std.rel[i] != EQ]
    needs_art = [i for i in range(m) if std.rel[i] != LE]
    n_cols = k + len(ineq) + len(needs_art)
    full = np.zeros((m, n_cols))
    full[:, :k] = std.a
    identity_col = np.zeros(m, dtype=int)
    for s, i in enumerate(ineq):
        full[i, k + s] = 1.0 if std.rel[i] == LE else -1.0
        if std.rel[i] == LE:
            identity_col[i] = k + s
    art_start = k + len(ineq)
    for s, i in enumerate(needs_art):
        full[i, art_start + s] = 1.0
        identity_col[i] = art_start + s
    is_art = np.zeros(n_cols, dtype=bool)
    is_art[art_start:] = True

    tab = np.zeros((m + 1, n_cols + 1))
    tab[:m, :n_cols] = full
    tab[:m, -1] = std.b
    basis = [int(identity_col[i]) for i in range(m)]

    if needs_art:
        # Phase 1: maximize -sum(artificials).
        cost = np.where(is_art, -1.0, 0.0)
        cb = cost[basis]
        tab[-1, :n_cols] = cb @ tab[:m, :n_cols] - cost
        tab[-1, -1] = cb @ tab[:m, -1]
        status = _run(tab, basis, np.ones(n_cols, dtype=bool))
        if status == "failure":
            return LpSolution("failure", message="phase 1 iteration limit", program=lp)
        if tab[-1, -1] < -FEAS_TOL * max(1.0, float(np.abs(std.b).max(initial=0.0))):
            return LpSolution("infeasible", message="phase 1 optimum is positive", program=lp)
        # Drive zero-level artificials out of the basis where possible.
        for r in range(m):
            if is_art[basis[r]]:
                row = tab[r, :art_start]
                cand = np.nonzero(np.abs(row) > _PIVOT_TOL)[0]
                if cand.size:
                    e = int(cand[np.argmax(np.abs(row[cand]))])
                    _pivot(tab, r, e)
                    basis[r] = e

    cost = np.zeros(n_cols)
    cost[:k] = std.c
    cb = cost[basis]
    tab[-1, :n_cols] = cb @ tab[:m, :n_cols] - cost
    tab[-1, -1] = cb @ tab[:m, -1]
    status = _run(tab, basis, ~is_art)
    if status != "optimal":
        msg = "iteration limit" if status == "failure" else ""
        return LpSolution(status, message=msg, program=lp)

    # Recompute primal and dual values from the final basis for accuracy.
    bmat = full[:, basis]
    try:
        xb = np.linalg.solve(bmat, std.b)
        y_int = np.linalg.solve(bmat.T, cost[basis])
    except np.linalg.LinAlgError:
        return LpSolution("failure", message="singular final basis", program=lp)
    z = np.zeros(n_cols)
    z[basis] = xb
    x = std.to_original(z[:k])
    duals = (y_int * std.row_sign)[: std.n_original_rows]
    objective = float(np.dot(lp.objective, x))
    sol = LpSolution("optimal", x=x, duals=duals, objective=objective, program=lp)
    problem = _certify(lp, sol)
    if problem:
        return LpSolution("failure", message=problem, program=lp)
    return sol


def snap(value: float, digits: int = 9) -> float:
    """Remove simplex round-off: a value within 1e-11 (relative) of ``digits`` decimals is rounded.

    The tolerance sits far below the rounding step, so genuine fractions such
    as 1/3 are left untouched.
    """
    if not math.isfinite(value):
        return value
    r = round(value, digits) + 0.0
    return r if abs(value - r) <= 1e-11 * max(1.0, abs(value)) else value


def _scale(*arrays) -> float:
    return max([1.0] + [float(np.abs(a).max(initial=0.0)) for a in arrays])


def _certify(lp: LinearProgram, sol: LpSolution) -> str:
    """Check primal feasibility, dual feasibility and the duality gap."""
    x, y = sol.x, sol.duals
    lo, hi = np.array(lp.lower), np.array(lp.upper)
    scale = _scale(x)
    if np.any(x < lo - FEAS_TOL * scale) or np.any(x > hi + FEAS_TOL * scale):
        return "bound violation in final basis"
    a = lp.matrix()
    c = np.array(lp.objective)
    if lp.constraints:
        ax = a @ x
        b = np.array([con.rhs for con in lp.constraints])
        tol = FEAS_TOL * _scale(b, ax)
        for i, con in enumerate(lp.constraints):
            r = ax[i] - b[i]
            if (con.relation == LE and r > tol) or (con.relation == GE and r < -tol) or \
                    (con.relation == EQ and abs(r) > tol):
                return f"row {con.tag!r} violated by {r:.3e}"
            if (con.relation == LE and y[i] < -OPT_TOL) or (con.relation == GE and y[i] > OPT_TOL):
                return f"dual sign violated on row {con.tag!r}"
        d = c - a.T @ y
        dual_obj = float(b @ y)
    else:
        d = c.copy()
        dual_obj = 0.0
    dtol = OPT_TOL * _scale(c, y)
    for j in range(lp.n_vars):
        if d[j] > dtol:
            if not math.isfinite(hi[j]):
                return f"reduced cost of unbounded-above variable {j} is positive"
            dual_obj += d[j] * hi[j]
        elif d[j] < -dtol:
            if not math.isfinite(lo[j]):
                return f"reduced cost of unbounded-below variable {j} is negative"
            dual_obj += d[j] * lo[j]
        else:
            dual_obj += d[j] * x[j]
    if abs(dual_obj - sol.objective) > OPT_TOL * max(1.0, abs(sol.objective)):
        return f"duality gap {dual_obj - sol.objective:.3e}"
    return ""


def optimal_face(lp: LinearProgram, solution: LpSolution, tol: float = OPT_TOL) -> LinearProgram:
    """Copy of ``lp`` restricted to its optimal face via complementary slackness.

    Rows with a nonzero dual become equalities and variables with a nonzero
    reduced cost are fixed at the bound they sit on.
    """
    face = lp.copy()
    y = solution.duals
    for i, con in enumerate(face.constraints):
        if con.relation != EQ and abs(y[i]) > tol:
            con.relation = EQ
    d = np.array(lp.objective) - (lp.matrix().T @ y if lp.constraints else 0.0)
    for j in range(lp.n_vars):
        if d[j] > tol * _scale(lp.objective) and math.isfinite(lp.upper[j]):
            face.lower[j] = lp.upper[j]
        elif d[j] < -tol * _scale(lp.objective) and math.isfinite(lp.lower[j]):
            face.upper[j] = lp.lower[j]
    return face


def dual_program(lp: LinearProgram) -> tuple[LinearProgram, list[int], dict]:
    """Dual of ``lp`` written as a maximization of the negated dual objective.

    Returns the program, the column of each row dual, and a dict with the
    columns of bound multipliers (``"upper"``/``"lower"`` -> {var: col}).
    """
    dual = LinearProgram()
    ycols = []
    for i, con in enumerate(lp.constraints):
        lo, hi = {LE: (0.0, math.inf), GE: (-math.inf, 0.0), EQ: (-math.inf, math.inf)}[con.relation]
        ycols.append(dual.add_variable(("y", i), lo, hi, -con.rhs))
    upper_cols, lower_cols = {}, {}
    for j in range(lp.n_vars):
        if math.isfinite(lp.upper[j]):
            upper_cols[j] = dual.add_variable(("w", j), 0.0, math.inf, -lp.upper[j])
        if math.isfinite(lp.lower[j]):
            lower_cols[j] = dual.add_variable(("v", j), 0.0, math.inf, lp.lower[j])
    columns: dict[int, dict[int, float]] = {j: {} for j in range(lp.n_vars)}
    for i, con in enumerate(lp.constraints):
        for j, a in con.coeffs.items():
            if a:
                columns[j][ycols[i]] = a
    for j in range(lp.n_vars):
        coeffs = dict(columns[j])
        if j in upper_cols:
            coeffs[upper_cols[j]] = 1.0
        if j in lower_cols:
            coeffs[lower_cols[j]] = -1.0
        dual.add_constraint(coeffs, EQ, lp.objective[j], tag=("stationarity", j))
    return dual, ycols, {"upper": upper_cols, "lower": lower_cols}


def dual_range(lp: LinearProgram, tag: Hashable, solution: LpSolution | None = None,
               tol: float = OPT_TOL, zero_duals: Iterable[Hashable] = ()) -> tuple[float, float]:
    """Min and max of a row's dual value over the set of optimal dual solutions.

    The optimal dual face is pinned by complementary slackness with the
    optimal primal point plus a dual-objective cap at ``z* (1 + tol)``.
    Rows tagged in ``zero_duals`` have their duals held at zero; if that
    leaves no optimal dual solution a ValueError is raised.
    """
    row = lp.row_of(tag)
    if solution is None:
        solution = solve(lp)
    if not solution.optimal:
        raise ValueError(f"dual_range needs an optimal solution, got {solution.status}")
    x = solution.x
    dual, ycols, bounds = dual_program(lp)
    zstar = solution.objective
    cap = {}
    for i, con in enumerate(lp.constraints):
        cap[ycols[i]] = -con.rhs
    for j, col in bounds["upper"].items():
        cap[col] = -lp.upper[j]
    for j, col in bounds["lower"].items():
        cap[col] = lp.lower[j]
    # -(dual objective) >= -(z* + slack)
    dual.add_constraint(cap, GE, -(zstar + tol * max(1.0, abs(zstar))), tag="objective")

    slack_tol = OPT_TOL * _scale(x)
    a = lp.matrix()
    ax = a @ x if lp.constraints else np.zeros(0)
    for i, con in enumerate(lp.constraints):
        if con.relation != EQ and abs(ax[i] - con.rhs) > slack_tol * max(1.0, abs(con.rhs)):
            dual.upper[ycols[i]] = min(dual.upper[ycols[i]], 0.0)
            dual.lower[ycols[i]] = max(dual.lower[ycols[i]], 0.0)
    for j, col in bounds["upper"].items():
        if lp.upper[j] - x[j] > slack_tol * max(1.0, abs(lp.upper[j])):
            dual.upper[col] = 0.0
    for j, col in bounds["lower"].items():
        if x[j] - lp.lower[j] > slack_tol * max(1.0, abs(lp.lower[j])):
            dual.upper[col] = 0.0

    for t in zero_duals:
        col = ycols[lp.row_of(t)]
        dual.lower[col] = dual.upper[col] = 0.0

    target = ycols[row]
    ends = []
    for sign in (1.0, -1.0):
        aux = dual.copy()
        aux.objective = [0.0] * aux.n_vars
        aux.objective[target] = sign
        res = solve(aux)
        if res.status == "unbounded":
            ends.append(sign * math.inf)
        elif res.optimal:
            ends.append(sign * res.objective)
        else:
            raise ValueError(f"dual range program for {tag!r} ended {res.status}: {res.message}")
    return ends[1], ends[0]

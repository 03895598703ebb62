"""Embedded LP / MILP engine.

``solve_lp`` is a dense two-phase primal simplex; ``solve_milp`` wraps it in a
best-bound branch-and-bound. Both are deterministic for fixed inputs. The
``highs`` backend hands the same model to ``scipy.optimize.milp`` instead.
"""
from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from loguru import logger

from . import config
from .milp import EQ, GE, LE, LinearModel, expr_value

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
LIMIT = "limit-reached"
STATUSES = (OPTIMAL, INFEASIBLE, UNBOUNDED, LIMIT)


@dataclass(frozen=True)
class TraceRecord:
    """One branch-and-bound node: the global bound and incumbent after processing it."""
    node: int
    depth: int
    bound: float
    incumbent: Optional[float]


@dataclass(frozen=True)
class SolveParams:
    feas_tol: float = config.FEAS_TOL
    opt_tol: float = config.OPT_TOL
    mip_rel_gap: float = config.MIP_REL_GAP
    node_limit: int = config.NODE_LIMIT
    time_limit: Optional[float] = config.TIME_LIMIT
    int_tol: float = 1e-6
    pivot_tol: float = 1e-9
    degeneracy_threshold: int = 50
    iteration_limit: Optional[int] = None
    backend: str = config.BACKEND
    branching: str = "most-fractional"
    node_selection: str = "best-bound"
    trace: Optional[Callable[[TraceRecord], None]] = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("feas_tol", "opt_tol", "mip_rel_gap", "int_tol", "pivot_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"SolveParams.{name} must be > 0")
        if self.node_limit < 1:
            raise ValueError("SolveParams.node_limit must be >= 1")
        if self.backend not in config.BACKENDS:
            raise ValueError(f"unknown backend '{self.backend}'")
        if self.branching != "most-fractional" or self.node_selection != "best-bound":
            raise ValueError("only most-fractional branching with best-bound selection is available")


@dataclass(frozen=True)
class SolveResult:
    status: str
    assignment: Optional[Dict[int, float]] = None
    objective: Optional[float] = None
    bound: Optional[float] = None
    nodes: int = 0
    iterations: int = 0
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


# --- Dense model arrays ---

_SENSE_CODE = {LE: -1, EQ: 0, GE: 1}


@dataclass
class _Dense:
    c: np.ndarray        # minimization costs (max objectives are negated)
    flip: float
    A: np.ndarray
    sense: np.ndarray
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    integral: np.ndarray


def _dense(model: LinearModel) -> _Dense:
    n, m = model.n_vars, len(model.constraints)
    flip = 1.0 if model.objective.sense == "min" else -1.0
    c = np.zeros(n)
    for var_id, coef in model.objective.coeffs.items():
        c[var_id] = flip * coef
    A = np.zeros((m, n))
    sense = np.zeros(m, dtype=int)
    b = np.zeros(m)
    for i, con in enumerate(model.constraints):
        for var_id, coef in con.coeffs.items():
            A[i, var_id] = coef
        sense[i] = _SENSE_CODE[con.sense]
        b[i] = con.rhs
    lower = np.array([v.lower for v in model.variables], dtype=float)
    upper = np.array([v.upper for v in model.variables], dtype=float)
    integral = np.array([v.is_integral for v in model.variables], dtype=bool)
    return _Dense(c, flip, A, sense, b, lower, upper, integral)


# --- Simplex ---

@dataclass
class _LpOutcome:
    status: str
    x: Optional[np.ndarray] = None
    value: float = math.inf
    iterations: int = 0
    message: str = ""


class _Counter:
    def __init__(self, limit: int):
        self.limit = limit
        self.iterations = 0


def _pivot(T: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    column = T[:, col].copy()
    column[row] = 0.0
    T -= np.outer(column, T[row])
    basis[row] = col


def _run_simplex(T: np.ndarray, basis: np.ndarray, n_cols: int, p: SolveParams, counter: _Counter) -> str:
    """Primal simplex on tableau ``T`` (objective in the last row) over the first ``n_cols`` columns."""
    m = T.shape[0] - 1
    bland = False
    degenerate = 0
    if n_cols == 0:
        return OPTIMAL
    while True:
        if counter.iterations >= counter.limit:
            return LIMIT
        reduced = T[m, :n_cols]
        if bland:
            improving = np.flatnonzero(reduced < -p.opt_tol)
            if improving.size == 0:
                return OPTIMAL
            entering = int(improving[0])
        else:
            entering = int(np.argmin(reduced))
            if reduced[entering] >= -p.opt_tol:
                return OPTIMAL
        column = T[:m, entering]
        eligible = column > p.pivot_tol
        if not eligible.any():
            return UNBOUNDED
        rhs = np.maximum(T[:m, -1], 0.0)
        ratios = np.full(m, np.inf)
        ratios[eligible] = rhs[eligible] / column[eligible]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + 1e-12 * max(1.0, best))
        leaving = int(ties[np.argmin(basis[ties])])
        if best <= 1e-12:
            degenerate += 1
            if degenerate > p.degeneracy_threshold and not bland:
                bland = True
        else:
            degenerate = 0
        _pivot(T, basis, leaving, entering)
        counter.iterations += 1


def _row_ok(lhs: float, sense: int, rhs: float, tol: float) -> bool:
    if sense < 0:
        return lhs <= rhs + tol
    if sense > 0:
        return lhs >= rhs - tol
    return abs(lhs - rhs) <= tol


def _row_tolerances(A: np.ndarray, b: np.ndarray, x: np.ndarray, tol: float) -> np.ndarray:
    """Per-row feasibility tolerance, relative to the row's magnitude at ``x``."""
    activity = np.abs(A) @ np.abs(x) if A.size else np.zeros(b.size)
    return tol * np.maximum(1.0, np.maximum(np.abs(b), activity))


def _lp(d: _Dense, lower: np.ndarray, upper: np.ndarray, p: SolveParams) -> _LpOutcome:
    """Minimize ``d.c @ x`` over the rows of ``d`` and the given bounds."""
    n = d.c.size
    if np.any(lower > upper + p.feas_tol):
        return _LpOutcome(INFEASIBLE, message="crossed bounds")
    x = np.zeros(n)
    fixed = upper <= lower
    x[fixed] = lower[fixed]
    free = np.flatnonzero(~fixed)

    A = d.A[:, free].copy()
    b = d.b - d.A[:, fixed] @ x[fixed]
    sense = d.sense.copy()

    # presolve: rows left without free variables
    active = np.any(A != 0.0, axis=1)
    for i in np.flatnonzero(~active):
        if not _row_ok(0.0, sense[i], b[i], p.feas_tol):
            return _LpOutcome(INFEASIBLE, message="empty row violated after presolve")
    A, b, sense = A[active], b[active], sense[active]

    # column transforms onto y >= 0
    columns: List[np.ndarray] = []
    costs: List[float] = []
    bound_rows: List[Tuple[int, float]] = []
    recover: List[Tuple[int, float, List[Tuple[int, float]]]] = []
    for pos, j in enumerate(free):
        lo, up = lower[j], upper[j]
        if np.isfinite(lo):
            b = b - A[:, pos] * lo
            col_id = len(columns)
            columns.append(A[:, pos])
            costs.append(d.c[j])
            if np.isfinite(up):
                bound_rows.append((col_id, up - lo))
            recover.append((j, lo, [(col_id, 1.0)]))
        elif np.isfinite(up):
            b = b - A[:, pos] * up
            col_id = len(columns)
            columns.append(-A[:, pos])
            costs.append(-d.c[j])
            recover.append((j, up, [(col_id, -1.0)]))
        else:
            col_id = len(columns)
            columns.append(A[:, pos])
            columns.append(-A[:, pos])
            costs.extend([d.c[j], -d.c[j]])
            recover.append((j, 0.0, [(col_id, 1.0), (col_id + 1, -1.0)]))

    ny = len(columns)
    m0 = b.size
    R = m0 + len(bound_rows)
    M = np.zeros((R, ny))
    if ny and m0:
        M[:m0] = np.column_stack(columns)
    rhs = np.concatenate([b, [ub for _, ub in bound_rows]]) if bound_rows else b.copy()
    row_sense = np.concatenate([sense, np.full(len(bound_rows), -1)]) if bound_rows else sense.copy()
    for k, (col_id, _) in enumerate(bound_rows):
        M[m0 + k, col_id] = 1.0

    slack_coef = np.where(row_sense < 0, 1.0, np.where(row_sense > 0, -1.0, 0.0))
    negative = rhs < 0
    M[negative] *= -1.0
    rhs = np.where(negative, -rhs, rhs)
    slack_coef[negative] *= -1.0

    slack_rows = np.flatnonzero(row_sense != 0)
    art_rows = np.flatnonzero(slack_coef != 1.0)
    ns, na = slack_rows.size, art_rows.size
    width = ny + ns + na
    T = np.zeros((R + 1, width + 1))
    T[:R, :ny] = M
    basis = np.zeros(R, dtype=int)
    for k, i in enumerate(slack_rows):
        T[i, ny + k] = slack_coef[i]
        if slack_coef[i] == 1.0:
            basis[i] = ny + k
    for k, i in enumerate(art_rows):
        T[i, ny + ns + k] = 1.0
        basis[i] = ny + ns + k
    T[:R, -1] = rhs

    counter = _Counter(p.iteration_limit or 50 * (R + width) + 1000)
    art_start = ny + ns
    if na:
        T[R, art_start:width] = 1.0
        T[R] -= T[art_rows].sum(axis=0)
        status = _run_simplex(T, basis, width, p, counter)
        if status == LIMIT:
            return _LpOutcome(LIMIT, iterations=counter.iterations, message="iteration limit in phase 1")
        infeasibility = -T[R, -1]
        if infeasibility > p.feas_tol * max(1.0, float(np.abs(rhs).max(initial=0.0))):
            return _LpOutcome(INFEASIBLE, iterations=counter.iterations, message="phase 1 optimum is positive")
        redundant = []
        for i in range(R):
            if basis[i] >= art_start:
                candidates = np.flatnonzero(np.abs(T[i, :art_start]) > p.pivot_tol)
                if candidates.size:
                    _pivot(T, basis, i, int(candidates[0]))
                else:
                    redundant.append(i)
        if redundant:
            T = np.delete(T, redundant, axis=0)
            basis = np.delete(basis, redundant)
        T = np.hstack([T[:, :art_start], T[:, -1:]])

    cost = np.concatenate([np.asarray(costs, dtype=float), np.zeros(ns)])
    rows = T.shape[0] - 1
    T[rows, :] = 0.0
    T[rows, :art_start] = cost
    for i in range(rows):
        if cost[basis[i]] != 0.0:
            T[rows] -= cost[basis[i]] * T[i]
    status = _run_simplex(T, basis, art_start, p, counter)
    if status != OPTIMAL:
        message = "iteration limit in phase 2" if status == LIMIT else "improving ray found"
        return _LpOutcome(status, iterations=counter.iterations, message=message)

    y = np.zeros(art_start)
    for i in range(rows):
        y[basis[i]] = T[i, -1]
    for j, base, parts in recover:
        x[j] = base + sum(sign * y[col] for col, sign in parts)
    x = np.minimum(np.maximum(x, lower), upper)

    lhs = d.A @ x
    tols = _row_tolerances(d.A, d.b, x, p.feas_tol)
    for i in range(d.b.size):
        if not _row_ok(lhs[i], d.sense[i], d.b[i], tols[i]):
            return _LpOutcome(
                LIMIT, iterations=counter.iterations,
                message=f"numerical breakdown: row {i} residual {abs(lhs[i] - d.b[i]):.3g}",
            )
    return _LpOutcome(OPTIMAL, x, float(d.c @ x), counter.iterations)


def _assignment(x: np.ndarray) -> Dict[int, float]:
    return {i: float(v) for i, v in enumerate(x)}


def solve_lp(model: LinearModel, p: Optional[SolveParams] = None) -> SolveResult:
    """Solve the continuous relaxation of ``model``."""
    p = p or SolveParams()
    if p.backend == "highs":
        return _solve_highs(model, p, relax=True)
    d = _dense(model)
    out = _lp(d, d.lower, d.upper, p)
    if out.status != OPTIMAL:
        return SolveResult(out.status, iterations=out.iterations, message=out.message)
    a = _assignment(out.x)
    value = expr_value(model.objective.coeffs, a) + model.objective.constant
    return SolveResult(OPTIMAL, a, value, value, nodes=0, iterations=out.iterations)


# --- Branch and bound ---

def _branch_var(x: np.ndarray, integral: np.ndarray, int_tol: float) -> Optional[int]:
    frac = x - np.floor(x)
    distance = np.minimum(frac, 1.0 - frac)
    distance[~integral] = 0.0
    j = int(np.argmax(distance))
    return j if distance[j] > int_tol else None


def _pruned(value: float, incumbent: float, p: SolveParams) -> bool:
    return math.isfinite(incumbent) and value >= incumbent - p.mip_rel_gap * max(1.0, abs(incumbent))


def solve_milp(model: LinearModel, p: Optional[SolveParams] = None) -> SolveResult:
    """Best-bound branch-and-bound with most-fractional branching (lowest index on ties)."""
    p = p or SolveParams()
    if p.backend == "highs":
        return _solve_highs(model, p, relax=False)
    d = _dense(model)
    if not d.integral.any():
        result = solve_lp(model, p)
        return SolveResult(result.status, result.assignment, result.objective, result.bound,
                           1, result.iterations, result.message)

    def external(value: float) -> float:
        return d.flip * value + model.objective.constant

    started = time.monotonic()
    lower0, upper0 = d.lower.copy(), d.upper.copy()
    lower0[d.integral] = np.ceil(lower0[d.integral] - p.int_tol)
    upper0[d.integral] = np.floor(upper0[d.integral] + p.int_tol)

    heap: List[Tuple[float, int, int, np.ndarray, np.ndarray]] = [(-math.inf, 0, 0, lower0, upper0)]
    seq, nodes, iterations = 1, 0, 0
    incumbent, incumbent_x = math.inf, None
    floor_bound = math.inf
    message = ""
    limited = False

    while heap:
        if nodes >= p.node_limit:
            limited, message = True, f"node limit {p.node_limit} reached"
            break
        if p.time_limit is not None and time.monotonic() - started > p.time_limit:
            limited, message = True, f"time limit {p.time_limit}s reached"
            break
        parent_bound, _, depth, lo, up = heapq.heappop(heap)
        if _pruned(parent_bound, incumbent, p):
            # best-bound order: every open node is at least as bad
            floor_bound = min(floor_bound, parent_bound)
            heap.clear()
            break

        out = _lp(d, lo, up, p)
        nodes += 1
        iterations += out.iterations
        if out.status == LIMIT:
            limited, message = True, f"node {nodes}: {out.message}"
            break
        if out.status == UNBOUNDED:
            if incumbent_x is None and nodes == 1:
                return SolveResult(UNBOUNDED, nodes=nodes, iterations=iterations, message=out.message)
            continue
        if out.status == OPTIMAL:
            if _pruned(out.value, incumbent, p):
                floor_bound = min(floor_bound, out.value)
            else:
                j = _branch_var(out.x, d.integral, p.int_tol)
                if j is None:
                    polished = _polish(d, lo, up, out.x, p)
                    iterations += polished.iterations
                    if polished.status == OPTIMAL and polished.value < incumbent:
                        incumbent, incumbent_x = polished.value, polished.x
                        logger.debug(f"[B&B] node {nodes}: incumbent {external(incumbent):.6g}")
                else:
                    value = out.x[j]
                    down_upper = up.copy()
                    down_upper[j] = math.floor(value)
                    up_lower = lo.copy()
                    up_lower[j] = math.ceil(value)
                    heapq.heappush(heap, (out.value, seq, depth + 1, lo, down_upper))
                    heapq.heappush(heap, (out.value, seq + 1, depth + 1, up_lower, up))
                    seq += 2

        if p.trace is not None:
            open_bound = heap[0][0] if heap else math.inf
            bound = min(open_bound, incumbent, floor_bound)
            p.trace(TraceRecord(
                nodes, depth,
                external(bound) if math.isfinite(bound) else d.flip * bound,
                external(incumbent) if incumbent_x is not None else None,
            ))

    open_bound = heap[0][0] if heap else math.inf
    bound = min(open_bound, incumbent, floor_bound)
    if limited:
        a = _assignment(incumbent_x) if incumbent_x is not None else None
        return SolveResult(
            LIMIT, a,
            external(incumbent) if a is not None else None,
            external(bound) if math.isfinite(bound) else None,
            nodes, iterations, message,
        )
    if incumbent_x is None:
        return SolveResult(INFEASIBLE, nodes=nodes, iterations=iterations, message="no integral point")
    a = _assignment(incumbent_x)
    value = expr_value(model.objective.coeffs, a) + model.objective.constant
    return SolveResult(OPTIMAL, a, value, external(bound), nodes, iterations)


def _polish(d: _Dense, lower: np.ndarray, upper: np.ndarray, x: np.ndarray, p: SolveParams) -> _LpOutcome:
    """Re-solve with integer variables fixed at their rounded values."""
    rounded = np.round(x[d.integral])
    lo, up = lower.copy(), upper.copy()
    lo[d.integral] = rounded
    up[d.integral] = rounded
    return _lp(d, lo, up, p)


# --- External backend ---

_HIGHS_STATUS = {0: OPTIMAL, 1: LIMIT, 2: INFEASIBLE, 3: UNBOUNDED}


def _solve_highs(model: LinearModel, p: SolveParams, relax: bool) -> SolveResult:
    from scipy.optimize import Bounds, LinearConstraint, milp
    from scipy.sparse import csr_array

    n = model.n_vars
    flip = 1.0 if model.objective.sense == "min" else -1.0
    c = np.zeros(n)
    for var_id, coef in model.objective.coeffs.items():
        c[var_id] = flip * coef
    rows, cols, vals = [], [], []
    row_lb, row_ub = [], []
    for i, con in enumerate(model.constraints):
        for var_id, coef in con.coeffs.items():
            rows.append(i)
            cols.append(var_id)
            vals.append(coef)
        row_lb.append(con.rhs if con.sense in (EQ, GE) else -np.inf)
        row_ub.append(con.rhs if con.sense in (EQ, LE) else np.inf)
    constraints = None
    if model.constraints:
        matrix = csr_array((vals, (rows, cols)), shape=(len(model.constraints), n))
        constraints = LinearConstraint(matrix, row_lb, row_ub)
    integrality = np.array([0 if relax else int(v.is_integral) for v in model.variables])
    options = {"disp": False, "mip_rel_gap": p.mip_rel_gap, "node_limit": p.node_limit}
    if p.time_limit is not None:
        options["time_limit"] = p.time_limit
    res = milp(
        c, integrality=integrality, constraints=constraints,
        bounds=Bounds([v.lower for v in model.variables], [v.upper for v in model.variables]),
        options=options,
    )
    status = _HIGHS_STATUS.get(res.status, LIMIT)
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.x is None:
        return SolveResult(status, nodes=nodes, message=str(res.message))
    x = np.array(res.x, dtype=float)
    if not relax:
        mask = integrality.astype(bool)
        x[mask] = np.round(x[mask])
    x = np.clip(x, [v.lower for v in model.variables], [v.upper for v in model.variables])
    a = _assignment(x)
    value = expr_value(model.objective.coeffs, a) + model.objective.constant
    dual = getattr(res, "mip_dual_bound", None)
    bound = value if relax or dual is None else flip * float(dual) + model.objective.constant
    return SolveResult(status, a, value, bound, nodes, 0, str(res.message))

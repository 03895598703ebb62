"""Augmented epsilon-constraint method over the three objectives."""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, TypeVar

import numpy as np
from loguru import logger

from . import config
from .errors import MooError
from .formulation import OBJECTIVE_NAMES, Solution, VarCatalog, build_base, build_model, extract_solution
from .instance import Instance
from .milp import EQ, LinearModel
from .solver import LIMIT, OPTIMAL, SolveParams, SolveResult, solve_milp

_ROW_TAGS = {"f1": "eq41", "f2": "eq42", "f3": "eq43"}
RANGE_TOL = 1e-9

T = TypeVar("T")


@dataclass(frozen=True)
class PayoffTable:
    best: Mapping[str, float]
    worst: Mapping[str, float]
    ranges: Mapping[str, float]
    solutions: Mapping[str, Solution]
    guarded: Tuple[str, ...] = ()

    def rows(self) -> List[Dict[str, Any]]:
        return [
            {"objective": f, "best": self.best[f], "worst": self.worst[f], "range": self.ranges[f]}
            for f in OBJECTIVE_NAMES
        ]


@dataclass(frozen=True)
class ParetoPoint:
    objectives: Tuple[float, float, float]
    eps: Mapping[str, float]
    solution: Solution


@dataclass(frozen=True)
class GridCell:
    eps: Mapping[str, float]
    status: str
    point: Optional[ParetoPoint] = None
    message: str = ""


def _constrained(primary: str) -> List[str]:
    if primary not in OBJECTIVE_NAMES:
        raise MooError(f"unknown primary objective '{primary}'")
    return [f for f in OBJECTIVE_NAMES if f != primary]


def payoff_table(inst: Instance, p: Optional[SolveParams] = None, risk_mode: Optional[str] = None) -> PayoffTable:
    """Best value of each objective from its own solve; worst from the other objectives' optima."""
    p = p or SolveParams()
    solutions: Dict[str, Solution] = {}
    logger.info(f"--- Building payoff table for '{inst.name}' ---")
    for i, name in enumerate(OBJECTIVE_NAMES, start=1):
        model, catalog = build_model(inst, name, risk_mode)
        result = solve_milp(model, p)
        if result.status != OPTIMAL:
            raise MooError(f"payoff solve for {name} ended {result.status}: {result.message or 'no optimum'}")
        solutions[name] = extract_solution(inst, catalog, result.assignment)
        logger.info(f"[{i}/{len(OBJECTIVE_NAMES)}] {name} optimum {result.objective:.6g} ({result.nodes} nodes)")

    best, worst, ranges = {}, {}, {}
    guarded = []
    for i, name in enumerate(OBJECTIVE_NAMES):
        best[name] = solutions[name].objectives[i]
        others = [solutions[o].objectives[i] for o in OBJECTIVE_NAMES if o != name]
        worst[name] = max([best[name]] + others)
        spread = worst[name] - best[name]
        if spread <= RANGE_TOL * max(1.0, abs(best[name])):
            logger.warning(f"{name} has a degenerate payoff range ({spread:.3g}); using 1 as its range")
            ranges[name] = 1.0
            guarded.append(name)
        else:
            ranges[name] = spread
    return PayoffTable(best, worst, ranges, solutions, tuple(guarded))


def build_augmented_model(
    inst: Instance,
    eps: Mapping[str, float],
    ranges: Mapping[str, float],
    primary: Optional[str] = None,
    eps_constant: Optional[float] = None,
    risk_mode: Optional[str] = None,
) -> Tuple[LinearModel, VarCatalog]:
    """min primary - eps_constant * sum(s_o / r_o) with f_o + s_o = eps_o for the other objectives."""
    primary = primary or config.PRIMARY_OBJECTIVE
    constrained = _constrained(primary)
    eps_constant = inst.eps_constant if eps_constant is None else eps_constant
    low, high = config.EPS_CONSTANT_RANGE
    if not low <= eps_constant <= high:
        raise MooError(f"eps constant {eps_constant} outside [{low}, {high}]")
    for name in constrained:
        if name not in eps:
            raise MooError(f"missing epsilon for {name}")
        if not ranges.get(name, 0.0) > 0:
            raise MooError(f"range for {name} must be > 0, got {ranges.get(name)}")

    mb, catalog = build_base(inst, risk_mode)
    objective = dict(catalog.objectives[primary])
    for name in constrained:
        slack = f"s{name[1:]}"
        s_id = catalog.add("slack", slack, mb.add_var(slack))
        mb.add_constraint(
            f"{_ROW_TAGS[name]}_eps_{name}",
            list(catalog.objectives[name].items()) + [(s_id, 1.0)],
            EQ,
            float(eps[name]),
        )
        objective[s_id] = -eps_constant / ranges[name]
    mb.set_objective(objective.items(), "min")
    mb.name = f"{mb.name}_augmented"
    return mb.build(), catalog


def epsilon_grid(table: PayoffTable, n: Optional[int] = None, primary: Optional[str] = None) -> List[Dict[str, float]]:
    """n evenly spaced values per constrained objective over [best, worst]; n**2 vectors."""
    n = config.GRID_POINTS if n is None else n
    if n < 2:
        raise MooError(f"grid needs at least 2 points per objective, got {n}")
    constrained = _constrained(primary or config.PRIMARY_OBJECTIVE)
    axes = [[float(v) for v in np.linspace(table.best[f], table.worst[f], n)] for f in constrained]
    return [dict(zip(constrained, values)) for values in itertools.product(*axes)]


def ordered_map(fn: Callable[[Any], T], items: Sequence[Any], workers: int) -> List[T]:
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def sweep_epsilon_grid(
    inst: Instance,
    table: PayoffTable,
    n: Optional[int] = None,
    p: Optional[SolveParams] = None,
    primary: Optional[str] = None,
    risk_mode: Optional[str] = None,
    workers: int = 1,
) -> List[GridCell]:
    """Solve every grid cell; infeasible and limited cells are returned, not raised."""
    p = p or SolveParams()
    primary = primary or config.PRIMARY_OBJECTIVE
    grid = epsilon_grid(table, n, primary)
    logger.info(f"--- Starting epsilon sweep: {len(grid)} cells, primary {primary} ---")

    def solve_cell(eps: Dict[str, float]) -> GridCell:
        model, catalog = build_augmented_model(inst, eps, table.ranges, primary, risk_mode=risk_mode)
        result: SolveResult = solve_milp(model, p)
        point = None
        if result.assignment is not None and result.status in (OPTIMAL, LIMIT):
            sol = extract_solution(inst, catalog, result.assignment)
            point = ParetoPoint(sol.objectives, dict(eps), sol)
        return GridCell(dict(eps), result.status, point, result.message)

    cells = ordered_map(solve_cell, grid, workers)
    for i, cell in enumerate(cells, start=1):
        eps_text = ", ".join(f"{k}={v:.6g}" for k, v in cell.eps.items())
        logger.info(f"[{i}/{len(cells)}] {eps_text} -> {cell.status}")
    return cells


def pareto_front(
    inst: Instance,
    n: Optional[int] = None,
    p: Optional[SolveParams] = None,
    primary: Optional[str] = None,
    risk_mode: Optional[str] = None,
    workers: int = 1,
    table: Optional[PayoffTable] = None,
    tol: float = 1e-6,
) -> List[ParetoPoint]:
    """Nondominated points of the grid sweep, sorted by (f1, f2, f3)."""
    table = table or payoff_table(inst, p, risk_mode)
    cells = sweep_epsilon_grid(inst, table, n, p, primary, risk_mode, workers)
    points = [c.point for c in cells if c.status == OPTIMAL and c.point is not None]
    front = nondominated_filter(points, key=lambda pt: pt.objectives, tol=tol)
    return sorted(front, key=lambda pt: pt.objectives)


def _close(a: float, b: float, tol: float) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def dominates(q: Sequence[float], p: Sequence[float], tol: float = 0.0) -> bool:
    """q is no worse everywhere and strictly better somewhere (minimization)."""
    no_worse = all(qi <= pi or _close(qi, pi, tol) for qi, pi in zip(q, p))
    better = any(qi < pi and not _close(qi, pi, tol) for qi, pi in zip(q, p))
    return no_worse and better


def nondominated_filter(
    points: Sequence[T],
    key: Optional[Callable[[T], Sequence[float]]] = None,
    tol: float = 0.0,
) -> List[T]:
    """Stable filter; ties within ``tol`` keep the first occurrence."""
    key = key or (lambda pt: pt)
    vectors = [tuple(float(c) for c in key(pt)) for pt in points]
    kept: List[int] = []
    for i, vec in enumerate(vectors):
        if any(dominates(other, vec, tol) for other in vectors):
            continue
        if any(all(_close(a, b, tol) for a, b in zip(vectors[j], vec)) for j in kept):
            continue
        kept.append(i)
    return [points[i] for i in kept]

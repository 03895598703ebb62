"""Exhaustive ground truth for tiny instances.

Discrete decisions (openings and routes) are enumerated completely; the
remaining residue flows are resolved exactly, by ``solve_lp`` for a single
objective and by vertex enumeration of the flow polytope for fronts.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from . import config
from .errors import OracleInfeasibleError, OracleIntractableError
from .formulation import OBJECTIVE_NAMES, Opening, Route, Solution, with_objectives
from .instance import DISPOSAL, RECYCLING, TREATMENT, Instance, Vehicle
from .milp import EQ, LE, ModelBuilder, evaluate
from .moo import nondominated_filter
from .solver import OPTIMAL, SolveParams, solve_lp


@dataclass(frozen=True)
class PlannedRoute:
    vehicle: str
    waste: str
    start: str
    stops: Tuple[str, ...]
    terminal: str
    end: str

    @property
    def nodes(self) -> Tuple[str, ...]:
        return (self.start,) + self.stops + (self.terminal, self.end)


@dataclass(frozen=True)
class DiscreteConfig:
    openings: Tuple[Opening, ...]
    routes: Tuple[PlannedRoute, ...]

    def opening(self, node_id: str) -> Optional[Opening]:
        return next((o for o in self.openings if o.node == node_id), None)


# --- Search space ---

def _opening_choices(inst: Instance) -> List[List[Optional[Opening]]]:
    choices = []
    for facility in (TREATMENT, RECYCLING, DISPOSAL):
        for node_id in inst.facilities(facility):
            existing = inst.node(node_id).existing
            options: List[Optional[Opening]] = [] if existing else [None]
            options += [Opening(node_id, facility, h, q, existing) for q, h in inst.level_options(facility, node_id)]
            choices.append(options)
    return choices


def _lah(m: int, b: int) -> int:
    """Ways to split m labelled items into b nonempty ordered sequences."""
    if m == b == 0:
        return 1
    if b == 0 or b > m:
        return 0
    return math.comb(m - 1, b - 1) * math.factorial(m) // math.factorial(b)


def search_space_size(inst: Instance) -> int:
    """Upper bound on the number of discrete configurations (before symmetry reduction)."""
    size = math.prod(len(c) for c in _opening_choices(inst))
    depots = len(inst.depots)
    for w in inst.waste_types:
        stops = sum(1 for d in w.demand.values() if d > 0)
        fleet = len(inst.vehicles_for(w.id))
        ends = depots * depots * max(1, len(inst.terminals_for(w.id)))
        size *= sum(
            _lah(stops, b) * math.perm(fleet, b) * ends ** b
            for b in range(0, min(stops, fleet) + 1)
        )
    return size


def _set_partitions(items: Sequence[str]) -> Iterator[List[List[str]]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]


def _signature(inst: Instance, vehicle: Vehicle) -> Tuple:
    overrides = tuple(sorted(
        ((a.from_node, a.to_node), a.distance_by_vehicle[vehicle.id])
        for a in inst.arcs if vehicle.id in a.distance_by_vehicle
    ))
    return vehicle.capacity, vehicle.max_distance, overrides


def _skeletons(inst: Instance, waste_id: str) -> List[List[Tuple[str, Tuple[str, ...]]]]:
    """(vehicle, visit order) lists covering every positive-demand stop, relabelings removed."""
    stops = [g for g in inst.generation if inst.demand(waste_id, g) > 0]
    fleet = inst.vehicles_for(waste_id)
    signature = {k.id: _signature(inst, k) for k in fleet}
    seen = set()
    out = []
    for blocks in _set_partitions(stops):
        if len(blocks) > len(fleet):
            continue
        for orders in itertools.product(*(itertools.permutations(b) for b in blocks)):
            for vehicles in itertools.permutations([k.id for k in fleet], len(blocks)):
                key = tuple(sorted((signature[k], seq) for k, seq in zip(vehicles, orders)))
                if key in seen:
                    continue
                seen.add(key)
                out.append(list(zip(vehicles, orders)))
    return out


def _open_terminals(inst: Instance, waste_id: str, openings: Dict[str, Opening]) -> List[str]:
    waste = inst.waste(waste_id)
    terminals = []
    for node_id in inst.terminals_for(waste_id):
        op = openings.get(node_id)
        if op is None:
            continue
        if op.facility == TREATMENT and op.technology not in waste.compatible_techs:
            continue
        terminals.append(node_id)
    return terminals


def enumerate_configs(inst: Instance, limit: Optional[int] = None) -> Iterator[DiscreteConfig]:
    """Every opening/route combination respecting compatibility and existing-site pinning."""
    limit = config.ORACLE_LIMIT if limit is None else limit
    size = search_space_size(inst)
    if size > limit:
        raise OracleIntractableError(size, limit)
    skeletons = {w.id: _skeletons(inst, w.id) for w in inst.waste_types}
    depots = inst.depots

    for combo in itertools.product(*_opening_choices(inst)):
        openings = tuple(o for o in combo if o is not None)
        by_node = {o.node: o for o in openings}
        per_waste: List[List[Tuple[PlannedRoute, ...]]] = []
        for w in inst.waste_types:
            terminals = _open_terminals(inst, w.id, by_node)
            options: List[Tuple[PlannedRoute, ...]] = []
            for skeleton in skeletons[w.id]:
                legs = [
                    [PlannedRoute(k, w.id, f, seq, t, f2) for f in depots for t in terminals for f2 in depots]
                    for k, seq in skeleton
                ]
                options.extend(itertools.product(*legs))
            per_waste.append(options)
        for routes in itertools.product(*per_waste):
            yield DiscreteConfig(openings, tuple(r for group in routes for r in group))


# --- Route checks ---

def _route(inst: Instance, planned: PlannedRoute) -> Optional[Route]:
    """Decoded route, or None when a link is missing or load/distance limits are broken."""
    vehicle = inst.vehicle(planned.vehicle)
    nodes = planned.nodes
    legs = [inst.distance(i, j, vehicle.id) for i, j in zip(nodes, nodes[1:])]
    if any(d is None for d in legs):
        return None
    load = math.fsum(inst.demand(planned.waste, g) for g in planned.stops)
    length = math.fsum(legs)
    if load > vehicle.capacity + 1e-9 or length > vehicle.max_distance + 1e-9:
        return None
    return Route(vehicle.id, planned.waste, nodes, load, length)


# --- Residue-flow subproblem ---

@dataclass
class _FlowSystem:
    keys: List[Tuple[str, object]]
    eq_rows: List[Tuple[Dict[int, float], float, str]]
    le_rows: List[Tuple[Dict[int, float], float, str]]
    costs: Dict[str, np.ndarray]


def _site_rate(inst: Instance, op: Opening, risk_mode: str) -> float:
    if risk_mode == "all-levels":
        return math.fsum(
            inst.facility_level(op.facility, op.node, h, op.technology).op_risk
            for q, h in inst.level_options(op.facility, op.node)
            if q == op.technology
        )
    return inst.facility_level(op.facility, op.node, op.level, op.technology).op_risk


def _flow_system(inst: Instance, openings: Dict[str, Opening], xt: Dict[Tuple[str, str], float],
                 direct: Dict[str, float], risk_mode: str) -> _FlowSystem:
    keys: List[Tuple[str, object]] = []
    for family, tails, heads in (("k", TREATMENT, RECYCLING), ("z", TREATMENT, DISPOSAL), ("v", RECYCLING, DISPOSAL)):
        for i in inst.facilities(tails):
            for j in inst.facilities(heads):
                if inst.arc(i, j) is not None:
                    keys.append((family, (i, j)))
    keys += [("xr", r) for r in inst.facilities(RECYCLING)]
    keys += [("xd", d) for d in inst.facilities(DISPOSAL)]
    index = {key: n for n, key in enumerate(keys)}
    eq_rows: List[Tuple[Dict[int, float], float, str]] = []
    le_rows: List[Tuple[Dict[int, float], float, str]] = []

    def links(family: str, *, tail: Optional[str] = None, head: Optional[str] = None) -> List[int]:
        return [
            n for (fam, key), n in index.items()
            if fam == family and (tail is None or key[0] == tail) and (head is None or key[1] == head)
        ]

    for t in inst.facilities(TREATMENT):
        op = openings.get(t)
        recyclable = residue = 0.0
        for (w, j), mass in xt.items():
            if j != t or op is None:
                continue
            waste = inst.waste(w)
            reduction = waste.mass_reduction.get(op.technology, 0.0)
            beta = waste.recyclable_fraction_after_tech.get(op.technology, 0.0)
            recyclable += mass * (1.0 - reduction) * beta
            residue += mass * (1.0 - reduction) * (1.0 - beta)
        eq_rows.append(({n: 1.0 for n in links("k", tail=t)}, recyclable, f"recyclable_{t}"))
        eq_rows.append(({n: 1.0 for n in links("z", tail=t)}, residue, f"residue_{t}"))

    for r in inst.facilities(RECYCLING):
        xr = index[("xr", r)]
        row = {xr: 1.0}
        row.update({n: -1.0 for n in links("k", head=r)})
        eq_rows.append((row, direct.get(r, 0.0), f"recycled_{r}"))
        row = {n: 1.0 for n in links("v", tail=r)}
        row[xr] = -(1.0 - inst.recycling_ratio.get(r, 1.0))
        eq_rows.append((row, 0.0, f"recycling_residue_{r}"))

    for d in inst.facilities(DISPOSAL):
        row = {index[("xd", d)]: 1.0}
        row.update({n: -1.0 for n in links("z", head=d) + links("v", head=d)})
        eq_rows.append((row, 0.0, f"disposed_{d}"))

    for facility, family in ((RECYCLING, "xr"), (DISPOSAL, "xd")):
        for node_id in inst.facilities(facility):
            n = index[(family, node_id)]
            op = openings.get(node_id)
            if op is None:
                le_rows.append(({n: 1.0}, 0.0, f"closed_{node_id}"))
                continue
            le_rows.append(({n: 1.0}, inst.facility_level(facility, node_id, op.level).max, f"cap_{node_id}"))
            le_rows.append(({n: -1.0}, -inst.min_threshold(facility, node_id), f"min_{node_id}"))

    for (family, key), n in index.items():
        if family in ("k", "z", "v"):
            arc = inst.arc(*key)
            if arc.risk_cap is not None and arc.transport_risk > 0:
                le_rows.append(({n: arc.transport_risk}, arc.risk_cap, f"risk_{key[0]}_{key[1]}"))

    costs = {name: np.zeros(len(keys)) for name in OBJECTIVE_NAMES}
    for (family, key), n in index.items():
        if family in ("k", "z", "v"):
            arc = inst.arc(*key)
            costs["f1"][n] = arc.unit_cost
            costs["f2"][n] = arc.transport_risk
            costs["f3"][n] = arc.co2_transport * arc.distance
        else:
            op = openings.get(key)
            if op is not None:
                costs["f2"][n] = _site_rate(inst, op, risk_mode)
            rates = inst.co2_ops.recycling if family == "xr" else inst.co2_ops.disposal
            costs["f3"][n] = rates.get(key, 0.0)
    return _FlowSystem(keys, eq_rows, le_rows, costs)


def _flow_solution(system: _FlowSystem, values: Sequence[float]) -> Dict[str, Dict]:
    out: Dict[str, Dict] = {"k": {}, "z": {}, "v": {}, "xr": {}, "xd": {}}
    for (family, key), value in zip(system.keys, values):
        if value > 1e-9:
            out[family][key] = float(value)
    return out


def _solve_flows(system: _FlowSystem, objective: str, p: SolveParams) -> Optional[List[float]]:
    mb = ModelBuilder("residue_flows")
    for family, key in system.keys:
        parts = key if isinstance(key, tuple) else (key,)
        mb.add_var("_".join((family,) + tuple(parts)))
    for n, (row, rhs, name) in enumerate(system.eq_rows):
        mb.add_constraint(f"eq{n}_{name}", row.items(), EQ, rhs)
    for n, (row, rhs, name) in enumerate(system.le_rows):
        mb.add_constraint(f"le{n}_{name}", row.items(), LE, rhs)
    mb.set_objective(((n, c) for n, c in enumerate(system.costs[objective]) if c != 0.0), "min")
    model = mb.build()
    if model.n_vars == 0:
        return [] if evaluate(model, {}, p.feas_tol).feasible else None
    result = solve_lp(model, p)
    if result.status != OPTIMAL:
        return None
    return [result.assignment[n] for n in range(model.n_vars)]


def _vertices(system: _FlowSystem, limit: int, tol: float = 1e-9) -> List[np.ndarray]:
    """All vertices of {y >= 0 : eq rows, le rows}."""
    n = len(system.keys)
    if n == 0:
        ok = all(abs(rhs) <= tol for _, rhs, _ in system.eq_rows) and all(rhs >= -tol for _, rhs, _ in system.le_rows)
        return [np.zeros(0)] if ok else []

    def dense(rows: List[Tuple[Dict[int, float], float, str]]) -> Tuple[np.ndarray, np.ndarray]:
        A = np.zeros((len(rows), n))
        b = np.zeros(len(rows))
        for i, (row, rhs, _) in enumerate(rows):
            for j, c in row.items():
                A[i, j] = c
            b[i] = rhs
        return A, b

    A_eq, b_eq = dense(system.eq_rows)
    A_le, b_le = dense(system.le_rows)
    G = np.vstack([A_le, -np.eye(n)])
    h = np.concatenate([b_le, np.zeros(n)])

    basis_rows: List[int] = []
    for i in range(len(A_eq)):
        trial = basis_rows + [i]
        if np.linalg.matrix_rank(A_eq[trial]) == len(trial):
            basis_rows = trial
    E, e = A_eq[basis_rows], b_eq[basis_rows]
    need = n - len(basis_rows)
    combos = math.comb(len(G), need)
    if combos > limit:
        raise OracleIntractableError(combos, limit)

    found: List[np.ndarray] = []
    for chosen in itertools.combinations(range(len(G)), need):
        M = np.vstack([E, G[list(chosen)]])
        if np.linalg.matrix_rank(M) < n:
            continue
        y = np.linalg.solve(M, np.concatenate([e, h[list(chosen)]]))
        if A_eq.size and np.max(np.abs(A_eq @ y - b_eq)) > 1e-7 * max(1.0, np.max(np.abs(b_eq))):
            continue
        if np.any(G @ y > h + 1e-7 * np.maximum(1.0, np.abs(h))):
            continue
        y = np.maximum(y, 0.0)
        if not any(np.allclose(y, other, atol=1e-9) for other in found):
            found.append(y)
    return found


# --- Config evaluation ---

@dataclass(frozen=True)
class _Prepared:
    routes: Tuple[Route, ...]
    xt: Dict[Tuple[str, str], float]
    direct: Dict[str, float]


def _prepare(inst: Instance, cfg: DiscreteConfig) -> Optional[_Prepared]:
    routes = []
    for planned in cfg.routes:
        route = _route(inst, planned)
        if route is None:
            return None
        routes.append(route)
    xt: Dict[Tuple[str, str], float] = {}
    direct: Dict[str, float] = {}
    for route in routes:
        if inst.node(route.terminal).facility == TREATMENT:
            key = (route.waste, route.terminal)
            xt[key] = xt.get(key, 0.0) + route.load
        else:
            direct[route.terminal] = direct.get(route.terminal, 0.0) + route.load
    for op in cfg.openings:
        if op.facility != TREATMENT:
            continue
        mass = math.fsum(m for (_, t), m in xt.items() if t == op.node)
        entry = inst.facility_level(TREATMENT, op.node, op.level, op.technology)
        if mass > entry.max + 1e-9:
            return None
        if mass < inst.min_threshold(TREATMENT, op.node, op.technology) - 1e-9:
            return None
    return _Prepared(tuple(routes), xt, direct)


def _solution(cfg: DiscreteConfig, prepared: _Prepared, flows: Dict[str, Dict]) -> Solution:
    return Solution(
        openings=cfg.openings,
        routes=prepared.routes,
        z=flows["z"], k=flows["k"], v=flows["v"],
        xr=flows["xr"], xt={k: m for k, m in prepared.xt.items() if m > 1e-9}, xd=flows["xd"],
    )


def oracle_optimum(
    inst: Instance,
    objective: str = "f1",
    risk_mode: Optional[str] = None,
    p: Optional[SolveParams] = None,
    limit: Optional[int] = None,
) -> Tuple[float, Solution]:
    """Global minimum of one objective over every discrete configuration."""
    if objective not in OBJECTIVE_NAMES:
        raise ValueError(f"unknown objective '{objective}'")
    risk_mode = risk_mode or config.RISK_MODE
    p = p or SolveParams()
    slot = OBJECTIVE_NAMES.index(objective)
    cache: Dict[Tuple, Optional[Tuple[_FlowSystem, List[float]]]] = {}
    best_value, best_sol = math.inf, None
    count = 0
    for cfg in enumerate_configs(inst, limit):
        count += 1
        prepared = _prepare(inst, cfg)
        if prepared is None:
            continue
        key = (cfg.openings, tuple(sorted(prepared.xt.items())), tuple(sorted(prepared.direct.items())))
        if key not in cache:
            system = _flow_system(inst, {o.node: o for o in cfg.openings}, prepared.xt, prepared.direct, risk_mode)
            values = _solve_flows(system, objective, p)
            cache[key] = None if values is None else (system, values)
        if cache[key] is None:
            continue
        system, values = cache[key]
        sol = with_objectives(inst, _solution(cfg, prepared, _flow_solution(system, values)), risk_mode)
        if sol.objectives[slot] < best_value - 1e-12 * max(1.0, abs(best_value)):
            best_value, best_sol = sol.objectives[slot], sol
    logger.debug(f"oracle: {count} configs, {len(cache)} flow subproblems for '{inst.name}'")
    if best_sol is None:
        raise OracleInfeasibleError(f"no feasible configuration for '{inst.name}'")
    return best_value, best_sol


def oracle_pareto(
    inst: Instance,
    risk_mode: Optional[str] = None,
    limit: Optional[int] = None,
) -> List[Tuple[float, float, float]]:
    """Exact nondominated objective vectors over (configuration, flow vertex) pairs, sorted."""
    risk_mode = risk_mode or config.RISK_MODE
    limit = config.ORACLE_LIMIT if limit is None else limit
    vectors: List[Tuple[float, float, float]] = []
    for cfg in enumerate_configs(inst, limit):
        prepared = _prepare(inst, cfg)
        if prepared is None:
            continue
        system = _flow_system(inst, {o.node: o for o in cfg.openings}, prepared.xt, prepared.direct, risk_mode)
        for y in _vertices(system, limit):
            sol = with_objectives(inst, _solution(cfg, prepared, _flow_solution(system, y)), risk_mode)
            vectors.append(sol.objectives)
    if not vectors:
        raise OracleInfeasibleError(f"no feasible configuration for '{inst.name}'")
    return sorted(nondominated_filter(vectors, tol=1e-9))

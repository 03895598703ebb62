"""Instance -> LinearModel translation and Solution decoding.

Constraint names carry the equation tag of the location-routing model
(``eq06_visit_G3_W1``) so infeasibility reports point at the rule that
failed. Every product of a binary routing variable with a load variable is
replaced by a linearizer ``xl`` bounded with ``big_m``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from loguru import logger

from . import config
from .errors import FormulationError, RouteReconstructionError
from .instance import (
    DISPOSAL,
    RECYCLING,
    TREATMENT,
    FATAL,
    Instance,
    Vehicle,
    validate_instance,
)
from .milp import BINARY, CONTINUOUS, EQ, GE, LE, Assignment, LinearModel, ModelBuilder

FAMILIES = (
    "x", "xl", "lo", "e", "z", "k", "v", "xr", "xt", "xd",
    "r", "t", "d", "xt_split", "xr_split", "xd_split", "slack",
)
OBJECTIVE_NAMES = ("f1", "f2", "f3")


def _n(*parts: Any) -> str:
    return "_".join(str(p) for p in parts)


@dataclass
class VarCatalog:
    """Decision family/key <-> model variable id."""
    risk_mode: str = "level-coupled"
    families: Dict[str, Dict[Any, int]] = field(default_factory=lambda: {f: {} for f in FAMILIES})
    objectives: Dict[str, Dict[int, float]] = field(default_factory=dict)
    _reverse: Dict[int, Tuple[str, Any]] = field(default_factory=dict, repr=False)

    def add(self, family: str, key: Any, var_id: int) -> int:
        if key in self.families[family]:
            raise FormulationError(f"catalog already has {family}{key}")
        self.families[family][key] = var_id
        self._reverse[var_id] = (family, key)
        return var_id

    def __getitem__(self, family: str) -> Dict[Any, int]:
        return self.families[family]

    def entry(self, var_id: int) -> Tuple[str, Any]:
        return self._reverse[var_id]

    def __len__(self) -> int:
        return sum(len(v) for v in self.families.values())

    def is_bijection(self, model: LinearModel) -> bool:
        ids = [i for fam in self.families.values() for i in fam.values()]
        return len(ids) == len(set(ids)) == model.n_vars and set(ids) == set(range(model.n_vars))

    def value(self, family: str, key: Any, a: Assignment) -> float:
        var_id = self.families[family].get(key)
        return 0.0 if var_id is None else float(a[var_id])


def big_m(inst: Instance) -> float:
    """Tightest valid bound for any load variable: the largest vehicle capacity."""
    if not inst.vehicles:
        raise FormulationError("big-M needs at least one vehicle")
    value = max(k.capacity for k in inst.vehicles)
    if not math.isfinite(value):
        raise FormulationError(f"big-M is not finite ({value})")
    return float(value)


def route_stops(inst: Instance, vehicle: Vehicle) -> List[str]:
    """Generation nodes a vehicle may visit: positive demand for its waste type."""
    w = vehicle.waste
    if w is None:
        return []
    return [g for g in inst.generation if inst.demand(w, g) > 0]


def vehicle_arcs(inst: Instance, vehicle: Vehicle) -> List[Tuple[str, str]]:
    """Routing arcs of one vehicle: depot->stop, stop->stop, stop->terminal, terminal->depot."""
    stops = route_stops(inst, vehicle)
    if not stops:
        return []
    terminals = inst.terminals_for(vehicle.waste)
    arcs = [(f, g) for f in inst.depots for g in stops]
    arcs += [(i, j) for i in stops for j in stops if i != j]
    arcs += [(g, t) for g in stops for t in terminals]
    arcs += [(t, f) for t in terminals for f in inst.depots]
    return [(i, j) for i, j in arcs if inst.arc(i, j) is not None]


def residue_links(inst: Instance) -> Dict[str, List[Tuple[str, str]]]:
    """Facility-to-facility links carrying residue flows, by flow family."""
    treats, recs, disps = (inst.facilities(f) for f in (TREATMENT, RECYCLING, DISPOSAL))

    def linked(tails: Sequence[str], heads: Sequence[str]) -> List[Tuple[str, str]]:
        return [(i, j) for i in tails for j in heads if inst.arc(i, j) is not None]

    return {"k": linked(treats, recs), "z": linked(treats, disps), "v": linked(recs, disps)}


class _ModelFactory:
    """Builds rows family by family; one instance per build."""

    def __init__(self, inst: Instance, risk_mode: str):
        self.inst = inst
        self.risk_mode = risk_mode
        self.bm = big_m(inst)
        self.mb = ModelBuilder(f"hwlrp_{inst.name}")
        self.cat = VarCatalog(risk_mode=risk_mode)
        self.arcs: Dict[str, List[Tuple[str, str]]] = {}

    def var(self, family: str, key: Any, lower: float = 0.0, upper: float = math.inf, kind: str = CONTINUOUS) -> int:
        parts = key if isinstance(key, tuple) else (key,)
        return self.cat.add(family, key, self.mb.add_var(_n(family, *parts), lower, upper, kind))

    def row(self, name: str, terms: Iterable[Tuple[int, float]], sense: str, rhs: float = 0.0) -> None:
        self.mb.add_constraint(name, terms, sense, rhs)

    # --- variables ---

    def add_variables(self) -> None:
        inst = self.inst
        for veh in inst.vehicles:
            arcs = vehicle_arcs(inst, veh)
            self.arcs[veh.id] = arcs
            for i, j in arcs:
                self.var("x", (i, j, veh.id), kind=BINARY)
        for veh in inst.vehicles:
            stops = set(route_stops(inst, veh))
            for i, j in self.arcs[veh.id]:
                # no load leaves a depot or a terminal
                self.var("xl", (i, j, veh.id), 0.0, self.bm if i in stops else 0.0)
        for veh in inst.vehicles:
            w = veh.waste
            stops = route_stops(inst, veh)
            for g in stops:
                self.var("lo", (g, veh.id), inst.demand(w, g), veh.capacity)
            if stops:
                for i in stops + inst.terminals_for(w):
                    self.var("e", (i, veh.id), 0.0, veh.max_distance)

        for family, links in residue_links(inst).items():
            for i, j in links:
                self.var(family, (i, j))

        for t in inst.facilities(TREATMENT):
            for q, h in inst.level_options(TREATMENT, t):
                self.var("t", (q, t, h), kind=BINARY)
        for r in inst.facilities(RECYCLING):
            for _, h in inst.level_options(RECYCLING, r):
                self.var("r", (r, h), kind=BINARY)
        for d in inst.facilities(DISPOSAL):
            for _, h in inst.level_options(DISPOSAL, d):
                self.var("d", (d, h), kind=BINARY)

        for w in inst.waste_types:
            if w.recyclable_only:
                continue
            for t in inst.terminals_for(w.id):
                self.var("xt", (w.id, t))
                hostable = set(inst.hostable_techs(t))
                for q, h in inst.level_options(TREATMENT, t):
                    if q in w.compatible_techs and q in hostable:
                        self.var("xt_split", (w.id, t, q, h))
        for r in inst.facilities(RECYCLING):
            self.var("xr", r)
            for _, h in inst.level_options(RECYCLING, r):
                self.var("xr_split", (r, h))
        for d in inst.facilities(DISPOSAL):
            self.var("xd", d)
            for _, h in inst.level_options(DISPOSAL, d):
                self.var("xd_split", (d, h))

    # --- routing ---

    def add_routing(self) -> None:
        inst, cat = self.inst, self.cat
        x = cat["x"]
        depots = set(inst.depots)
        for veh in inst.vehicles:
            k, w = veh.id, veh.waste
            arcs = self.arcs[veh.id]
            stops = route_stops(inst, veh)
            if not stops:
                continue
            terminals = inst.terminals_for(w)
            stop_set = set(stops)
            self.row(_n("eq04_depart", k), [(x[(i, j, k)], 1.0) for i, j in arcs if i in depots], LE, 1.0)
            for g in stops:
                inflow = [(x[(i, j, k)], 1.0) for i, j in arcs if j == g]
                outflow = [(x[(i, j, k)], -1.0) for i, j in arcs if i == g]
                self.row(_n("eq05_flow", g, k), inflow + outflow, EQ)
            for t in terminals:
                inflow = [(x[(i, j, k)], 1.0) for i, j in arcs if j == t]
                outflow = [(x[(i, j, k)], -1.0) for i, j in arcs if i == t]
                self.row(_n("eq07_return", t, k), inflow + outflow, EQ)

            for i, j in arcs:
                if i not in stop_set:
                    continue
                node = inst.node(j)
                if node.facility == TREATMENT:
                    gates = [
                        (cat["t"][(q, j, h)], -1.0)
                        for q, h in inst.level_options(TREATMENT, j)
                        if q in inst.waste(w).compatible_techs
                    ]
                    self.row(_n("eq08_gate", i, j, k), [(x[(i, j, k)], 1.0)] + gates, LE)
                elif node.facility == RECYCLING:
                    gates = [(cat["r"][(j, h)], -1.0) for _, h in inst.level_options(RECYCLING, j)]
                    self.row(_n("eq09_gate", i, j, k), [(x[(i, j, k)], 1.0)] + gates, LE)

            self._distance_rows(veh, arcs, stops, terminals)
            self._load_rows(veh, arcs, stops)

        for w in inst.waste_types:
            fleet = inst.vehicles_for(w.id)
            for g, amount in w.demand.items():
                if amount <= 0:
                    continue
                terms = [
                    (x[(i, j, veh.id)], 1.0)
                    for veh in fleet
                    for i, j in self.arcs[veh.id]
                    if i == g
                ]
                self.row(_n("eq06_visit", g, w.id), terms, EQ, 1.0)

    def _distance_rows(self, veh: Vehicle, arcs: List[Tuple[str, str]], stops: List[str], terminals: List[str]) -> None:
        inst, cat = self.inst, self.cat
        x, e = cat["x"], cat["e"]
        k, mu = veh.id, veh.max_distance
        arc_set = set(arcs)
        depots = set(inst.depots)
        stop_set = set(stops)

        for i, j in arcs:
            if i not in stop_set:
                continue
            terms = [(e[(i, k)], 1.0), (e[(j, k)], -1.0), (x[(i, j, k)], mu + inst.distance(i, j, k))]
            if (j, i) in arc_set:
                terms.append((x[(j, i, k)], mu - inst.distance(j, i, k)))
            self.row(_n("eq10_distance", i, j, k), terms, LE, mu)

        for g in stops:
            entries = [(i, j) for i, j in arcs if j == g and i in depots]
            self.row(_n("eq11_distance_lo", g, k),
                     [(e[(g, k)], 1.0)] + [(x[(f, g, k)], -inst.distance(f, g, k)) for f, _ in entries], GE)
            self.row(_n("eq11_distance_up", g, k),
                     [(e[(g, k)], 1.0)] + [(x[(f, g, k)], mu - inst.distance(f, g, k)) for f, _ in entries], LE, mu)
        for t in terminals:
            exits = [(i, j) for i, j in arcs if i == t]
            self.row(_n("eq12_distance", t, k),
                     [(e[(t, k)], 1.0)] + [(x[(t, f, k)], inst.distance(t, f, k)) for _, f in exits], LE, mu)

    def _load_rows(self, veh: Vehicle, arcs: List[Tuple[str, str]], stops: List[str]) -> None:
        inst, cat = self.inst, self.cat
        x, lo, xl = cat["x"], cat["lo"], cat["xl"]
        k, w, cap = veh.id, veh.waste, veh.capacity
        depots = set(inst.depots)
        stop_set = set(stops)

        for i, j in arcs:
            if i in stop_set and j in stop_set:
                self.row(_n("eq13_load", i, j, k),
                         [(lo[(i, k)], 1.0), (lo[(j, k)], -1.0), (x[(i, j, k)], cap)], LE, cap - inst.demand(w, j))
        for g in stops:
            amount = inst.demand(w, g)
            entries = [f for f, j in arcs if j == g and f in depots]
            self.row(_n("eq15_first_load", g, k),
                     [(lo[(g, k)], 1.0)] + [(x[(f, g, k)], -amount) for f in entries], GE)
            self.row(_n("eq16_first_load", g, k),
                     [(lo[(g, k)], 1.0)] + [(x[(f, g, k)], cap - amount) for f in entries], LE, cap)

        for i, j in arcs:
            if i not in stop_set:
                continue
            key = (i, j, k)
            self.row(_n("eq37_xl_gate", i, j, k), [(xl[key], 1.0), (x[key], -self.bm)], LE)
            self.row(_n("eq38_xl_load", i, j, k), [(xl[key], 1.0), (lo[(i, k)], -1.0)], LE)
            self.row(_n("eq39_xl_link", i, j, k),
                     [(xl[key], 1.0), (lo[(i, k)], -1.0), (x[key], -self.bm)], GE, -self.bm)

    # --- facilities and mass flows ---

    def _delivered(self, node_id: str, waste_id: Optional[str] = None) -> List[Tuple[int, float]]:
        """xl terms of every routing leg that unloads at ``node_id``."""
        xl = self.cat["xl"]
        return [
            (var_id, 1.0)
            for (i, j, k), var_id in xl.items()
            if j == node_id and (waste_id is None or self.inst.vehicle(k).waste == waste_id)
        ]

    def add_facilities(self) -> None:
        inst, cat = self.inst, self.cat
        t_var, r_var, d_var = cat["t"], cat["r"], cat["d"]
        xt, xts, xr, xrs, xd, xds = cat["xt"], cat["xt_split"], cat["xr"], cat["xr_split"], cat["xd"], cat["xd_split"]
        k_flow, z_flow, v_flow = cat["k"], cat["z"], cat["v"]

        for t in inst.facilities(TREATMENT):
            node = inst.node(t)
            options = inst.level_options(TREATMENT, t)
            wastes = [w for (w, j) in xt if j == t]
            for w in wastes:
                delivered = [(var_id, -1.0) for var_id, _ in self._delivered(t, w)]
                self.row(_n("eq17_treated", w, t), [(xt[(w, t)], 1.0)] + delivered, EQ)
                splits = [(var_id, -1.0) for (w2, j, _, _), var_id in xts.items() if w2 == w and j == t]
                self.row(_n("eq17_split", w, t), [(xt[(w, t)], 1.0)] + splits, EQ)
            for q, h in options:
                entry = inst.facility_level(TREATMENT, t, h, q)
                terms = [(var_id, 1.0) for (w, j, q2, h2), var_id in xts.items() if j == t and q2 == q and h2 == h]
                self.row(_n("eq18_split_cap", t, q, h), terms + [(t_var[(q, t, h)], -entry.max)], LE)
            total = [(xt[(w, t)], 1.0) for w in wastes]
            self.row(_n("eq18_capacity", t),
                     total + [(t_var[(q, t, h)], -inst.facility_level(TREATMENT, t, h, q).max) for q, h in options], LE)
            self.row(_n("eq19_min_throughput", t),
                     total + [(t_var[(q, t, h)], -inst.min_threshold(TREATMENT, t, q)) for q, h in options], GE)

            recyclable, residue = [], []
            for (w, j, q, h), var_id in xts.items():
                if j != t:
                    continue
                waste = inst.waste(w)
                reduction = waste.mass_reduction.get(q, 0.0)
                beta = waste.recyclable_fraction_after_tech.get(q, 0.0)
                recyclable.append((var_id, (1.0 - reduction) * beta))
                residue.append((var_id, (1.0 - reduction) * (1.0 - beta)))
            self.row(_n("eq21_recyclable_residue", t),
                     recyclable + [(var_id, -1.0) for (i, _), var_id in k_flow.items() if i == t], EQ)
            self.row(_n("eq24_disposal_residue", t),
                     residue + [(var_id, -1.0) for (i, _), var_id in z_flow.items() if i == t], EQ)

            self.row(_n("eq30_single_technology", t), [(t_var[(q, t, h)], 1.0) for q, h in options], LE, 1.0)
            if node.existing:
                for q in dict.fromkeys(q for q, _ in options):
                    available = next(tech for tech in inst.technologies if tech.id == q).availability.get(t, 0)
                    self.row(_n("eq31_existing", t, q),
                             [(t_var[(q, t, h)], 1.0) for q2, h in options if q2 == q], EQ, float(available))

        for r in inst.facilities(RECYCLING):
            node = inst.node(r)
            levels = [h for _, h in inst.level_options(RECYCLING, r)]
            inflow = [(var_id, -1.0) for (_, j), var_id in k_flow.items() if j == r]
            self.row(_n("eq20_recycled", r), [(xr[r], 1.0)] + [(v, -c) for v, c in self._delivered(r)] + inflow, EQ)
            self.row(_n("eq20_split", r), [(xr[r], 1.0)] + [(xrs[(r, h)], -1.0) for h in levels], EQ)
            for h in levels:
                cap = inst.facility_level(RECYCLING, r, h).max
                self.row(_n("eq22_split_cap", r, h), [(xrs[(r, h)], 1.0), (r_var[(r, h)], -cap)], LE)
            self.row(_n("eq22_capacity", r),
                     [(xr[r], 1.0)] + [(r_var[(r, h)], -inst.facility_level(RECYCLING, r, h).max) for h in levels], LE)
            minimum = inst.min_threshold(RECYCLING, r)
            self.row(_n("eq23_min_throughput", r), [(xr[r], 1.0)] + [(r_var[(r, h)], -minimum) for h in levels], GE)
            gamma = inst.recycling_ratio.get(r, 1.0)
            self.row(_n("eq25_recycling_residue", r),
                     [(xr[r], 1.0 - gamma)] + [(var_id, -1.0) for (i, _), var_id in v_flow.items() if i == r], EQ)
            single = _n("eq32_existing", r) if node.existing else _n("eq30_single_level", r)
            self.row(single, [(r_var[(r, h)], 1.0) for h in levels], EQ if node.existing else LE, 1.0)

        for d in inst.facilities(DISPOSAL):
            node = inst.node(d)
            levels = [h for _, h in inst.level_options(DISPOSAL, d)]
            inflow = [(var_id, -1.0) for (_, j), var_id in {**z_flow, **v_flow}.items() if j == d]
            self.row(_n("eq26_disposed", d), [(xd[d], 1.0)] + inflow, EQ)
            self.row(_n("eq27_split", d), [(xd[d], 1.0)] + [(xds[(d, h)], -1.0) for h in levels], EQ)
            for h in levels:
                cap = inst.facility_level(DISPOSAL, d, h).max
                self.row(_n("eq27_split_cap", d, h), [(xds[(d, h)], 1.0), (d_var[(d, h)], -cap)], LE)
            self.row(_n("eq27_capacity", d),
                     [(xd[d], 1.0)] + [(d_var[(d, h)], -inst.facility_level(DISPOSAL, d, h).max) for h in levels], LE)
            minimum = inst.min_threshold(DISPOSAL, d)
            self.row(_n("eq28_min_throughput", d), [(xd[d], 1.0)] + [(d_var[(d, h)], -minimum) for h in levels], GE)
            single = _n("eq33_existing", d) if node.existing else _n("eq30_single_level", d)
            self.row(single, [(d_var[(d, h)], 1.0) for h in levels], EQ if node.existing else LE, 1.0)

        balance = [(var_id, 1.0) for var_id in xt.values()]
        balance += [(var_id, 1.0) for var_id in xr.values()]
        balance += [(var_id, -1.0) for var_id in k_flow.values()]
        self.row("eq29_mass_balance", balance, EQ, inst.total_demand)

        for family in ("k", "z", "v"):
            for (i, j), var_id in cat[family].items():
                arc = inst.arc(i, j)
                if arc.risk_cap is not None:
                    self.row(_n("eq34_link_risk", i, j), [(var_id, arc.transport_risk)], LE, arc.risk_cap)

    # --- objectives ---

    def add_objectives(self) -> None:
        inst, cat = self.inst, self.cat
        f1: List[Tuple[int, float]] = []
        stops = set(inst.generation)
        for (i, j, k), var_id in cat["xl"].items():
            # only the unloading leg, stop -> facility, is charged
            if i in stops and j not in stops:
                f1.append((var_id, inst.arc(i, j).unit_cost))
        for family in ("z", "v", "k"):
            for (i, j), var_id in cat[family].items():
                f1.append((var_id, inst.arc(i, j).unit_cost))
        for (q, t, h), var_id in cat["t"].items():
            if not inst.node(t).existing:
                f1.append((var_id, inst.facility_level(TREATMENT, t, h, q).invest_cost))
        for (r, h), var_id in cat["r"].items():
            if not inst.node(r).existing:
                f1.append((var_id, inst.facility_level(RECYCLING, r, h).invest_cost))
        for (d, h), var_id in cat["d"].items():
            if not inst.node(d).existing:
                f1.append((var_id, inst.facility_level(DISPOSAL, d, h).invest_cost))

        literal = self.risk_mode == "all-levels"
        f2: List[Tuple[int, float]] = []
        for family in ("k", "z", "v"):
            for (i, j), var_id in cat[family].items():
                f2.append((var_id, inst.arc(i, j).transport_risk))
        for (w, t, q, h), var_id in cat["xt_split"].items():
            levels = [h2 for q2, h2 in inst.level_options(TREATMENT, t) if q2 == q] if literal else [h]
            f2.append((var_id, math.fsum(inst.facility_level(TREATMENT, t, h2, q).op_risk for h2 in levels)))
        for family, facility in (("xr_split", RECYCLING), ("xd_split", DISPOSAL)):
            for (i, h), var_id in cat[family].items():
                levels = [h2 for _, h2 in inst.level_options(facility, i)] if literal else [h]
                f2.append((var_id, math.fsum(inst.facility_level(facility, i, h2).op_risk for h2 in levels)))

        f3: List[Tuple[int, float]] = []
        for r, var_id in cat["xr"].items():
            f3.append((var_id, inst.co2_ops.recycling.get(r, 0.0)))
        for (w, t, q, h), var_id in cat["xt_split"].items():
            f3.append((var_id, inst.co2_ops.treatment.get((t, q), 0.0)))
        for d, var_id in cat["xd"].items():
            f3.append((var_id, inst.co2_ops.disposal.get(d, 0.0)))
        for family in ("k", "z", "v"):
            for (i, j), var_id in cat[family].items():
                arc = inst.arc(i, j)
                f3.append((var_id, arc.co2_transport * arc.distance))

        for name, terms in zip(OBJECTIVE_NAMES, (f1, f2, f3)):
            expr: Dict[int, float] = {}
            for var_id, coef in terms:
                expr[var_id] = expr.get(var_id, 0.0) + coef
            cat.objectives[name] = {v: c for v, c in expr.items() if c != 0.0}


def build_base(inst: Instance, risk_mode: Optional[str] = None) -> Tuple[ModelBuilder, VarCatalog]:
    """Variables, all constraint rows and the three objective expressions; no objective set."""
    risk_mode = risk_mode or config.RISK_MODE
    if risk_mode not in config.RISK_MODES:
        raise FormulationError(f"unknown risk mode '{risk_mode}'")
    fatal = [f for f in validate_instance(inst) if f.severity == FATAL]
    if fatal:
        raise FormulationError(f"instance '{inst.name}' has {len(fatal)} fatal finding(s); first: {fatal[0]}")
    factory = _ModelFactory(inst, risk_mode)
    factory.add_variables()
    factory.add_routing()
    factory.add_facilities()
    factory.add_objectives()
    return factory.mb, factory.cat


def build_model(inst: Instance, objective: str = "f1", risk_mode: Optional[str] = None) -> Tuple[LinearModel, VarCatalog]:
    if objective not in OBJECTIVE_NAMES:
        raise FormulationError(f"unknown objective '{objective}'")
    mb, cat = build_base(inst, risk_mode)
    mb.set_objective(cat.objectives[objective].items(), "min")
    model = mb.build()
    logger.debug(f"Built {objective} model for '{inst.name}': {model.n_vars} vars, {len(model.constraints)} rows")
    return model, cat


# --- Solutions ---

@dataclass(frozen=True)
class Opening:
    node: str
    facility: str
    level: str
    technology: Optional[str] = None
    existing: bool = False


@dataclass(frozen=True)
class Route:
    vehicle: str
    waste: str
    nodes: Tuple[str, ...]
    load: float
    length: float

    @property
    def stops(self) -> Tuple[str, ...]:
        return self.nodes[1:-2]

    @property
    def terminal(self) -> str:
        return self.nodes[-2]


@dataclass(frozen=True)
class Solution:
    openings: Tuple[Opening, ...] = ()
    routes: Tuple[Route, ...] = ()
    z: Mapping[Tuple[str, str], float] = field(default_factory=dict)
    k: Mapping[Tuple[str, str], float] = field(default_factory=dict)
    v: Mapping[Tuple[str, str], float] = field(default_factory=dict)
    xr: Mapping[str, float] = field(default_factory=dict)
    xt: Mapping[Tuple[str, str], float] = field(default_factory=dict)
    xd: Mapping[str, float] = field(default_factory=dict)
    objectives: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def opening(self, node_id: str) -> Optional[Opening]:
        return next((o for o in self.openings if o.node == node_id), None)

    def throughput(self, facility: str, node_id: str) -> float:
        if facility == TREATMENT:
            return math.fsum(m for (_, t), m in self.xt.items() if t == node_id)
        if facility == RECYCLING:
            return float(self.xr.get(node_id, 0.0))
        return float(self.xd.get(node_id, 0.0))


_ZERO = 1e-9


def _positive(values: Mapping[Any, int], a: Assignment) -> Dict[Any, float]:
    return {key: float(a[var_id]) for key, var_id in values.items() if a[var_id] > _ZERO}


def _route_length(inst: Instance, vehicle: str, nodes: Sequence[str]) -> float:
    return math.fsum(inst.distance(i, j, vehicle) for i, j in zip(nodes, nodes[1:]))


def extract_solution(inst: Instance, catalog: VarCatalog, a: Assignment) -> Solution:
    """Decode an integral assignment; objectives are recomputed from the decoded decisions."""
    depots = set(inst.depots)
    routes: List[Route] = []
    for veh in inst.vehicles:
        used = [key for key, var_id in catalog["x"].items() if key[2] == veh.id and a[var_id] > 0.5]
        if not used:
            continue
        succ: Dict[str, List[str]] = {}
        for i, j, _ in used:
            succ.setdefault(i, []).append(j)
        starts = [i for i in succ if i in depots]
        if len(starts) != 1:
            raise RouteReconstructionError(f"vehicle {veh.id}: {len(starts)} depot departures")
        nodes = [starts[0]]
        consumed = 0
        while True:
            nxt = succ.get(nodes[-1], [])
            if len(nxt) != 1:
                raise RouteReconstructionError(f"vehicle {veh.id}: {len(nxt)} successors after {nodes[-1]}")
            nodes.append(nxt[0])
            consumed += 1
            if nodes[-1] in depots:
                break
            if nodes[-1] in nodes[:-1]:
                raise RouteReconstructionError(f"vehicle {veh.id}: revisits {nodes[-1]}")
        if consumed != len(used):
            raise RouteReconstructionError(f"vehicle {veh.id}: {len(used) - consumed} arc(s) off the depot walk")
        load = math.fsum(inst.demand(veh.waste, g) for g in nodes[1:-2])
        routes.append(Route(veh.id, veh.waste, tuple(nodes), load, _route_length(inst, veh.id, nodes)))

    openings: List[Opening] = []
    for (q, t, h), var_id in catalog["t"].items():
        if a[var_id] > 0.5:
            openings.append(Opening(t, TREATMENT, h, q, inst.node(t).existing))
    for family, facility in (("r", RECYCLING), ("d", DISPOSAL)):
        for (i, h), var_id in catalog[family].items():
            if a[var_id] > 0.5:
                openings.append(Opening(i, facility, h, None, inst.node(i).existing))

    sol = Solution(
        openings=tuple(openings),
        routes=tuple(routes),
        z=_positive(catalog["z"], a),
        k=_positive(catalog["k"], a),
        v=_positive(catalog["v"], a),
        xr=_positive(catalog["xr"], a),
        xt=_positive(catalog["xt"], a),
        xd=_positive(catalog["xd"], a),
    )
    return with_objectives(inst, sol, catalog.risk_mode)


def with_objectives(inst: Instance, sol: Solution, risk_mode: Optional[str] = None) -> Solution:
    return replace(sol, objectives=evaluate_objectives(inst, sol, risk_mode))


def evaluate_objectives(inst: Instance, sol: Solution, risk_mode: Optional[str] = None) -> Tuple[float, float, float]:
    """(cost, risk, CO2) computed from the decoded decisions with loads multiplied in literally."""
    risk_mode = risk_mode or config.RISK_MODE
    cost: List[float] = []
    risk: List[float] = []
    co2: List[float] = []

    for route in sol.routes:
        # only the unloading leg is charged, at the full collected load
        last, terminal = route.nodes[-3], route.nodes[-2]
        carried = math.fsum(inst.demand(route.waste, g) for g in route.nodes[1:-2])
        cost.append(inst.arc(last, terminal).unit_cost * carried)
    for flows in (sol.z, sol.k, sol.v):
        for (i, j), amount in flows.items():
            arc = inst.arc(i, j)
            cost.append(arc.unit_cost * amount)
            risk.append(arc.transport_risk * amount)
            co2.append(arc.co2_transport * arc.distance * amount)

    for op in sol.openings:
        entry = inst.facility_level(op.facility, op.node, op.level, op.technology)
        if not op.existing:
            cost.append(entry.invest_cost)
        mass = sol.throughput(op.facility, op.node)
        if risk_mode == "all-levels":
            rate = math.fsum(
                inst.facility_level(op.facility, op.node, h, op.technology).op_risk
                for q, h in inst.level_options(op.facility, op.node)
                if q == op.technology
            )
        else:
            rate = entry.op_risk
        risk.append(rate * mass)
        if op.facility == TREATMENT:
            co2.append(inst.co2_ops.treatment.get((op.node, op.technology), 0.0) * mass)

    co2.extend(inst.co2_ops.recycling.get(r, 0.0) * m for r, m in sol.xr.items())
    co2.extend(inst.co2_ops.disposal.get(d, 0.0) * m for d, m in sol.xd.items())
    return math.fsum(cost), math.fsum(risk), math.fsum(co2)


# --- Domain-level feasibility ---

@dataclass(frozen=True)
class FeasibilityViolation:
    tag: str
    subject: str
    detail: str

    def __str__(self) -> str:
        return f"{self.tag} [{self.subject}]: {self.detail}"


def _tol(*magnitudes: float) -> float:
    return 1e-6 * max(1.0, *(abs(m) for m in magnitudes))


def check_solution_feasible(inst: Instance, sol: Solution) -> List[FeasibilityViolation]:
    """Re-check every model rule directly on the decoded decisions."""
    out: List[FeasibilityViolation] = []

    def bad(tag: str, subject: str, detail: str) -> None:
        out.append(FeasibilityViolation(tag, subject, detail))

    depots = set(inst.depots)
    served: Dict[Tuple[str, str], int] = {}
    delivered: Dict[Tuple[str, str], float] = {}
    departures: Dict[str, int] = {}

    for route in sol.routes:
        veh = inst.vehicle(route.vehicle)
        departures[veh.id] = departures.get(veh.id, 0) + 1
        nodes = route.nodes
        if len(nodes) < 4 or nodes[0] not in depots or nodes[-1] not in depots:
            bad("eq04_07_depot", veh.id, f"route {list(nodes)} must start and end at a depot")
            continue
        if veh.waste != route.waste:
            bad("eq06_vehicle_compat", veh.id, f"carries {route.waste}, serves {veh.waste}")
        for g in route.stops:
            if inst.demand(route.waste, g) <= 0:
                bad("eq05_route_structure", veh.id, f"{g} has no demand for {route.waste}")
            served[(g, route.waste)] = served.get((g, route.waste), 0) + 1
        if route.terminal not in inst.terminals_for(route.waste):
            bad("eq05_route_structure", veh.id, f"{route.terminal} cannot receive {route.waste}")
        missing = [(i, j) for i, j in zip(nodes, nodes[1:]) if inst.arc(i, j) is None]
        if missing:
            bad("eq05_route_structure", veh.id, f"no link for {missing}")
            continue

        load = math.fsum(inst.demand(route.waste, g) for g in route.stops)
        if load > veh.capacity + _tol(veh.capacity):
            bad("eq13_16_load", veh.id, f"load {load:g} exceeds capacity {veh.capacity:g}")
        length = _route_length(inst, veh.id, nodes)
        if length > veh.max_distance + _tol(veh.max_distance):
            bad("eq10_12_distance", veh.id, f"length {length:g} exceeds limit {veh.max_distance:g}")
        key = (route.waste, route.terminal)
        delivered[key] = delivered.get(key, 0.0) + load

        op = sol.opening(route.terminal)
        facility = inst.node(route.terminal).facility
        if facility == TREATMENT:
            if op is None or op.technology not in inst.waste(route.waste).compatible_techs:
                bad("eq08_technology_gate", route.terminal, f"{route.waste} unloaded without a compatible open technology")
        elif op is None:
            bad("eq09_recycling_gate", route.terminal, "unloaded at a closed recycling facility")

    for k, count in departures.items():
        if count > 1:
            bad("eq04_single_departure", k, f"{count} routes")
    for w in inst.waste_types:
        for g, amount in w.demand.items():
            if amount > 0 and served.get((g, w.id), 0) != 1:
                bad("eq06_single_visit", f"{g}/{w.id}", f"served {served.get((g, w.id), 0)} time(s)")

    for w in inst.waste_types:
        for t in inst.facilities(TREATMENT):
            expected = delivered.get((w.id, t), 0.0)
            got = sol.xt.get((w.id, t), 0.0)
            if abs(expected - got) > _tol(expected):
                bad("eq17_treated_mass", f"{t}/{w.id}", f"xt {got:g} != delivered {expected:g}")
    for r in inst.facilities(RECYCLING):
        direct = math.fsum(m for (w, j), m in delivered.items() if j == r)
        inflow = math.fsum(m for (_, j), m in sol.k.items() if j == r)
        got = sol.xr.get(r, 0.0)
        if abs(direct + inflow - got) > _tol(got):
            bad("eq20_recycled_mass", r, f"xr {got:g} != {direct:g} direct + {inflow:g} residue")

    tags = {
        TREATMENT: ("eq18_capacity", "eq19_min_throughput"),
        RECYCLING: ("eq22_capacity", "eq23_min_throughput"),
        DISPOSAL: ("eq27_capacity", "eq28_min_throughput"),
    }
    for facility, (cap_tag, min_tag) in tags.items():
        for node_id in inst.facilities(facility):
            node = inst.node(node_id)
            ops = [o for o in sol.openings if o.node == node_id]
            mass = sol.throughput(facility, node_id)
            if len(ops) > 1:
                bad("eq30_single_opening", node_id, f"{len(ops)} openings")
            if node.existing and not ops:
                bad("eq31_33_existing", node_id, "existing facility is not open")
            if not ops:
                if mass > _tol(0.0):
                    bad(cap_tag, node_id, f"closed facility processes {mass:g}")
                continue
            op = ops[0]
            entry = inst.facility_level(facility, node_id, op.level, op.technology)
            if entry is None:
                bad("eq30_single_opening", node_id, f"no level '{op.level}' for {op.technology or facility}")
                continue
            if facility == TREATMENT and op.technology not in inst.hostable_techs(node_id):
                bad("eq31_33_existing", node_id, f"technology {op.technology} is not available here")
            if mass > entry.max + _tol(entry.max):
                bad(cap_tag, node_id, f"throughput {mass:g} exceeds level {op.level} capacity {entry.max:g}")
            minimum = inst.min_threshold(facility, node_id, op.technology)
            if mass < minimum - _tol(minimum):
                bad(min_tag, node_id, f"throughput {mass:g} below minimum {minimum:g}")

    for t in inst.facilities(TREATMENT):
        op = sol.opening(t)
        recyclable = residue = 0.0
        for (w, j), mass in sol.xt.items():
            if j != t or op is None:
                continue
            waste = inst.waste(w)
            reduction = waste.mass_reduction.get(op.technology, 0.0)
            beta = waste.recyclable_fraction_after_tech.get(op.technology, 0.0)
            recyclable += mass * (1.0 - reduction) * beta
            residue += mass * (1.0 - reduction) * (1.0 - beta)
        out_k = math.fsum(m for (i, _), m in sol.k.items() if i == t)
        out_z = math.fsum(m for (i, _), m in sol.z.items() if i == t)
        if abs(recyclable - out_k) > _tol(recyclable):
            bad("eq21_recyclable_residue", t, f"{out_k:g} sent to recycling, {recyclable:g} produced")
        if abs(residue - out_z) > _tol(residue):
            bad("eq24_disposal_residue", t, f"{out_z:g} sent to disposal, {residue:g} produced")
    for r in inst.facilities(RECYCLING):
        expected = sol.xr.get(r, 0.0) * (1.0 - inst.recycling_ratio.get(r, 1.0))
        got = math.fsum(m for (i, _), m in sol.v.items() if i == r)
        if abs(expected - got) > _tol(expected):
            bad("eq25_recycling_residue", r, f"{got:g} sent to disposal, {expected:g} produced")
    for d in inst.facilities(DISPOSAL):
        inflow = math.fsum(m for flows in (sol.z, sol.v) for (_, j), m in flows.items() if j == d)
        got = sol.xd.get(d, 0.0)
        if abs(inflow - got) > _tol(inflow):
            bad("eq26_disposal_mass", d, f"xd {got:g} != inflow {inflow:g}")

    demand = inst.total_demand
    processed = math.fsum(sol.xt.values()) + math.fsum(sol.xr.values()) - math.fsum(sol.k.values())
    if abs(demand - processed) > _tol(demand):
        bad("eq29_mass_balance", "network", f"demand {demand:g} != processed {processed:g}")

    for family, flows in (("k", sol.k), ("z", sol.z), ("v", sol.v)):
        for (i, j), amount in flows.items():
            arc = inst.arc(i, j)
            if arc is None or amount < -_ZERO:
                bad("eq35_domain", f"{family}:{i}->{j}", f"flow {amount:g} on a missing or negative link")
                continue
            if arc.risk_cap is not None and arc.transport_risk * amount > arc.risk_cap + _tol(arc.risk_cap):
                bad("eq34_link_risk", f"{i}->{j}", f"risk {arc.transport_risk * amount:g} exceeds cap {arc.risk_cap:g}")
    return out


# --- Solution documents ---

def solution_to_document(sol: Solution) -> Dict[str, Any]:
    def pairs(flows: Mapping[Tuple[str, str], float]) -> List[Dict[str, Any]]:
        return [{"from": i, "to": j, "amount": m} for (i, j), m in flows.items()]

    return {
        "objectives": dict(zip(OBJECTIVE_NAMES, sol.objectives)),
        "openings": [
            {"node": o.node, "facility": o.facility, "level": o.level, "technology": o.technology, "existing": o.existing}
            for o in sol.openings
        ],
        "routes": [
            {"vehicle": r.vehicle, "waste": r.waste, "nodes": list(r.nodes), "load": r.load, "length": r.length}
            for r in sol.routes
        ],
        "flows": {"k": pairs(sol.k), "z": pairs(sol.z), "v": pairs(sol.v)},
        "processed": {
            "xr": dict(sol.xr),
            "xt": [{"waste": w, "node": t, "amount": m} for (w, t), m in sol.xt.items()],
            "xd": dict(sol.xd),
        },
    }


def solution_from_document(doc: Mapping[str, Any]) -> Solution:
    def pairs(rows: Iterable[Mapping[str, Any]]) -> Dict[Tuple[str, str], float]:
        return {(row["from"], row["to"]): float(row["amount"]) for row in rows}

    try:
        flows = doc.get("flows", {})
        processed = doc.get("processed", {})
        objectives = doc.get("objectives", {})
        return Solution(
            openings=tuple(
                Opening(o["node"], o["facility"], str(o["level"]), o.get("technology"), bool(o.get("existing", False)))
                for o in doc.get("openings", [])
            ),
            routes=tuple(
                Route(r["vehicle"], r["waste"], tuple(r["nodes"]), float(r["load"]), float(r["length"]))
                for r in doc.get("routes", [])
            ),
            z=pairs(flows.get("z", [])),
            k=pairs(flows.get("k", [])),
            v=pairs(flows.get("v", [])),
            xr={i: float(m) for i, m in processed.get("xr", {}).items()},
            xt={(row["waste"], row["node"]): float(row["amount"]) for row in processed.get("xt", [])},
            xd={i: float(m) for i, m in processed.get("xd", {}).items()},
            objectives=tuple(float(objectives.get(name, 0.0)) for name in OBJECTIVE_NAMES),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise FormulationError(f"malformed solution document: {e}") from None

"""Problem data for the hazardous-waste location-routing problem.

Instances are immutable after construction and can be shared across
concurrent solves. The textual form is YAML checked against
``INSTANCE_SCHEMA`` (see docs/instance_schema.md).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import yaml
from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match

from . import config
from .errors import DuplicateNodeError, InstanceError, InstanceParseError, SchemaViolationError

# --- Node kinds ---
DEPOT = "depot"
GENERATION = "generation"
RECYCLING = "recycling"
TREATMENT = "treatment"
DISPOSAL = "disposal"
FACILITY_TYPES = (RECYCLING, TREATMENT, DISPOSAL)
NODE_KINDS = (
    DEPOT, GENERATION,
    "recycling-candidate", "recycling-existing",
    "treatment-candidate", "treatment-existing",
    "disposal-candidate", "disposal-existing",
)
PROVENANCE_TAGS = ("paper", "synthetic", "derived")


@dataclass(frozen=True)
class Node:
    id: str
    kind: str
    district: Optional[str] = None
    x: Optional[float] = None
    y: Optional[float] = None

    @property
    def facility(self) -> Optional[str]:
        """recycling / treatment / disposal, or None for depots and generation nodes."""
        head = self.kind.split("-")[0]
        return head if head in FACILITY_TYPES else None

    @property
    def existing(self) -> bool:
        return self.kind.endswith("-existing")


@dataclass(frozen=True)
class WasteType:
    id: str
    demand: Mapping[str, float]
    tech_compat: Mapping[str, int] = field(default_factory=dict)
    recyclable_fraction_after_tech: Mapping[str, float] = field(default_factory=dict)
    mass_reduction: Mapping[str, float] = field(default_factory=dict)
    risk_potential: float = 0.0

    @property
    def compatible_techs(self) -> List[str]:
        return [q for q, flag in self.tech_compat.items() if flag == 1]

    @property
    def recyclable_only(self) -> bool:
        return not self.compatible_techs


@dataclass(frozen=True)
class Vehicle:
    id: str
    waste_compat: Mapping[str, int]
    capacity: float
    max_distance: float

    @property
    def waste(self) -> Optional[str]:
        served = [w for w, flag in self.waste_compat.items() if flag == 1]
        return served[0] if len(served) == 1 else None


@dataclass(frozen=True)
class Technology:
    id: str
    # existing treatment node -> 0/1
    availability: Mapping[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class FacilityLevel:
    max: float
    invest_cost: float
    op_risk: float


@dataclass(frozen=True)
class CapacityLevelSpec:
    level: str
    treatment: Mapping[Tuple[str, str], FacilityLevel] = field(default_factory=dict)
    recycling: Mapping[str, FacilityLevel] = field(default_factory=dict)
    disposal: Mapping[str, FacilityLevel] = field(default_factory=dict)


@dataclass(frozen=True)
class MinThresholds:
    treatment: Mapping[Tuple[str, str], float] = field(default_factory=dict)
    recycling: Mapping[str, float] = field(default_factory=dict)
    disposal: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ArcData:
    from_node: str
    to_node: str
    distance: float
    unit_cost: float = 0.0
    transport_risk: float = 0.0
    risk_cap: Optional[float] = None
    co2_transport: float = 0.0
    directed: bool = False
    distance_by_vehicle: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Co2Rates:
    """Operating emissions in kg CO2 per ton processed."""
    recycling: Mapping[str, float] = field(default_factory=dict)
    treatment: Mapping[Tuple[str, str], float] = field(default_factory=dict)
    disposal: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Instance:
    name: str
    nodes: Tuple[Node, ...]
    waste_types: Tuple[WasteType, ...]
    vehicles: Tuple[Vehicle, ...]
    technologies: Tuple[Technology, ...]
    capacity_levels: Tuple[CapacityLevelSpec, ...]
    arcs: Tuple[ArcData, ...]
    recycling_ratio: Mapping[str, float]
    co2_ops: Co2Rates = field(default_factory=Co2Rates)
    min_thresholds: MinThresholds = field(default_factory=MinThresholds)
    eps_constant: float = 1e-4
    metadata: Mapping[str, Any] = field(default_factory=dict)
    provenance: Mapping[str, str] = field(default_factory=dict)

    # --- lookups ---

    @cached_property
    def _nodes(self) -> Dict[str, Node]:
        return {n.id: n for n in self.nodes}

    def node(self, node_id: str) -> Node:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise InstanceError(f"unknown node '{node_id}'") from None

    def has_node(self, node_id: str) -> bool:
        return node_id in self._nodes

    def ids(self, *kinds: str) -> List[str]:
        return [n.id for n in self.nodes if n.kind in kinds]

    def facilities(self, facility: str) -> List[str]:
        return [n.id for n in self.nodes if n.facility == facility]

    @property
    def depots(self) -> List[str]:
        return self.ids(DEPOT)

    @property
    def generation(self) -> List[str]:
        return self.ids(GENERATION)

    @property
    def levels(self) -> List[str]:
        return [spec.level for spec in self.capacity_levels]

    def waste(self, waste_id: str) -> WasteType:
        for w in self.waste_types:
            if w.id == waste_id:
                return w
        raise InstanceError(f"unknown waste type '{waste_id}'")

    def vehicle(self, vehicle_id: str) -> Vehicle:
        for k in self.vehicles:
            if k.id == vehicle_id:
                return k
        raise InstanceError(f"unknown vehicle '{vehicle_id}'")

    def vehicles_for(self, waste_id: str) -> List[Vehicle]:
        return [k for k in self.vehicles if k.waste == waste_id]

    def demand(self, waste_id: str, node_id: str) -> float:
        return float(self.waste(waste_id).demand.get(node_id, 0.0))

    @property
    def total_demand(self) -> float:
        return math.fsum(d for w in self.waste_types for d in w.demand.values())

    @cached_property
    def _arcs(self) -> Dict[Tuple[str, str], ArcData]:
        index: Dict[Tuple[str, str], ArcData] = {}
        for arc in self.arcs:
            index[(arc.from_node, arc.to_node)] = arc
        for arc in self.arcs:
            if not arc.directed:
                index.setdefault((arc.to_node, arc.from_node), arc)
        return index

    def arc(self, i: str, j: str) -> Optional[ArcData]:
        """Arc data for the link i->j, or None when the instance has no such link."""
        return self._arcs.get((i, j))

    def distance(self, i: str, j: str, vehicle: Optional[str] = None) -> Optional[float]:
        arc = self.arc(i, j)
        if arc is None:
            return None
        if vehicle is not None and vehicle in arc.distance_by_vehicle:
            return float(arc.distance_by_vehicle[vehicle])
        return float(arc.distance)

    def level_spec(self, level: str) -> CapacityLevelSpec:
        for spec in self.capacity_levels:
            if spec.level == level:
                return spec
        raise InstanceError(f"unknown capacity level '{level}'")

    def facility_level(self, facility: str, node_id: str, level: str,
                       technology: Optional[str] = None) -> Optional[FacilityLevel]:
        spec = self.level_spec(level)
        if facility == TREATMENT:
            return spec.treatment.get((node_id, technology))
        return getattr(spec, facility).get(node_id)

    def hostable_techs(self, node_id: str) -> List[str]:
        """Technologies a treatment node can operate: any with a level entry, restricted
        to the available one at existing sites."""
        node = self.node(node_id)
        techs = []
        for tech in self.technologies:
            if not any((node_id, tech.id) in spec.treatment for spec in self.capacity_levels):
                continue
            if node.existing and tech.availability.get(node_id, 0) != 1:
                continue
            techs.append(tech.id)
        return techs

    def level_options(self, facility: str, node_id: str) -> List[Tuple[Optional[str], str]]:
        """(technology, level) pairs a facility may open with, in instance order."""
        if facility == TREATMENT:
            return [
                (q, spec.level)
                for q in self.hostable_techs(node_id)
                for spec in self.capacity_levels
                if (node_id, q) in spec.treatment
            ]
        return [(None, spec.level) for spec in self.capacity_levels if node_id in getattr(spec, facility)]

    def min_threshold(self, facility: str, node_id: str, technology: Optional[str] = None) -> float:
        if facility == TREATMENT:
            return float(self.min_thresholds.treatment.get((node_id, technology), 0.0))
        return float(getattr(self.min_thresholds, facility).get(node_id, 0.0))

    def terminals_for(self, waste_id: str) -> List[str]:
        """Facilities a vehicle carrying ``waste_id`` may unload at."""
        waste = self.waste(waste_id)
        if waste.recyclable_only:
            return self.facilities(RECYCLING)
        compatible = set(waste.compatible_techs)
        return [t for t in self.facilities(TREATMENT) if compatible & set(self.hostable_techs(t))]


# --- Validation ---

FATAL = "fatal"
WARNING = "warning"


@dataclass(frozen=True)
class Finding:
    severity: str
    entity: str
    message: str

    def __str__(self) -> str:
        return f"[{self.severity}] {self.entity}: {self.message}"


def has_fatal(findings: Iterable[Finding]) -> bool:
    return any(f.severity == FATAL for f in findings)


def _ratio_ok(value: float) -> bool:
    return 0.0 <= value <= 1.0


def validate_instance(inst: Instance) -> List[Finding]:
    """Check every data invariant; problems are returned as findings, never raised."""
    findings: List[Finding] = []

    def fatal(entity: str, message: str) -> None:
        findings.append(Finding(FATAL, entity, message))

    def warn(entity: str, message: str) -> None:
        findings.append(Finding(WARNING, entity, message))

    seen = set()
    for node in inst.nodes:
        if node.id in seen:
            fatal(f"nodes/{node.id}", "duplicate node id")
        seen.add(node.id)
        if node.kind not in NODE_KINDS:
            fatal(f"nodes/{node.id}", f"unknown kind '{node.kind}'")
    if not inst.depots:
        fatal("nodes", "no depot")
    if not inst.generation:
        fatal("nodes", "no generation node")

    tech_ids = {t.id for t in inst.technologies}
    waste_ids = {w.id for w in inst.waste_types}
    generation = set(inst.generation)

    for waste in inst.waste_types:
        entity = f"waste_types/{waste.id}"
        for node_id, amount in waste.demand.items():
            if node_id not in generation:
                fatal(f"{entity}/demand/{node_id}", "demand at a node that is not a generation node")
            if amount < 0:
                fatal(f"{entity}/demand/{node_id}", f"negative demand {amount}")
        for tech, flag in waste.tech_compat.items():
            if tech not in tech_ids:
                fatal(f"{entity}/tech_compat/{tech}", "unknown technology")
            if flag not in (0, 1):
                fatal(f"{entity}/tech_compat/{tech}", "compatibility must be 0 or 1")
        for label, ratios in (("recyclable_fraction_after_tech", waste.recyclable_fraction_after_tech),
                              ("mass_reduction", waste.mass_reduction)):
            for tech, value in ratios.items():
                if not _ratio_ok(value):
                    fatal(f"{entity}/{label}/{tech}", f"ratio {value} outside [0, 1]")
            for tech in waste.compatible_techs:
                if tech not in ratios:
                    fatal(f"{entity}/{label}/{tech}", "missing ratio for a compatible technology")
        if waste.risk_potential < 0:
            fatal(f"{entity}/risk_potential", "negative risk potential")
        if any(d > 0 for d in waste.demand.values()) and not inst.terminals_for(waste.id):
            fatal(entity, "no facility can receive this waste type")

    for vehicle in inst.vehicles:
        entity = f"vehicles/{vehicle.id}"
        if vehicle.capacity <= 0:
            fatal(entity, "capacity must be > 0")
        if vehicle.max_distance <= 0:
            fatal(entity, "max_distance must be > 0")
        served = [w for w, flag in vehicle.waste_compat.items() if flag == 1]
        if len(served) != 1:
            fatal(entity, f"must serve exactly one waste type, serves {len(served)}")
        for w in vehicle.waste_compat:
            if w not in waste_ids:
                fatal(f"{entity}/waste_compat/{w}", "unknown waste type")

    for waste in inst.waste_types:
        fleet = inst.vehicles_for(waste.id)
        biggest = max((k.capacity for k in fleet), default=0.0)
        for node_id, amount in waste.demand.items():
            if amount <= 0:
                continue
            entity = f"waste_types/{waste.id}/demand/{node_id}"
            if not fleet:
                fatal(entity, "no compatible vehicle for a positive demand")
            elif amount > biggest:
                fatal(entity, f"demand {amount} exceeds any single vehicle capacity ({biggest})")

    for tech in inst.technologies:
        for node_id, flag in tech.availability.items():
            if not inst.has_node(node_id) or inst.node(node_id).kind != "treatment-existing":
                fatal(f"technologies/{tech.id}/availability/{node_id}", "not an existing treatment node")
            if flag not in (0, 1):
                fatal(f"technologies/{tech.id}/availability/{node_id}", "availability must be 0 or 1")

    for spec in inst.capacity_levels:
        for facility in FACILITY_TYPES:
            for key, entry in getattr(spec, facility).items():
                node_id = key[0] if facility == TREATMENT else key
                entity = f"capacity_levels/{spec.level}/{facility}/{node_id}"
                if not inst.has_node(node_id) or inst.node(node_id).facility != facility:
                    fatal(entity, f"not a {facility} node")
                if facility == TREATMENT and key[1] not in tech_ids:
                    fatal(entity, f"unknown technology '{key[1]}'")
                if entry.max < 0 or entry.invest_cost < 0 or entry.op_risk < 0:
                    fatal(entity, "capacity, cost and risk must be >= 0")

    for facility in FACILITY_TYPES:
        for node_id in inst.facilities(facility):
            node = inst.node(node_id)
            entity = f"{facility}/{node_id}"
            options = inst.level_options(facility, node_id)
            if not options:
                (fatal if node.existing else warn)(entity, "no capacity level can be opened here")
                continue
            if facility == TREATMENT and node.existing:
                available = [t.id for t in inst.technologies if t.availability.get(node_id, 0) == 1]
                if len(available) != 1:
                    fatal(entity, f"existing treatment site needs exactly one available technology, has {len(available)}")
            techs = sorted({q for q, _ in options}, key=lambda q: [t.id for t in inst.technologies].index(q)) \
                if facility == TREATMENT else [None]
            for tech in techs:
                maxima = [inst.facility_level(facility, node_id, h, tech).max
                          for q, h in options if q == tech]
                minimum = inst.min_threshold(facility, node_id, tech)
                where = entity if tech is None else f"{entity}/{tech}"
                if minimum < 0:
                    fatal(where, f"negative minimum threshold {minimum}")
                elif minimum == 0:
                    warn(where, "minimum threshold is zero")
                elif minimum > max(maxima):
                    fatal(where, f"minimum threshold {minimum} exceeds every level capacity")
        if facility == RECYCLING:
            for node_id in inst.facilities(RECYCLING):
                gamma = inst.recycling_ratio.get(node_id)
                if gamma is None:
                    fatal(f"recycling_ratio/{node_id}", "missing recycling ratio")
                elif not _ratio_ok(gamma):
                    fatal(f"recycling_ratio/{node_id}", f"ratio {gamma} outside [0, 1]")

    for arc in inst.arcs:
        entity = f"arcs/{arc.from_node}-{arc.to_node}"
        for end in (arc.from_node, arc.to_node):
            if not inst.has_node(end):
                fatal(entity, f"unknown node '{end}'")
        if arc.distance < 0 or any(d < 0 for d in arc.distance_by_vehicle.values()):
            fatal(entity, "negative distance")
        if arc.unit_cost < 0 or arc.transport_risk < 0 or arc.co2_transport < 0:
            fatal(entity, "cost, risk and emission rates must be >= 0")
        if arc.risk_cap is not None and arc.risk_cap < 0:
            fatal(entity, "risk_cap must be >= 0")

    for facility in FACILITY_TYPES:
        for key, rate in getattr(inst.co2_ops, facility).items():
            if rate < 0:
                fatal(f"co2_ops/{facility}/{key}", "negative emission rate")

    low, high = config.EPS_CONSTANT_RANGE
    if not low <= inst.eps_constant <= high:
        fatal("eps_constant", f"{inst.eps_constant} outside [{low}, {high}]")
    for path, tag in inst.provenance.items():
        if tag not in PROVENANCE_TAGS:
            fatal(f"provenance/{path}", f"unknown provenance '{tag}'")
    return findings


# --- Schema ---

_ID = {"type": "string", "minLength": 1}
_NUMBER = {"type": "number"}
_NONNEG = {"type": "number", "minimum": 0}
_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_RATIO = {"type": "number", "minimum": 0, "maximum": 1}
_FLAG = {"enum": [0, 1]}


def _record(properties: Dict[str, Any], required: Sequence[str]) -> Dict[str, Any]:
    return {"type": "object", "properties": properties, "required": list(required), "additionalProperties": False}


def _map_of(values: Dict[str, Any], default: Any = None) -> Dict[str, Any]:
    schema = {"type": "object", "additionalProperties": values}
    if default is not None:
        schema["default"] = default
    return schema


def _list_of(item: Dict[str, Any], default: Any = None) -> Dict[str, Any]:
    schema = {"type": "array", "items": item}
    if default is not None:
        schema["default"] = default
    return schema


_LEVEL_FIELDS = {"max": _NONNEG, "invest_cost": _NONNEG, "op_risk": _NONNEG}

INSTANCE_SCHEMA: Dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "Hazardous-waste location-routing instance",
    "type": "object",
    "additionalProperties": False,
    "required": ["name", "nodes", "waste_types", "vehicles", "technologies",
                 "capacity_levels", "arcs", "recycling_ratio"],
    "properties": {
        "name": _ID,
        "eps_constant": {"type": "number", "minimum": 1e-6, "maximum": 1e-3, "default": 1e-4},
        "nodes": _list_of(_record({
            "id": _ID,
            "kind": {"enum": list(NODE_KINDS)},
            "district": {"type": ["string", "null"], "default": None},
            "x": {"type": ["number", "null"], "default": None},
            "y": {"type": ["number", "null"], "default": None},
        }, ["id", "kind"])),
        "waste_types": _list_of(_record({
            "id": _ID,
            "demand": _map_of(_NONNEG),
            "tech_compat": _map_of(_FLAG, default={}),
            "recyclable_fraction_after_tech": _map_of(_RATIO, default={}),
            "mass_reduction": _map_of(_RATIO, default={}),
            "risk_potential": {**_NONNEG, "default": 0.0},
        }, ["id", "demand"])),
        "vehicles": _list_of(_record({
            "id": _ID,
            "waste_compat": _map_of(_FLAG),
            "capacity": _POSITIVE,
            "max_distance": _POSITIVE,
        }, ["id", "waste_compat", "capacity", "max_distance"])),
        "technologies": _list_of(_record({
            "id": _ID,
            "availability": _map_of(_FLAG, default={}),
        }, ["id"])),
        "capacity_levels": _list_of(_record({
            "level": _ID,
            "treatment": _list_of(_record({"node": _ID, "technology": _ID, **_LEVEL_FIELDS},
                                          ["node", "technology", "max", "invest_cost", "op_risk"]), default=[]),
            "recycling": _list_of(_record({"node": _ID, **_LEVEL_FIELDS},
                                          ["node", "max", "invest_cost", "op_risk"]), default=[]),
            "disposal": _list_of(_record({"node": _ID, **_LEVEL_FIELDS},
                                         ["node", "max", "invest_cost", "op_risk"]), default=[]),
        }, ["level"])),
        "min_thresholds": {**_record({
            "treatment": _list_of(_record({"node": _ID, "technology": _ID, "min": _NUMBER},
                                          ["node", "technology", "min"]), default=[]),
            "recycling": _list_of(_record({"node": _ID, "min": _NUMBER}, ["node", "min"]), default=[]),
            "disposal": _list_of(_record({"node": _ID, "min": _NUMBER}, ["node", "min"]), default=[]),
        }, []), "default": {}},
        "arcs": _list_of(_record({
            "from": _ID,
            "to": _ID,
            "distance": _NONNEG,
            "unit_cost": {**_NONNEG, "default": 0.0},
            "transport_risk": {**_NONNEG, "default": 0.0},
            "risk_cap": {"type": ["number", "null"], "minimum": 0, "default": None},
            "co2_transport": {**_NONNEG, "default": 0.0},
            "directed": {"type": "boolean", "default": False},
            "distance_by_vehicle": _map_of(_NONNEG, default={}),
        }, ["from", "to", "distance"])),
        "recycling_ratio": _map_of(_RATIO),
        "co2_ops": {**_record({
            "recycling": _list_of(_record({"node": _ID, "rate": _NONNEG}, ["node", "rate"]), default=[]),
            "treatment": _list_of(_record({"node": _ID, "technology": _ID, "rate": _NONNEG},
                                          ["node", "technology", "rate"]), default=[]),
            "disposal": _list_of(_record({"node": _ID, "rate": _NONNEG}, ["node", "rate"]), default=[]),
        }, []), "default": {}},
        "metadata": {"type": "object", "default": {}},
        "provenance": _map_of({"enum": list(PROVENANCE_TAGS)}, default={}),
    },
}

_VALIDATOR = Draft202012Validator(INSTANCE_SCHEMA)


def _field_path(path: Iterable[Any]) -> str:
    out = ""
    for part in path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "<root>"


def _default(*path: str) -> Any:
    schema = INSTANCE_SCHEMA
    for part in path:
        schema = schema["properties"][part] if "properties" in schema else schema["items"]["properties"][part]
    return schema["default"]


def _get(record: Mapping[str, Any], key: str, *schema_path: str) -> Any:
    return record[key] if key in record else _default(*schema_path, key)


# --- Parsing ---

def _load_text(text: Union[str, bytes]) -> Any:
    try:
        return yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark or e.context_mark
        raise InstanceParseError(
            str(e.problem or e.context or "syntax error"),
            mark.line + 1 if mark else None,
            mark.column + 1 if mark else None,
        ) from None
    except yaml.YAMLError as e:
        raise InstanceParseError(str(e)) from None


def _floats(mapping: Mapping[str, Any]) -> Dict[str, float]:
    return {str(k): float(v) for k, v in mapping.items()}


def _flags(mapping: Mapping[str, Any]) -> Dict[str, int]:
    return {str(k): int(v) for k, v in mapping.items()}


def _unique(records: Sequence[Mapping[str, Any]], key: str, where: str) -> None:
    seen = set()
    for rec in records:
        token = rec[key]
        if token in seen:
            if where == "nodes":
                raise DuplicateNodeError(token)
            raise SchemaViolationError(where, f"duplicate {key} '{token}'")
        seen.add(token)


def _level(rec: Mapping[str, Any]) -> FacilityLevel:
    return FacilityLevel(float(rec["max"]), float(rec["invest_cost"]), float(rec["op_risk"]))


def parse_instance(doc: Union[str, bytes, Mapping[str, Any]]) -> Instance:
    """Build an Instance from a YAML document (text or already-loaded mapping)."""
    data = _load_text(doc) if isinstance(doc, (str, bytes)) else doc
    if not isinstance(data, Mapping):
        raise SchemaViolationError("<root>", "an instance document must be a mapping")
    error = best_match(_VALIDATOR.iter_errors(data))
    if error is not None:
        raise SchemaViolationError(_field_path(error.absolute_path), error.message)

    _unique(data["nodes"], "id", "nodes")
    _unique(data["waste_types"], "id", "waste_types")
    _unique(data["vehicles"], "id", "vehicles")
    _unique(data["technologies"], "id", "technologies")
    _unique(data["capacity_levels"], "level", "capacity_levels")

    nodes = tuple(
        Node(
            n["id"], n["kind"], _get(n, "district", "nodes"),
            None if _get(n, "x", "nodes") is None else float(n["x"]),
            None if _get(n, "y", "nodes") is None else float(n["y"]),
        )
        for n in data["nodes"]
    )
    wastes = tuple(
        WasteType(
            w["id"], _floats(w["demand"]),
            _flags(_get(w, "tech_compat", "waste_types")),
            _floats(_get(w, "recyclable_fraction_after_tech", "waste_types")),
            _floats(_get(w, "mass_reduction", "waste_types")),
            float(_get(w, "risk_potential", "waste_types")),
        )
        for w in data["waste_types"]
    )
    vehicles = tuple(
        Vehicle(k["id"], _flags(k["waste_compat"]), float(k["capacity"]), float(k["max_distance"]))
        for k in data["vehicles"]
    )
    techs = tuple(Technology(t["id"], _flags(_get(t, "availability", "technologies"))) for t in data["technologies"])
    levels = tuple(
        CapacityLevelSpec(
            spec["level"],
            {(e["node"], e["technology"]): _level(e) for e in _get(spec, "treatment", "capacity_levels")},
            {e["node"]: _level(e) for e in _get(spec, "recycling", "capacity_levels")},
            {e["node"]: _level(e) for e in _get(spec, "disposal", "capacity_levels")},
        )
        for spec in data["capacity_levels"]
    )
    mins = _get(data, "min_thresholds")
    thresholds = MinThresholds(
        {(e["node"], e["technology"]): float(e["min"]) for e in _get(mins, "treatment", "min_thresholds")},
        {e["node"]: float(e["min"]) for e in _get(mins, "recycling", "min_thresholds")},
        {e["node"]: float(e["min"]) for e in _get(mins, "disposal", "min_thresholds")},
    )
    seen_arcs = set()
    arcs = []
    for a in data["arcs"]:
        directed = bool(_get(a, "directed", "arcs"))
        key = (a["from"], a["to"]) if directed else tuple(sorted((a["from"], a["to"])))
        if (key, directed) in seen_arcs:
            raise SchemaViolationError("arcs", f"duplicate arc {a['from']}-{a['to']}")
        seen_arcs.add((key, directed))
        cap = _get(a, "risk_cap", "arcs")
        arcs.append(ArcData(
            a["from"], a["to"], float(a["distance"]),
            float(_get(a, "unit_cost", "arcs")),
            float(_get(a, "transport_risk", "arcs")),
            None if cap is None else float(cap),
            float(_get(a, "co2_transport", "arcs")),
            directed,
            _floats(_get(a, "distance_by_vehicle", "arcs")),
        ))
    co2 = _get(data, "co2_ops")
    co2_ops = Co2Rates(
        {e["node"]: float(e["rate"]) for e in _get(co2, "recycling", "co2_ops")},
        {(e["node"], e["technology"]): float(e["rate"]) for e in _get(co2, "treatment", "co2_ops")},
        {e["node"]: float(e["rate"]) for e in _get(co2, "disposal", "co2_ops")},
    )
    return Instance(
        name=data["name"],
        nodes=nodes,
        waste_types=wastes,
        vehicles=vehicles,
        technologies=techs,
        capacity_levels=levels,
        arcs=tuple(arcs),
        recycling_ratio=_floats(data["recycling_ratio"]),
        co2_ops=co2_ops,
        min_thresholds=thresholds,
        eps_constant=float(_get(data, "eps_constant")),
        metadata=dict(_get(data, "metadata")),
        provenance=dict(_get(data, "provenance")),
    )


# --- Serialization ---

def _level_doc(entry: FacilityLevel) -> Dict[str, float]:
    return {"max": entry.max, "invest_cost": entry.invest_cost, "op_risk": entry.op_risk}


def instance_to_document(inst: Instance) -> Dict[str, Any]:
    """Plain-data form of ``inst`` in the schema layout."""
    return {
        "name": inst.name,
        "eps_constant": inst.eps_constant,
        "nodes": [
            {"id": n.id, "kind": n.kind, "district": n.district, "x": n.x, "y": n.y}
            for n in inst.nodes
        ],
        "waste_types": [
            {
                "id": w.id,
                "demand": dict(w.demand),
                "tech_compat": dict(w.tech_compat),
                "recyclable_fraction_after_tech": dict(w.recyclable_fraction_after_tech),
                "mass_reduction": dict(w.mass_reduction),
                "risk_potential": w.risk_potential,
            }
            for w in inst.waste_types
        ],
        "vehicles": [
            {"id": k.id, "waste_compat": dict(k.waste_compat), "capacity": k.capacity, "max_distance": k.max_distance}
            for k in inst.vehicles
        ],
        "technologies": [{"id": t.id, "availability": dict(t.availability)} for t in inst.technologies],
        "capacity_levels": [
            {
                "level": spec.level,
                "treatment": [{"node": i, "technology": q, **_level_doc(e)} for (i, q), e in spec.treatment.items()],
                "recycling": [{"node": i, **_level_doc(e)} for i, e in spec.recycling.items()],
                "disposal": [{"node": i, **_level_doc(e)} for i, e in spec.disposal.items()],
            }
            for spec in inst.capacity_levels
        ],
        "min_thresholds": {
            "treatment": [{"node": i, "technology": q, "min": v}
                          for (i, q), v in inst.min_thresholds.treatment.items()],
            "recycling": [{"node": i, "min": v} for i, v in inst.min_thresholds.recycling.items()],
            "disposal": [{"node": i, "min": v} for i, v in inst.min_thresholds.disposal.items()],
        },
        "arcs": [
            {
                "from": a.from_node, "to": a.to_node, "distance": a.distance,
                "unit_cost": a.unit_cost, "transport_risk": a.transport_risk, "risk_cap": a.risk_cap,
                "co2_transport": a.co2_transport, "directed": a.directed,
                "distance_by_vehicle": dict(a.distance_by_vehicle),
            }
            for a in inst.arcs
        ],
        "recycling_ratio": dict(inst.recycling_ratio),
        "co2_ops": {
            "recycling": [{"node": i, "rate": v} for i, v in inst.co2_ops.recycling.items()],
            "treatment": [{"node": i, "technology": q, "rate": v} for (i, q), v in inst.co2_ops.treatment.items()],
            "disposal": [{"node": i, "rate": v} for i, v in inst.co2_ops.disposal.items()],
        },
        "metadata": dict(inst.metadata),
        "provenance": dict(inst.provenance),
    }


def serialize_instance(inst: Instance) -> str:
    """YAML text such that ``parse_instance(serialize_instance(x)) == x``."""
    return yaml.safe_dump(instance_to_document(inst), sort_keys=False, default_flow_style=False, allow_unicode=True)


def load_instance(path: Union[str, Path]) -> Instance:
    return parse_instance(Path(path).read_text(encoding="utf-8"))


def dump_instance(inst: Instance, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize_instance(inst), encoding="utf-8")
    return path


# --- Scenario transforms ---

def scale_demand(inst: Instance, factor: float) -> Instance:
    if not factor > 0:
        raise InstanceError(f"demand scale factor must be > 0, got {factor}")
    wastes = tuple(replace(w, demand={i: d * factor for i, d in w.demand.items()}) for w in inst.waste_types)
    return replace(inst, name=f"{inst.name}@demand×{factor:g}", waste_types=wastes)


def rescale_capacity(inst: Instance, factors: Sequence[float], label: str = "rescaled") -> Instance:
    """Multiply each level's maxima by the matching factor (level order)."""
    if len(factors) != len(inst.capacity_levels):
        raise InstanceError(f"{len(factors)} capacity factors for {len(inst.capacity_levels)} levels")
    if any(f <= 0 for f in factors):
        raise InstanceError("capacity factors must be > 0")

    def scaled(entries: Mapping[Any, FacilityLevel], f: float) -> Dict[Any, FacilityLevel]:
        return {key: replace(entry, max=entry.max * f) for key, entry in entries.items()}

    levels = tuple(
        replace(spec, treatment=scaled(spec.treatment, f), recycling=scaled(spec.recycling, f),
                disposal=scaled(spec.disposal, f))
        for spec, f in zip(inst.capacity_levels, factors)
    )
    return replace(inst, name=f"{inst.name}@capacity-{label}", capacity_levels=levels)


def collapse_capacity_levels(inst: Instance) -> Instance:
    """One level per facility with no effective upper bound and a zero minimum.

    Cost and operating risk are taken from each facility's last (largest) level.
    """
    big = max(inst.total_demand * 10.0, 1.0)

    def merged(facility: str) -> Dict[Any, FacilityLevel]:
        out: Dict[Any, FacilityLevel] = {}
        for spec in inst.capacity_levels:
            for key, entry in getattr(spec, facility).items():
                out[key] = replace(entry, max=big)
        return out

    single = CapacityLevelSpec("single", merged(TREATMENT), merged(RECYCLING), merged(DISPOSAL))
    zero = MinThresholds(
        {key: 0.0 for key in inst.min_thresholds.treatment},
        {key: 0.0 for key in inst.min_thresholds.recycling},
        {key: 0.0 for key in inst.min_thresholds.disposal},
    )
    return replace(inst, name=f"{inst.name}@capacity-none", capacity_levels=(single,), min_thresholds=zero)


# --- Synthetic generator ---

@dataclass(frozen=True)
class SynthDims:
    n_gen: int = 1
    n_rec: int = 1
    n_treat: int = 1
    n_disp: int = 1
    n_waste: int = 1
    n_vehicles: int = 1
    n_levels: int = 1


# compatible technologies per waste type, cycled
_WASTE_PATTERNS: Tuple[Tuple[str, ...], ...] = (("chemical",), (), ("incineration",), ("incineration", "chemical"))
_TECHS = ("incineration", "chemical")


def _r(value: float, digits: int) -> float:
    return float(round(float(value), digits))


def synth_instance(seed: int, dims: Union[SynthDims, Mapping[str, int], None] = None) -> Instance:
    """Random but valid instance; a pure function of (seed, dims)."""
    if dims is None:
        dims = SynthDims()
    elif not isinstance(dims, SynthDims):
        dims = SynthDims(**dims)
    for name, value in asdict(dims).items():
        if value < 1:
            raise InstanceError(f"dimension {name} must be >= 1, got {value}")
    if dims.n_vehicles < dims.n_waste:
        raise InstanceError("n_vehicles must be >= n_waste so every waste type has a vehicle")

    rng = np.random.default_rng(seed)
    layout = (
        [("F1", DEPOT)]
        + [(f"G{i + 1}", GENERATION) for i in range(dims.n_gen)]
        + [(f"R{i + 1}", "recycling-candidate") for i in range(dims.n_rec)]
        + [(f"T{i + 1}", "treatment-candidate") for i in range(dims.n_treat)]
        + [(f"D{i + 1}", "disposal-candidate") for i in range(dims.n_disp)]
    )
    coords = rng.uniform(0.0, 10.0, size=(len(layout), 2))
    nodes = tuple(Node(nid, kind, None, _r(x, 3), _r(y, 3)) for (nid, kind), (x, y) in zip(layout, coords))
    gens = [n.id for n in nodes if n.kind == GENERATION]
    recs = [n.id for n in nodes if n.facility == RECYCLING]
    treats = [n.id for n in nodes if n.facility == TREATMENT]
    disps = [n.id for n in nodes if n.facility == DISPOSAL]

    wastes = []
    for w in range(dims.n_waste):
        techs = _WASTE_PATTERNS[w % len(_WASTE_PATTERNS)]
        demand = {g: float(rng.integers(1, 10)) for g in gens}
        beta = {q: (_r(rng.uniform(0.2, 0.4), 3) if q == "chemical" else 0.0) for q in techs}
        reduction = {q: _r(rng.uniform(0.7, 0.9) if q == "incineration" else rng.uniform(0.1, 0.3), 3)
                     for q in techs}
        wastes.append(WasteType(
            f"W{w + 1}", demand, {q: 1 for q in techs}, beta, reduction, _r(rng.uniform(0.05, 0.2), 3),
        ))

    fleet: Dict[str, List[str]] = {w.id: [] for w in wastes}
    for k in range(dims.n_vehicles):
        fleet[wastes[k % dims.n_waste].id].append(f"K{k + 1}")
    max_distance = 15.0 * (dims.n_gen + 2)
    vehicles = []
    for k in range(dims.n_vehicles):
        waste = wastes[k % dims.n_waste]
        total = sum(waste.demand.values())
        capacity = math.ceil(total / len(fleet[waste.id])) + max(waste.demand.values())
        vehicles.append(Vehicle(f"K{k + 1}", {waste.id: 1}, float(capacity), max_distance))

    total_all = sum(sum(w.demand.values()) for w in wastes)
    base_cost = {i: rng.uniform(50.0, 150.0, size=len(_TECHS)) for i in recs + treats + disps}
    base_risk = {i: rng.uniform(0.1, 1.0, size=len(_TECHS)) for i in recs + treats + disps}
    levels = []
    for h in range(dims.n_levels):
        cap = _r(total_all * 1.2 * (h + 1) / dims.n_levels, 3)

        def entry(node_id: str, slot: int = 0) -> FacilityLevel:
            return FacilityLevel(cap, _r(base_cost[node_id][slot] * (1 + 0.5 * h), 2),
                                 _r(base_risk[node_id][slot] * (1 + 0.1 * h), 4))

        levels.append(CapacityLevelSpec(
            f"L{h + 1}",
            {(i, q): entry(i, s) for i in treats for s, q in enumerate(_TECHS)},
            {i: entry(i) for i in recs},
            {i: entry(i) for i in disps},
        ))
    smallest = _r(total_all * 1.2 / dims.n_levels, 3)
    minimum = _r(0.01 * smallest, 4)
    thresholds = MinThresholds(
        {(i, q): minimum for i in treats for q in _TECHS},
        {i: minimum for i in recs},
        {i: minimum for i in disps},
    )

    arcs = []
    for a in range(len(nodes)):
        for b in range(a + 1, len(nodes)):
            dist = _r(math.hypot(nodes[a].x - nodes[b].x, nodes[a].y - nodes[b].y), 3)
            risk = _r(rng.uniform(0.01, 0.1), 4)
            arcs.append(ArcData(
                nodes[a].id, nodes[b].id, dist,
                unit_cost=_r(0.5 * dist, 4),
                transport_risk=risk,
                risk_cap=_r(risk * 2.0 * total_all + 1.0, 3),
                co2_transport=1.68,
            ))

    co2 = Co2Rates(
        {i: _r(398.0 * rng.uniform(0.9, 1.1), 1) for i in recs},
        {(i, q): _r((980.0 if q == "incineration" else 280.0) * rng.uniform(0.9, 1.1), 1)
         for i in treats for q in _TECHS},
        {i: _r(271.0 * rng.uniform(0.9, 1.1), 1) for i in disps},
    )
    gamma = {i: _r(rng.uniform(0.9, 0.98), 3) for i in recs}

    return Instance(
        name=f"synth-{seed}",
        nodes=nodes,
        waste_types=tuple(wastes),
        vehicles=tuple(vehicles),
        technologies=tuple(Technology(q) for q in _TECHS),
        capacity_levels=tuple(levels),
        arcs=tuple(arcs),
        recycling_ratio=gamma,
        co2_ops=co2,
        min_thresholds=thresholds,
        metadata={
            "generator": "synth_instance",
            "seed": int(seed),
            "dims": asdict(dims),
            "oracle_tractable": dims.n_gen <= 6,
        },
        provenance={"*": "synthetic"},
    )


def case_study_instance() -> Instance:
    """The district case study with published data and synthesized distances/splits."""
    from .case_study import build_case_study

    return build_case_study()

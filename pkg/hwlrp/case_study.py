"""District case study: published tables plus deterministically synthesized geometry.

Published values live in the module constants below and are copied into the
instance metadata unchanged. Node coordinates, distances and the split of
district totals across demand nodes are not published; they are generated
from a fixed seed and labelled ``synthetic`` in the provenance map.
"""
from __future__ import annotations

import math
from typing import Dict, List, Tuple

import numpy as np

from .instance import (
    ArcData,
    CapacityLevelSpec,
    Co2Rates,
    FacilityLevel,
    Instance,
    MinThresholds,
    Node,
    Technology,
    Vehicle,
    WasteType,
)

DISTRICTS = ("I", "II", "III", "IV", "V", "VI")

# 発生割合 (%): 産業プロセス / 医療部門, 廃棄物種 I..IV
WASTE_SHARE_INDUSTRIAL = (0.15, 0.13, 0.20, 0.05)
WASTE_SHARE_HEALTH = (0.10, 0.30, 0.15, 0.08)

# 施設設置費 (million Toman): 地区 -> 容量レベル 5 / 10 / 15
ESTABLISHMENT_COST = {
    "I": (1572.0, 1932.0, 2241.0),
    "II": (1275.0, 1583.0, 1987.0),
    "III": (1463.0, 1892.0, 2340.0),
    "IV": (1098.0, 1386.0, 1791.0),
    "V": (1137.0, 1408.0, 1853.0),
    "VI": (847.0, 1230.0, 1596.0),
}

# 地区別の有害廃棄物発生量 (t/年)
DISTRICT_WASTE = {"I": 13746.0, "II": 8190.0, "III": 7120.0, "IV": 8961.0, "V": 5167.0, "VI": 4329.0}
COLLECTED_SHARE = 0.20

CAPACITY_TIERS_PER_DAY = (5.0, 10.0, 15.0)
DAYS_PER_YEAR = 365.0

# kg CO2 / t
CO2_RECYCLING = 398.0
CO2_INCINERATION = 980.0
CO2_CHEMICAL = 280.0
CO2_DISPOSAL = 271.0
CO2_TRANSPORT = 1.68

RISK_CONSEQUENCE_RANGE = (0.01e4, 3.32e4)
RISK_PROBABILITY = {"recycling": 20e-6, "incineration": 50e-6, "chemical": 60e-6, "disposal": 30e-6}
ACCIDENT_RATE_PER_KM = 0.4e-6
RELEASE_PROBABILITY = 0.9
EXPOSURE_WIDTH_KM = 0.8
POPULATION_DENSITY = {
    "I": (501.0, 700.0), "II": (351.0, 500.0), "III": (401.0, 600.0),
    "IV": (251.0, 400.0), "V": (151.0, 250.0), "VI": (0.0, 200.0),
}

WASTE_RISK_POTENTIAL = (0.05, 0.2, 0.2, 0.2)
RESIDUE_RISK_POTENTIAL = {
    "disposable_waste": 0.1,
    "treatment_to_recycling": 0.05,
    "treatment_to_disposal": 0.1,
    "recycling_to_disposal": 0.1,
}

RECYCLABLE_AFTER = {"incineration": 0.0, "chemical": 0.30}
MASS_REDUCTION = {"incineration": 0.80, "chemical": 0.20}
RECYCLING_RATIO = 0.95
UNIT_COST_PER_KM = 0.01

N_TRUCKS = 12
# 公表値なし: 以下は合成値
TRUCK_CAPACITY = 1500.0
TRUCK_MAX_DISTANCE = 100.0
MIN_THRESHOLD = 182.5
DEMAND_NODES = {"I": 3, "II": 2, "III": 2, "IV": 2, "V": 2, "VI": 2}
SEED = 2019

# 廃棄物種 I..IV の適合技術
WASTE_TECHS: Tuple[Tuple[str, ...], ...] = ((), ("incineration",), ("chemical",), ("incineration", "chemical"))

_CENTRES = {
    "I": (0.0, 0.0), "II": (-6.0, 4.0), "III": (6.0, 5.0),
    "IV": (-5.0, -5.0), "V": (1.0, 7.5), "VI": (6.5, -4.0),
}


def waste_type_shares() -> Tuple[float, ...]:
    """Both sector rows averaged per waste type, normalised to sum to 1."""
    averaged = [(a + b) / 2.0 for a, b in zip(WASTE_SHARE_INDUSTRIAL, WASTE_SHARE_HEALTH)]
    total = math.fsum(averaged)
    return tuple(v / total for v in averaged)


def _density(node: Node) -> float:
    low, high = POPULATION_DENSITY[node.district]
    return (low + high) / 2.0


def _layout(rng: np.random.Generator) -> List[Node]:
    nodes = [Node("F0", "depot", "I", 0.5, 0.5)]

    def place(node_id: str, kind: str, district: str) -> Node:
        cx, cy = _CENTRES[district]
        dx, dy = rng.uniform(-2.5, 2.5, size=2)
        return Node(node_id, kind, district, round(cx + float(dx), 2), round(cy + float(dy), 2))

    g = 0
    for district in DISTRICTS:
        for _ in range(DEMAND_NODES[district]):
            g += 1
            nodes.append(place(f"G{g}", "generation", district))
    for n, district in enumerate(DISTRICTS, start=1):
        nodes.append(place(f"R{n}", "recycling-candidate", district))
    for n, district in enumerate(DISTRICTS, start=1):
        nodes.append(place(f"T{n}", "treatment-candidate", district))
    for n, district in enumerate(DISTRICTS, start=1):
        nodes.append(place(f"D{n}", "disposal-candidate", district))
    nodes.append(place("RE1", "recycling-existing", "I"))
    nodes.append(place("TE1", "treatment-existing", "I"))
    nodes.append(place("DE1", "disposal-existing", "I"))
    nodes.append(place("DE4", "disposal-existing", "IV"))
    return nodes


def _site_risk(kind: str, level_index: int) -> float:
    consequence = sum(RISK_CONSEQUENCE_RANGE) / 2.0
    return consequence * RISK_PROBABILITY[kind] * (1.0 + 0.1 * level_index)


def _link_risk(potential: float, a: Node, b: Node, length: float) -> float:
    """Risk per ton moved over a link: potential x exposed population x accident probability."""
    density = (_density(a) + _density(b)) / 2.0
    exposed = density * EXPOSURE_WIDTH_KM * length
    probability = ACCIDENT_RATE_PER_KM * RELEASE_PROBABILITY * length
    return potential * exposed * probability * 1000.0


def build_case_study() -> Instance:
    rng = np.random.default_rng(SEED)
    nodes = _layout(rng)
    by_id = {n.id: n for n in nodes}
    gens = [n for n in nodes if n.kind == "generation"]

    shares = waste_type_shares()
    wastes = []
    for w, techs in enumerate(WASTE_TECHS):
        demand = {}
        for g in gens:
            district_mass = DISTRICT_WASTE[g.district] * COLLECTED_SHARE * shares[w]
            demand[g.id] = round(district_mass / DEMAND_NODES[g.district], 4)
        wastes.append(WasteType(
            id=f"W{w + 1}",
            demand=demand,
            tech_compat={q: int(q in techs) for q in ("incineration", "chemical")},
            recyclable_fraction_after_tech={q: RECYCLABLE_AFTER[q] for q in techs},
            mass_reduction={q: MASS_REDUCTION[q] for q in techs},
            risk_potential=WASTE_RISK_POTENTIAL[w],
        ))

    vehicles = tuple(
        Vehicle(f"K{k + 1}", {f"W{k // 3 + 1}": 1}, TRUCK_CAPACITY, TRUCK_MAX_DISTANCE)
        for k in range(N_TRUCKS)
    )

    recs = [n for n in nodes if n.facility == "recycling"]
    treats = [n for n in nodes if n.facility == "treatment"]
    disps = [n for n in nodes if n.facility == "disposal"]

    def cost(node: Node, level_index: int) -> float:
        return ESTABLISHMENT_COST[node.district][level_index]

    levels = []
    for h, tier in enumerate(CAPACITY_TIERS_PER_DAY):
        cap = tier * DAYS_PER_YEAR
        treatment: Dict[Tuple[str, str], FacilityLevel] = {}
        for node in treats:
            techs = ("incineration",) if node.existing else ("incineration", "chemical")
            for q in techs:
                treatment[(node.id, q)] = FacilityLevel(cap, cost(node, h), _site_risk(q, h))
        levels.append(CapacityLevelSpec(
            level=f"{tier:g}",
            treatment=treatment,
            recycling={n.id: FacilityLevel(cap, cost(n, h), _site_risk("recycling", h)) for n in recs},
            disposal={n.id: FacilityLevel(cap, cost(n, h), _site_risk("disposal", h)) for n in disps},
        ))

    thresholds = MinThresholds(
        treatment={key: MIN_THRESHOLD for key in levels[0].treatment},
        recycling={n.id: MIN_THRESHOLD for n in recs},
        disposal={n.id: MIN_THRESHOLD for n in disps},
    )

    residue_potential = {
        ("treatment", "recycling"): RESIDUE_RISK_POTENTIAL["treatment_to_recycling"],
        ("treatment", "disposal"): RESIDUE_RISK_POTENTIAL["treatment_to_disposal"],
        ("recycling", "disposal"): RESIDUE_RISK_POTENTIAL["recycling_to_disposal"],
    }
    arcs = []
    for a_idx, a in enumerate(nodes):
        for b in nodes[a_idx + 1:]:
            length = round(math.hypot(a.x - b.x, a.y - b.y), 2)
            potential = residue_potential.get((a.facility, b.facility)) or residue_potential.get((b.facility, a.facility))
            arcs.append(ArcData(
                a.id, b.id, length,
                unit_cost=round(UNIT_COST_PER_KM * length, 6),
                transport_risk=0.0 if potential is None else _link_risk(potential, a, b, length),
                co2_transport=CO2_TRANSPORT,
            ))

    co2 = Co2Rates(
        recycling={n.id: CO2_RECYCLING for n in recs},
        treatment={key: (CO2_INCINERATION if key[1] == "incineration" else CO2_CHEMICAL) for key in levels[0].treatment},
        disposal={n.id: CO2_DISPOSAL for n in disps},
    )

    metadata = {
        "districts": list(DISTRICTS),
        "district_waste": dict(DISTRICT_WASTE),
        "total_waste": math.fsum(DISTRICT_WASTE.values()),
        "collected_share": COLLECTED_SHARE,
        "waste_share": {"industrial": list(WASTE_SHARE_INDUSTRIAL), "health": list(WASTE_SHARE_HEALTH)},
        "establishment_cost": {d: list(c) for d, c in ESTABLISHMENT_COST.items()},
        "capacity_tiers_per_day": list(CAPACITY_TIERS_PER_DAY),
        "risk_consequence_range": list(RISK_CONSEQUENCE_RANGE),
        "risk_probability": dict(RISK_PROBABILITY),
        "population_density": {d: list(r) for d, r in POPULATION_DENSITY.items()},
        "waste_risk_potential": list(WASTE_RISK_POTENTIAL),
        "residue_risk_potential": dict(RESIDUE_RISK_POTENTIAL),
        "co2": {
            "recycling": CO2_RECYCLING, "incineration": CO2_INCINERATION, "chemical": CO2_CHEMICAL,
            "disposal": CO2_DISPOSAL, "transport": CO2_TRANSPORT,
        },
        "seed": SEED,
        "oracle_tractable": False,
    }
    provenance = {
        "nodes.district": "paper",
        "nodes.existing": "synthetic",
        "nodes.x": "synthetic",
        "nodes.y": "synthetic",
        "waste_types.demand": "derived",
        "waste_types.tech_compat": "synthetic",
        "waste_types.recyclable_fraction_after_tech": "paper",
        "waste_types.mass_reduction": "paper",
        "waste_types.risk_potential": "paper",
        "vehicles.capacity": "synthetic",
        "vehicles.max_distance": "synthetic",
        "technologies.availability": "synthetic",
        "capacity_levels.max": "derived",
        "capacity_levels.invest_cost": "paper",
        "capacity_levels.op_risk": "derived",
        "min_thresholds": "synthetic",
        "arcs.distance": "synthetic",
        "arcs.unit_cost": "derived",
        "arcs.transport_risk": "derived",
        "arcs.co2_transport": "paper",
        "recycling_ratio": "paper",
        "co2_ops": "paper",
        "metadata": "paper",
    }

    return Instance(
        name="case-study",
        nodes=tuple(nodes),
        waste_types=tuple(wastes),
        vehicles=vehicles,
        technologies=(Technology("incineration", {"TE1": 1}), Technology("chemical", {"TE1": 0})),
        capacity_levels=tuple(levels),
        arcs=tuple(arcs),
        recycling_ratio={n.id: RECYCLING_RATIO for n in recs},
        co2_ops=co2,
        min_thresholds=thresholds,
        metadata=metadata,
        provenance=provenance,
    )

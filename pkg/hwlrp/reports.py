"""Report tables for solutions, fronts and sensitivity runs."""
from __future__ import annotations

import math
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import pandas as pd

from .formulation import OBJECTIVE_NAMES, Solution
from .instance import FACILITY_TYPES, Instance

# 各レポートの列定義
COLUMNS = {
    'objectives': ["objective", "value"],
    'openings': ["node", "facility", "technology", "level", "existing", "throughput", "max"],
    'routes': ["waste", "vehicle", "route", "load", "length"],
    'flows': ["flow", "from", "to", "amount"],
    'throughput': ["facility", "node", "received", "processed"],
    'front': ["point", "f1", "f2", "f3", "eps_f2", "eps_f3"],
    'grid': ["cell", "status", "f1", "f2", "f3", "eps_f2", "eps_f3", "message"],
    'payoff': ["objective", "best", "worst", "range"],
    'sensitivity': ["scenario", "status", "f1", "f2", "f3", "delta_f1_pct", "delta_f2_pct", "delta_f3_pct"],
}

_FLOW_LABELS = {"k": "treatment->recycling", "z": "treatment->disposal", "v": "recycling->disposal"}


def objectives_table(sol: Solution) -> pd.DataFrame:
    rows = [{"objective": name, "value": value} for name, value in zip(OBJECTIVE_NAMES, sol.objectives)]
    return pd.DataFrame(rows, columns=COLUMNS['objectives'])


def openings_table(inst: Instance, sol: Solution) -> pd.DataFrame:
    """Opened facilities with technology, capacity level and intake."""
    rows = []
    for o in sorted(sol.openings, key=lambda o: (FACILITY_TYPES.index(o.facility), o.node)):
        level = inst.facility_level(o.facility, o.node, o.level, o.technology)
        rows.append({
            "node": o.node,
            "facility": o.facility,
            "technology": o.technology or "",
            "level": o.level,
            "existing": o.existing,
            "throughput": sol.throughput(o.facility, o.node),
            "max": None if level is None else level.max,
        })
    return pd.DataFrame(rows, columns=COLUMNS['openings'])


def routes_table(sol: Solution) -> pd.DataFrame:
    rows = [
        {"waste": r.waste, "vehicle": r.vehicle, "route": " -> ".join(r.nodes), "load": r.load, "length": r.length}
        for r in sorted(sol.routes, key=lambda r: (r.waste, r.vehicle))
    ]
    return pd.DataFrame(rows, columns=COLUMNS['routes'])


def flows_table(sol: Solution) -> pd.DataFrame:
    """Residue shipments between facilities (zero flows omitted)."""
    rows = []
    for family in ("k", "z", "v"):
        for (i, j), amount in sorted(getattr(sol, family).items()):
            if amount > 0:
                rows.append({"flow": _FLOW_LABELS[family], "from": i, "to": j, "amount": amount})
    return pd.DataFrame(rows, columns=COLUMNS['flows'])


def throughput_table(inst: Instance, sol: Solution) -> pd.DataFrame:
    """Mass received by each open facility and mass it processes.

    Treatment processes what it receives. Recycling keeps the recycling-ratio
    share of its intake; disposal processes everything it receives.
    """
    rows = []
    for o in sorted(sol.openings, key=lambda o: (FACILITY_TYPES.index(o.facility), o.node)):
        received = sol.throughput(o.facility, o.node)
        processed = received
        if o.facility == "recycling":
            processed = received * inst.recycling_ratio.get(o.node, 1.0)
        rows.append({"facility": o.facility, "node": o.node, "received": received, "processed": processed})
    return pd.DataFrame(rows, columns=COLUMNS['throughput'])


def solution_tables(inst: Instance, sol: Solution) -> Dict[str, pd.DataFrame]:
    return {
        'objectives': objectives_table(sol),
        'openings': openings_table(inst, sol),
        'routes': routes_table(sol),
        'flows': flows_table(sol),
        'throughput': throughput_table(inst, sol),
    }


def payoff_frame(rows: Sequence[Mapping[str, float]]) -> pd.DataFrame:
    return pd.DataFrame(list(rows), columns=COLUMNS['payoff'])


def front_table(points: Sequence) -> pd.DataFrame:
    """One row per Pareto point (f1 vs f2 vs f3 plus the epsilons that produced it)."""
    rows = []
    for n, pt in enumerate(points, start=1):
        f1, f2, f3 = pt.objectives
        rows.append({
            "point": n, "f1": f1, "f2": f2, "f3": f3,
            "eps_f2": pt.eps.get("f2"), "eps_f3": pt.eps.get("f3"),
        })
    return pd.DataFrame(rows, columns=COLUMNS['front'])


def grid_table(cells: Sequence) -> pd.DataFrame:
    rows = []
    for n, cell in enumerate(cells, start=1):
        values = cell.point.objectives if cell.point is not None else (None, None, None)
        rows.append({
            "cell": n, "status": cell.status,
            "f1": values[0], "f2": values[1], "f3": values[2],
            "eps_f2": cell.eps.get("f2"), "eps_f3": cell.eps.get("f3"),
            "message": cell.message,
        })
    return pd.DataFrame(rows, columns=COLUMNS['grid'])


def percent_delta(value: Optional[float], baseline: Optional[float]) -> Optional[float]:
    """Percentage change against the baseline; None when either side is missing."""
    if value is None or baseline is None:
        return None
    if baseline == 0:
        return 0.0 if value == 0 else math.copysign(math.inf, value)
    return (value - baseline) / abs(baseline) * 100.0


def sensitivity_table(
    baseline: Optional[Sequence[float]],
    scenarios: Sequence[Mapping[str, object]],
) -> pd.DataFrame:
    """``scenarios`` rows carry ``scenario``, ``status`` and ``objectives`` (or None)."""
    rows: List[Dict[str, object]] = []
    if baseline is not None:
        rows.append({"scenario": "baseline", "status": "optimal",
                     "f1": baseline[0], "f2": baseline[1], "f3": baseline[2],
                     "delta_f1_pct": 0.0, "delta_f2_pct": 0.0, "delta_f3_pct": 0.0})
    for sc in scenarios:
        values = sc.get("objectives") or (None, None, None)
        row: Dict[str, object] = {"scenario": sc["scenario"], "status": sc["status"]}
        for i, name in enumerate(OBJECTIVE_NAMES):
            row[name] = values[i]
            row[f"delta_{name}_pct"] = percent_delta(values[i], None if baseline is None else baseline[i])
        rows.append(row)
    return pd.DataFrame(rows, columns=COLUMNS['sensitivity'])


def to_text(df: pd.DataFrame, title: Optional[str] = None) -> str:
    """Monospace rendering for stdout."""
    body = "(データなし)" if df.empty else df.to_string(index=False, float_format=lambda v: f"{v:.6g}")
    return f"{title}\n{body}" if title else body


def write_csv(df: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, lineterminator="\n")
    return path

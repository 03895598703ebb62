"""Command-line front end: validate, solve, pareto, sensitivity and export."""
from __future__ import annotations

import argparse
import re
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd
import yaml
from loguru import logger

from . import config, reports
from .errors import DuplicateNodeError, HwlrpError, InstanceError, InstanceParseError, MooError, SchemaViolationError
from .formulation import OBJECTIVE_NAMES, Solution, build_model, check_solution_feasible, extract_solution, solution_to_document
from .instance import (
    FATAL,
    Instance,
    case_study_instance,
    collapse_capacity_levels,
    has_fatal,
    load_instance,
    rescale_capacity,
    scale_demand,
    validate_instance,
)
from .milp import export_lp, model_stats
from .moo import (
    build_augmented_model,
    nondominated_filter,
    ordered_map,
    payoff_table,
    sweep_epsilon_grid,
)
from .solver import INFEASIBLE, LIMIT, OPTIMAL, SolveParams, TraceRecord, solve_milp

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3
EXIT_LIMIT = 4
EXIT_IO = 5

CASE_STUDY = "case-study"
CAPACITY_MODES = ("paper", "none", "increased", "decreased")

SCENARIO_INVALID = "invalid"

_STATUS_EXIT = {OPTIMAL: EXIT_OK, INFEASIBLE: EXIT_INFEASIBLE}


@dataclass
class RunConfig:
    command: str
    instance: str
    objective: str = "f1"
    grid_points: int = config.GRID_POINTS
    backend: str = config.BACKEND
    risk_mode: str = config.RISK_MODE
    time_limit: Optional[float] = config.TIME_LIMIT
    node_limit: int = config.NODE_LIMIT
    mip_gap: float = config.MIP_REL_GAP
    capacity_mode: str = "paper"
    waste_scales: Tuple[float, ...] = ()
    sustainability: str = "on"
    eps: Optional[Tuple[float, float]] = None
    ranges: Optional[Tuple[float, float]] = None
    output_dir: Path = field(default_factory=lambda: Path(config.OUTPUT_DIR))
    trace: bool = False
    notify: bool = False
    workers: int = 1

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)
        if self.objective not in OBJECTIVE_NAMES:
            raise ValueError(f"objective must be one of {', '.join(OBJECTIVE_NAMES)}")
        if self.capacity_mode not in CAPACITY_MODES:
            raise ValueError(f"capacity mode must be one of {', '.join(CAPACITY_MODES)}")
        if any(not f > 0 for f in self.waste_scales):
            raise ValueError("waste scale factors must be > 0")
        if self.sustainability not in ("on", "off"):
            raise ValueError("sustainability must be 'on' or 'off'")
        if self.grid_points < 2:
            raise ValueError("grid size must be >= 2")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.ranges is not None and self.eps is None:
            raise ValueError("--ranges needs --eps")

    def params(self, trace=None) -> SolveParams:
        return SolveParams(
            mip_rel_gap=self.mip_gap,
            node_limit=self.node_limit,
            time_limit=self.time_limit,
            backend=self.backend,
            trace=trace,
        )


def _status_exit(status: str) -> int:
    return _STATUS_EXIT.get(status, EXIT_LIMIT)


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_") or "instance"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _load(path: str) -> Instance:
    if path == CASE_STUDY:
        return case_study_instance()
    return load_instance(path)


def _load_valid(rc: RunConfig) -> Tuple[Optional[Instance], int]:
    """Instance plus EXIT_OK, or None plus the exit code for the failure."""
    try:
        inst = _load(rc.instance)
    except OSError as e:
        logger.error(f"cannot read instance '{rc.instance}': {e}")
        return None, EXIT_IO
    except (InstanceParseError, SchemaViolationError, DuplicateNodeError) as e:
        logger.error(f"invalid instance '{rc.instance}': {e}")
        return None, EXIT_INVALID
    findings = validate_instance(inst)
    for f in findings:
        log = logger.error if f.severity == FATAL else logger.warning
        log(f"{f.severity}: {f.entity}: {f.message}")
    if has_fatal(findings):
        return None, EXIT_INVALID
    return inst, EXIT_OK


def _write_yaml(doc, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(doc, sort_keys=False, allow_unicode=True), encoding="utf-8")
    return path


def _emit_solution(inst: Instance, sol: Solution, out_dir: Path, prefix: str = "") -> None:
    for name, df in reports.solution_tables(inst, sol).items():
        reports.write_csv(df, out_dir / f"{prefix}{name}.csv")
    _write_yaml(solution_to_document(sol), out_dir / f"{prefix}solution.yaml")


def _notify(rc: RunConfig, inst_name: str, status: str, objectives, started: str) -> None:
    if not rc.notify:
        return
    from .slack_notifier import send_run_summary

    send_run_summary(rc.command, inst_name, status, objectives, started, _now())


# --- Commands ---

def cmd_validate(rc: RunConfig) -> int:
    try:
        inst = _load(rc.instance)
    except OSError as e:
        print(f"IO error: {e}")
        return EXIT_IO
    except (InstanceParseError, SchemaViolationError, DuplicateNodeError) as e:
        print(f"invalid: {e}")
        return EXIT_INVALID
    findings = validate_instance(inst)
    df = pd.DataFrame(
        [{"severity": f.severity, "entity": f.entity, "message": f.message} for f in findings],
        columns=["severity", "entity", "message"],
    )
    print(reports.to_text(df, title=f"==== {inst.name}: {len(findings)} finding(s) ===="))
    return EXIT_INVALID if has_fatal(findings) else EXIT_OK


def cmd_solve(rc: RunConfig) -> int:
    started = _now()
    inst, code = _load_valid(rc)
    if inst is None:
        return code
    trace: List[TraceRecord] = []
    model, catalog = build_model(inst, rc.objective, rc.risk_mode)
    logger.info(f"--- Solving {rc.objective} for '{inst.name}' ({model_stats(model).as_dict()}) ---")
    result = solve_milp(model, rc.params(trace.append if rc.trace else None))
    out_dir = rc.output_dir
    if rc.trace:
        reports.write_csv(pd.DataFrame([vars(t) for t in trace], columns=["node", "depth", "bound", "incumbent"]),
                          out_dir / "trace.csv")
    logger.info(f"status {result.status}, {result.nodes} nodes, {result.iterations} pivots")
    print(f"status: {result.status}")
    objectives = None
    if result.assignment is not None and result.status in (OPTIMAL, LIMIT):
        sol = extract_solution(inst, catalog, result.assignment)
        for v in check_solution_feasible(inst, sol):
            logger.warning(f"solution check {v.tag}: {v.subject}: {v.detail}")
        _emit_solution(inst, sol, out_dir)
        for name, df in reports.solution_tables(inst, sol).items():
            print(reports.to_text(df, title=f"\n==== {name} ===="))
        objectives = sol.objectives
    elif result.message:
        print(result.message)
    _notify(rc, inst.name, result.status, objectives, started)
    return _status_exit(result.status)


def cmd_pareto(rc: RunConfig) -> int:
    started = _now()
    inst, code = _load_valid(rc)
    if inst is None:
        return code
    p = rc.params()
    try:
        table = payoff_table(inst, p, rc.risk_mode)
    except MooError as e:
        logger.error(str(e))
        _notify(rc, inst.name, "failed", None, started)
        return EXIT_INFEASIBLE if INFEASIBLE in str(e) else EXIT_LIMIT
    cells = sweep_epsilon_grid(inst, table, rc.grid_points, p, risk_mode=rc.risk_mode, workers=rc.workers)
    points = [c.point for c in cells if c.status == OPTIMAL and c.point is not None]
    front = sorted(nondominated_filter(points, key=lambda pt: pt.objectives, tol=1e-6), key=lambda pt: pt.objectives)

    out_dir = rc.output_dir
    reports.write_csv(reports.payoff_frame(table.rows()), out_dir / "payoff.csv")
    reports.write_csv(reports.grid_table(cells), out_dir / "grid.csv")
    front_df = reports.front_table(front)
    reports.write_csv(front_df, out_dir / "front.csv")
    for n, pt in enumerate(front, start=1):
        _write_yaml(solution_to_document(pt.solution), out_dir / "points" / f"point_{n:03d}.yaml")
    print(reports.to_text(reports.payoff_frame(table.rows()), title="==== payoff ===="))
    print(reports.to_text(front_df, title=f"\n==== front: {len(front)} point(s) ===="))
    _notify(rc, inst.name, f"{len(front)} Pareto points", front[0].objectives if front else None, started)
    return EXIT_OK


def _optima(inst: Instance, rc: RunConfig) -> Tuple[str, Optional[Tuple[float, float, float]]]:
    """Each objective minimized on its own; the worst status wins."""
    values = []
    for name in OBJECTIVE_NAMES:
        model, _ = build_model(inst, name, rc.risk_mode)
        result = solve_milp(model, rc.params())
        if result.status != OPTIMAL:
            return result.status, None
        values.append(result.objective)
    return OPTIMAL, tuple(values)


def _compromise(inst: Instance, rc: RunConfig) -> Tuple[str, Optional[Tuple[float, float, float]]]:
    """Augmented epsilon solve at the centre of the payoff ranges."""
    p = rc.params()
    try:
        table = payoff_table(inst, p, rc.risk_mode)
    except MooError as e:
        logger.error(str(e))
        return (INFEASIBLE if INFEASIBLE in str(e) else LIMIT), None
    eps = {f: (table.best[f] + table.worst[f]) / 2.0 for f in OBJECTIVE_NAMES if f != config.PRIMARY_OBJECTIVE}
    model, catalog = build_augmented_model(inst, eps, table.ranges, risk_mode=rc.risk_mode)
    result = solve_milp(model, p)
    if result.status == OPTIMAL:
        return OPTIMAL, extract_solution(inst, catalog, result.assignment).objectives
    logger.error(f"compromise solve ended {result.status}")
    return result.status, None


def _cost_only(inst: Instance, rc: RunConfig) -> Tuple[str, Optional[Tuple[float, float, float]]]:
    """f1 alone, with f2 and f3 evaluated at its optimum."""
    model, catalog = build_model(inst, "f1", rc.risk_mode)
    result = solve_milp(model, rc.params())
    if result.status != OPTIMAL:
        return result.status, None
    return OPTIMAL, extract_solution(inst, catalog, result.assignment).objectives


def scenario_instances(inst: Instance, rc: RunConfig) -> List[Tuple[str, Instance]]:
    scenarios: List[Tuple[str, Instance]] = []
    if rc.capacity_mode == "none":
        scenarios.append(("capacity-none", collapse_capacity_levels(inst)))
    elif rc.capacity_mode == "increased":
        scenarios.append(("capacity-increased", rescale_capacity(inst, config.CAPACITY_INCREASE, "increased")))
    elif rc.capacity_mode == "decreased":
        scenarios.append(("capacity-decreased", rescale_capacity(inst, config.CAPACITY_DECREASE, "decreased")))
    scales = rc.waste_scales
    if not scales and rc.capacity_mode == "paper" and rc.sustainability == "on":
        scales = config.WASTE_SCALE_FACTORS
    for factor in scales:
        scenarios.append((f"waste-x{factor:g}", scale_demand(inst, factor)))
    return scenarios


def cmd_sensitivity(rc: RunConfig) -> int:
    started = _now()
    inst, code = _load_valid(rc)
    if inst is None:
        return code
    out_dir = rc.output_dir
    try:
        scenarios = scenario_instances(inst, rc)
    except InstanceError as e:
        logger.error(str(e))
        return EXIT_INVALID

    logger.info(f"--- Starting sensitivity run for '{inst.name}': {len(scenarios)} scenario(s) ---")
    base_status, baseline = _optima(inst, rc)
    if base_status != OPTIMAL:
        logger.error(f"baseline ended {base_status}")

    def run(item: Tuple[str, Instance]) -> Dict[str, object]:
        label, sc = item
        try:
            status, values = _optima(sc, rc)
        except HwlrpError as e:
            logger.warning(f"scenario {label} skipped: {e}")
            status, values = SCENARIO_INVALID, None
        return {"scenario": label, "status": status, "objectives": values}

    rows = ordered_map(run, scenarios, rc.workers)
    for i, row in enumerate(rows, start=1):
        logger.info(f"[{i}/{len(rows)}] {row['scenario']} -> {row['status']}")
    if scenarios or base_status == OPTIMAL:
        df = reports.sensitivity_table(baseline, rows)
        reports.write_csv(df, out_dir / "sensitivity.csv")
        print(reports.to_text(df, title="==== sensitivity (per-objective optima) ===="))

    final_status = base_status
    if rc.sustainability == "off":
        sus_status, sustainable = _compromise(inst, rc)
        off_status, cost_only = _cost_only(inst, rc)
        df = reports.sensitivity_table(
            sustainable if sus_status == OPTIMAL else None,
            [{"scenario": "without-sustainability", "status": off_status, "objectives": cost_only}],
        )
        reports.write_csv(df, out_dir / "sustainability.csv")
        print(reports.to_text(df, title="\n==== sustainability off vs augmented compromise ===="))
        if sus_status != OPTIMAL:
            final_status = sus_status
        elif off_status != OPTIMAL:
            final_status = off_status

    _notify(rc, inst.name, final_status, baseline, started)
    return _status_exit(final_status)


def cmd_export(rc: RunConfig) -> int:
    inst, code = _load_valid(rc)
    if inst is None:
        return code
    if rc.eps is None:
        model, _ = build_model(inst, rc.objective, rc.risk_mode)
        target = rc.output_dir / f"{_slug(inst.name)}_{rc.objective}.lp"
    else:
        constrained = [f for f in OBJECTIVE_NAMES if f != config.PRIMARY_OBJECTIVE]
        if rc.ranges is not None:
            ranges = dict(zip(constrained, rc.ranges))
        else:
            try:
                ranges = dict(payoff_table(inst, rc.params(), rc.risk_mode).ranges)
            except MooError as e:
                logger.error(str(e))
                return EXIT_INFEASIBLE if INFEASIBLE in str(e) else EXIT_LIMIT
        try:
            model, _ = build_augmented_model(inst, dict(zip(constrained, rc.eps)), ranges, risk_mode=rc.risk_mode)
        except MooError as e:
            logger.error(str(e))
            return EXIT_INVALID
        target = rc.output_dir / f"{_slug(inst.name)}_augmented.lp"
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(export_lp(model), encoding="utf-8")
    print(f"wrote {target} ({model.n_vars} columns, {len(model.constraints)} rows)")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "pareto": cmd_pareto,
    "sensitivity": cmd_sensitivity,
    "export": cmd_export,
}


# --- Argument parsing ---

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("instance", help=f"instance file (YAML/JSON) or '{CASE_STUDY}'")
    common.add_argument("--output-dir", default=config.OUTPUT_DIR, help="出力ディレクトリ (default: HWLRP_OUTPUT_DIR)")
    common.add_argument("--backend", choices=config.BACKENDS, default=config.BACKEND)
    common.add_argument("--risk-mode", choices=config.RISK_MODES, default=config.RISK_MODE)
    common.add_argument("--time-limit", type=float, default=config.TIME_LIMIT)
    common.add_argument("--node-limit", type=int, default=config.NODE_LIMIT)
    common.add_argument("--mip-gap", type=float, default=config.MIP_REL_GAP)
    common.add_argument("--workers", type=int, default=1, help="concurrent grid/scenario solves")
    common.add_argument("--notify", action="store_true", help="post a run summary to Slack")
    common.add_argument("--verbose", "-v", action="store_true")

    parser = argparse.ArgumentParser(prog="hwlrp", description="Hazardous-waste location-routing toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("validate", parents=[common], help="check an instance file")

    solve = sub.add_parser("solve", parents=[common], help="minimize one objective")
    solve.add_argument("--objective", choices=OBJECTIVE_NAMES, default="f1")
    solve.add_argument("--trace", action="store_true", help="write the branch-and-bound trace to trace.csv")

    pareto = sub.add_parser("pareto", parents=[common], help="augmented epsilon-constraint front")
    pareto.add_argument("--grid", type=int, default=config.GRID_POINTS, help="points per constrained objective")

    sens = sub.add_parser("sensitivity", parents=[common], help="capacity, waste and sustainability scenarios")
    sens.add_argument("--capacity-mode", choices=CAPACITY_MODES, default="paper")
    sens.add_argument("--waste-scale", type=float, nargs="+", default=[])
    sens.add_argument("--sustainability", choices=("on", "off"), default="on")

    export = sub.add_parser("export", parents=[common], help="write the model as an LP file")
    export.add_argument("--objective", choices=OBJECTIVE_NAMES, default="f1")
    export.add_argument("--eps", type=float, nargs=2, metavar=("E2", "E3"), help="epsilons for the augmented model")
    export.add_argument("--ranges", type=float, nargs=2, metavar=("R2", "R3"), help="payoff ranges (default: computed)")
    return parser


def run_config(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        command=args.command,
        instance=args.instance,
        objective=getattr(args, "objective", "f1"),
        grid_points=getattr(args, "grid", config.GRID_POINTS),
        backend=args.backend,
        risk_mode=args.risk_mode,
        time_limit=args.time_limit,
        node_limit=args.node_limit,
        mip_gap=args.mip_gap,
        capacity_mode=getattr(args, "capacity_mode", "paper"),
        waste_scales=tuple(getattr(args, "waste_scale", ())),
        sustainability=getattr(args, "sustainability", "on"),
        eps=tuple(args.eps) if getattr(args, "eps", None) else None,
        ranges=tuple(args.ranges) if getattr(args, "ranges", None) else None,
        output_dir=Path(args.output_dir),
        trace=getattr(args, "trace", False),
        notify=args.notify,
        workers=args.workers,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if args.verbose else "INFO")
    try:
        rc = run_config(args)
    except ValueError as e:
        parser.error(str(e))
    try:
        return COMMANDS[rc.command](rc)
    except OSError as e:
        logger.error(f"IO error: {e}")
        return EXIT_IO
    except HwlrpError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_INVALID

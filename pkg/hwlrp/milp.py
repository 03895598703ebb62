"""Solver-agnostic linear model representation.

A ``LinearModel`` is built once through ``ModelBuilder`` and is immutable
afterwards. Expressions are sparse ``{variable id: coefficient}`` maps.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Tuple

from .errors import LpExportError, ModelError

CONTINUOUS = "continuous"
BINARY = "binary"
INTEGER = "integer"
KINDS = (CONTINUOUS, BINARY, INTEGER)

LE, EQ, GE = "<=", "=", ">="
SENSES = (LE, EQ, GE)

Assignment = Mapping[int, float]


@dataclass(frozen=True)
class Variable:
    id: int
    name: str
    lower: float = 0.0
    upper: float = math.inf
    kind: str = CONTINUOUS

    @property
    def is_integral(self) -> bool:
        return self.kind != CONTINUOUS


@dataclass(frozen=True)
class Constraint:
    name: str
    coeffs: Mapping[int, float]
    sense: str
    rhs: float


@dataclass(frozen=True)
class Objective:
    sense: str = "min"
    coeffs: Mapping[int, float] = field(default_factory=dict)
    constant: float = 0.0


@dataclass(frozen=True)
class LinearModel:
    name: str
    variables: Tuple[Variable, ...]
    constraints: Tuple[Constraint, ...]
    objective: Objective

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    def var_by_name(self, name: str) -> Variable:
        for var in self.variables:
            if var.name == name:
                return var
        raise ModelError(f"unknown variable '{name}'")

    def constraint(self, name: str) -> Constraint:
        for con in self.constraints:
            if con.name == name:
                return con
        raise ModelError(f"unknown constraint '{name}'")


def _merge(terms: Iterable[Tuple[int, float]]) -> Dict[int, float]:
    merged: Dict[int, float] = {}
    for var_id, coef in terms:
        merged[var_id] = merged.get(var_id, 0.0) + float(coef)
    return {v: c for v, c in merged.items() if c != 0.0}


class ModelBuilder:
    """Mutable companion of ``LinearModel``; ``build()`` freezes it."""

    def __init__(self, name: str = "model"):
        self.name = name
        self._vars: List[Variable] = []
        self._cons: List[Constraint] = []
        self._var_names: Dict[str, int] = {}
        self._con_names: set = set()
        self._objective = Objective()

    @classmethod
    def from_model(cls, model: LinearModel) -> "ModelBuilder":
        builder = cls(model.name)
        for var in model.variables:
            builder._vars.append(var)
            builder._var_names[var.name] = var.id
        for con in model.constraints:
            builder._cons.append(con)
            builder._con_names.add(con.name)
        builder._objective = model.objective
        return builder

    def add_var(self, name: str, lower: float = 0.0, upper: float = math.inf, kind: str = CONTINUOUS) -> int:
        if name in self._var_names:
            raise ModelError(f"duplicate variable name '{name}'")
        if kind not in KINDS:
            raise ModelError(f"unknown integrality '{kind}' for '{name}'")
        if kind == BINARY:
            lower, upper = max(0.0, lower), min(1.0, upper)
        if math.isnan(lower) or math.isnan(upper) or lower > upper:
            raise ModelError(f"invalid bounds [{lower}, {upper}] for '{name}'")
        var_id = len(self._vars)
        self._vars.append(Variable(var_id, name, float(lower), float(upper), kind))
        self._var_names[name] = var_id
        return var_id

    def _check_expr(self, owner: str, terms: Iterable[Tuple[int, float]]) -> Dict[int, float]:
        expr = _merge(terms)
        for var_id, coef in expr.items():
            if not 0 <= var_id < len(self._vars):
                raise ModelError(f"{owner}: unknown variable id {var_id}")
            if not math.isfinite(coef):
                raise ModelError(f"{owner}: non-finite coefficient on {self._vars[var_id].name}")
        return expr

    def add_constraint(self, name: str, terms: Iterable[Tuple[int, float]], sense: str, rhs: float) -> None:
        if sense not in SENSES:
            raise ModelError(f"unknown sense '{sense}' on '{name}'")
        if name in self._con_names:
            raise ModelError(f"duplicate constraint name '{name}'")
        if not math.isfinite(rhs):
            raise ModelError(f"{name}: non-finite right-hand side")
        expr = self._check_expr(name, terms)
        self._cons.append(Constraint(name, expr, sense, float(rhs)))
        self._con_names.add(name)

    def set_objective(self, terms: Iterable[Tuple[int, float]], sense: str = "min", constant: float = 0.0) -> None:
        if sense not in ("min", "max"):
            raise ModelError(f"unknown objective sense '{sense}'")
        self._objective = Objective(sense, self._check_expr("objective", terms), float(constant))

    def build(self) -> LinearModel:
        return LinearModel(self.name, tuple(self._vars), tuple(self._cons), self._objective)


# --- Evaluation ---

@dataclass(frozen=True)
class Violation:
    name: str
    residual: float


@dataclass(frozen=True)
class Evaluation:
    objective: float
    violations: Tuple[Violation, ...]
    integrality: Tuple[Violation, ...]

    @property
    def feasible(self) -> bool:
        return not self.violations and not self.integrality


def expr_value(expr: Mapping[int, float], a: Assignment) -> float:
    try:
        return math.fsum(coef * a[var_id] for var_id, coef in expr.items())
    except KeyError as e:
        raise ModelError(f"assignment is missing variable id {e.args[0]}") from None


def evaluate(model: LinearModel, a: Assignment, feas_tol: float = 1e-7) -> Evaluation:
    """Objective value plus every constraint, bound and integrality breach above ``feas_tol``."""
    missing = [var.name for var in model.variables if var.id not in a]
    if missing:
        raise ModelError(f"assignment is missing {len(missing)} variable(s), first '{missing[0]}'")

    violations: List[Violation] = []
    for var in model.variables:
        value = a[var.id]
        if value < var.lower - feas_tol:
            violations.append(Violation(f"lb:{var.name}", var.lower - value))
        elif value > var.upper + feas_tol:
            violations.append(Violation(f"ub:{var.name}", value - var.upper))
    for con in model.constraints:
        lhs = expr_value(con.coeffs, a)
        if con.sense == LE:
            residual = lhs - con.rhs
        elif con.sense == GE:
            residual = con.rhs - lhs
        else:
            residual = abs(lhs - con.rhs)
        if residual > feas_tol:
            violations.append(Violation(con.name, residual))

    integrality = tuple(
        Violation(var.name, abs(a[var.id] - round(a[var.id])))
        for var in model.variables
        if var.is_integral and abs(a[var.id] - round(a[var.id])) > feas_tol
    )
    objective = expr_value(model.objective.coeffs, a) + model.objective.constant
    return Evaluation(objective, tuple(violations), integrality)


# --- Statistics ---

@dataclass(frozen=True)
class ModelStats:
    continuous: int = 0
    binary: int = 0
    integer: int = 0
    le: int = 0
    eq: int = 0
    ge: int = 0
    nonzeros: int = 0

    def as_dict(self) -> Dict[str, int]:
        return {
            "continuous": self.continuous, "binary": self.binary, "integer": self.integer,
            "<=": self.le, "=": self.eq, ">=": self.ge, "nonzeros": self.nonzeros,
        }


def model_stats(model: LinearModel) -> ModelStats:
    kinds = {kind: 0 for kind in KINDS}
    for var in model.variables:
        kinds[var.kind] += 1
    senses = {sense: 0 for sense in SENSES}
    for con in model.constraints:
        senses[con.sense] += 1
    return ModelStats(
        continuous=kinds[CONTINUOUS], binary=kinds[BINARY], integer=kinds[INTEGER],
        le=senses[LE], eq=senses[EQ], ge=senses[GE],
        nonzeros=sum(len(con.coeffs) for con in model.constraints),
    )


# --- CPLEX LP export ---

_ONE = "ONE_VAR_CONSTANT"
_INVALID_CHARS = re.compile(r"[^A-Za-z0-9_.]")


def _num(value: float) -> str:
    if not math.isfinite(value):
        raise LpExportError(f"cannot write non-finite number {value}")
    text = "%.17g" % value
    return "0" if text == "-0" else text


def _sanitize(names: Iterable[str]) -> List[str]:
    """Map names onto LP identifiers, keeping them unique in input order."""
    out: List[str] = []
    seen: set = {_ONE}
    for name in names:
        ident = _INVALID_CHARS.sub("_", name) or "_"
        # identifiers may not start with a digit or period, and e/E prefixes read as exponents
        if not re.match(r"[A-Za-z_]", ident) or re.fullmatch(r"[eE][0-9]*", ident):
            ident = "_" + ident
        base, n = ident, 1
        while ident in seen:
            ident = f"{base}_{n}"
            n += 1
        seen.add(ident)
        out.append(ident)
    return out


def _terms(expr: Mapping[int, float], names: List[str]) -> List[str]:
    lines = []
    for var_id, coef in expr.items():
        sign = "+" if coef >= 0 else "-"
        lines.append(f"   {sign}{_num(abs(coef))} {names[var_id]}")
    return lines


def export_lp(model: LinearModel) -> str:
    """Write ``model`` in CPLEX LP format. Output depends only on the model."""
    if not model.variables:
        raise LpExportError("cannot export a model without variables")
    var_names = _sanitize(v.name for v in model.variables)
    con_names = _sanitize(c.name for c in model.constraints)
    needs_one = model.objective.constant != 0.0 or not model.objective.coeffs or any(
        not c.coeffs for c in model.constraints
    )

    out = [f"\\* {model.name} *\\", ""]
    out.append("Minimize" if model.objective.sense == "min" else "Maximize")
    out.append(" obj:")
    out.extend(_terms(model.objective.coeffs, var_names))
    if needs_one:
        out.append(f"   +{_num(model.objective.constant)} {_ONE}" if model.objective.constant >= 0
                   else f"   -{_num(-model.objective.constant)} {_ONE}")
    out.append("")

    out.append("Subject To")
    for con, name in zip(model.constraints, con_names):
        out.append(f" {name}:")
        body = _terms(con.coeffs, var_names) or [f"   +0 {_ONE}"]
        out.extend(body)
        out.append(f"   {con.sense} {_num(con.rhs)}")
    if needs_one:
        out.append(f" c_e_{_ONE}:")
        out.append(f"   +1 {_ONE}")
        out.append("   = 1")
    out.append("")

    out.append("Bounds")
    for var, name in zip(model.variables, var_names):
        lo, up = var.lower, var.upper
        if math.isinf(lo) and lo < 0 and math.isinf(up):
            out.append(f"   {name} free")
            continue
        lo_s = "-inf" if math.isinf(lo) else _num(lo)
        up_s = "+inf" if math.isinf(up) else _num(up)
        out.append(f"   {lo_s} <= {name} <= {up_s}")
    if needs_one:
        out.append(f"   1 <= {_ONE} <= 1")
    out.append("")

    binaries = [n for v, n in zip(model.variables, var_names) if v.kind == BINARY]
    generals = [n for v, n in zip(model.variables, var_names) if v.kind == INTEGER]
    if binaries:
        out.append("Binaries")
        out.extend(f"   {n}" for n in binaries)
        out.append("")
    if generals:
        out.append("Generals")
        out.extend(f"   {n}" for n in generals)
        out.append("")
    out.append("End")
    return "\n".join(out) + "\n"


def lp_names(model: LinearModel) -> Dict[str, str]:
    """Model variable name -> identifier used by ``export_lp``."""
    return dict(zip((v.name for v in model.variables), _sanitize(v.name for v in model.variables)))


def combine(*exprs: Tuple[Mapping[int, float], float]) -> Dict[int, float]:
    """Linear combination of sparse expressions given as (expr, weight) pairs."""
    return _merge((v, c * w) for expr, w in exprs for v, c in expr.items())

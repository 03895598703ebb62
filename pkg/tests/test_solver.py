import itertools

import numpy as np
import pytest

from hwlrp.formulation import build_model
from hwlrp.instance import parse_instance
from hwlrp.milp import BINARY, EQ, GE, INTEGER, LE, ModelBuilder, evaluate
from hwlrp.solver import INFEASIBLE, LIMIT, OPTIMAL, UNBOUNDED, SolveParams, _row_tolerances, solve_lp, solve_milp

EMBEDDED = SolveParams(backend="embedded")
HIGHS = SolveParams(backend="highs")


def _knapsack():
    # LP relaxation 21.33..., integer optimum 20 with items 2 and 3
    b = ModelBuilder("knapsack")
    items = [b.add_var(f"y{i}", kind=BINARY) for i in range(3)]
    b.add_constraint("weight", zip(items, (4, 6, 3)), LE, 9)
    b.set_objective(zip(items, (10, 13, 7)), "max")
    return b.build()


def test_single_lower_bound():
    b = ModelBuilder()
    x = b.add_var("x", -np.inf, np.inf)
    b.add_constraint("floor", [(x, 1)], GE, 3)
    b.set_objective([(x, 1)])
    res = solve_lp(b.build(), EMBEDDED)
    assert res.status == OPTIMAL
    assert res.objective == pytest.approx(3.0)
    assert res.assignment[x] == pytest.approx(3.0)


def test_unbounded():
    b = ModelBuilder()
    x = b.add_var("x")
    y = b.add_var("y")
    b.add_constraint("c", [(x, 1), (y, -1)], LE, 1)
    b.set_objective([(y, 1)], "max")
    assert solve_lp(b.build(), EMBEDDED).status == UNBOUNDED
    assert solve_milp(b.build(), EMBEDDED).status == UNBOUNDED


def test_infeasible_lp():
    b = ModelBuilder()
    x = b.add_var("x")
    y = b.add_var("y")
    b.add_constraint("lo", [(x, 1), (y, 1)], GE, 3)
    b.add_constraint("hi", [(x, 1), (y, 1)], LE, 2)
    b.set_objective([(x, 1)])
    assert solve_lp(b.build(), EMBEDDED).status == INFEASIBLE


def test_integer_infeasible_with_feasible_relaxation():
    b = ModelBuilder()
    n = b.add_var("n", 0, 10, kind=INTEGER)
    b.add_constraint("half", [(n, 2)], EQ, 1)
    model = b.build()
    assert solve_lp(model, EMBEDDED).status == OPTIMAL
    res = solve_milp(model, EMBEDDED)
    assert res.status == INFEASIBLE
    assert res.nodes == 3


def test_knapsack():
    model = _knapsack()
    relaxed = solve_lp(model, EMBEDDED)
    assert relaxed.objective == pytest.approx(64.0 / 3.0)
    res = solve_milp(model, EMBEDDED)
    assert res.status == OPTIMAL
    assert res.objective == pytest.approx(20.0)
    assert [round(res.assignment[i]) for i in range(3)] == [0, 1, 1]
    assert res.bound >= res.objective - 1e-9
    assert evaluate(model, res.assignment).feasible


def test_node_limit_reports_bound():
    res = solve_milp(_knapsack(), SolveParams(backend="embedded", node_limit=1))
    assert res.status == LIMIT
    assert res.assignment is None
    assert res.bound == pytest.approx(64.0 / 3.0)


def test_trace_bound_never_crosses_incumbent():
    records = []
    res = solve_milp(_knapsack(), SolveParams(backend="embedded", trace=records.append))
    assert [r.node for r in records] == list(range(1, res.nodes + 1))
    for r in records:
        if r.incumbent is not None:
            # maximization: the bound is an upper bound
            assert r.bound >= r.incumbent - 1e-9
    assert records[-1].incumbent == pytest.approx(20.0)


def test_continuous_model_takes_lp_path():
    b = ModelBuilder()
    x = b.add_var("x", 0, 4)
    b.set_objective([(x, -1)])
    res = solve_milp(b.build(), EMBEDDED)
    assert res.status == OPTIMAL
    assert res.nodes == 1
    assert res.objective == pytest.approx(-4.0)


def test_objective_constant_is_reported():
    b = ModelBuilder()
    x = b.add_var("x", 1, 2)
    b.set_objective([(x, 1)], constant=10.0)
    assert solve_lp(b.build(), EMBEDDED).objective == pytest.approx(11.0)


def test_deterministic():
    first = solve_milp(_knapsack(), EMBEDDED)
    second = solve_milp(_knapsack(), EMBEDDED)
    assert first == second


def test_params_validation():
    with pytest.raises(ValueError):
        SolveParams(feas_tol=0)
    with pytest.raises(ValueError):
        SolveParams(backend="cplex")
    with pytest.raises(ValueError):
        SolveParams(branching="strong")


# --- random LPs against brute-force vertex enumeration ---

def _random_lp(rng, n, m):
    x0 = rng.uniform(0.0, 10.0, size=n)
    A = rng.integers(-5, 6, size=(m, n)).astype(float)
    senses = rng.choice([LE, GE, EQ], size=m, p=[0.45, 0.45, 0.1])
    slack = rng.uniform(0.0, 5.0, size=m)
    rhs = A @ x0 + np.where(senses == LE, slack, np.where(senses == GE, -slack, 0.0))
    c = rng.integers(-5, 6, size=n).astype(float)
    return A, senses, rhs, c


def _vertex_optimum(A, senses, rhs, c, upper=10.0):
    n = c.size
    rows = [(A[i], s, rhs[i]) for i, s in enumerate(senses)]
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        rows.append((e, GE, 0.0))
        rows.append((e, LE, upper))
    best = np.inf
    for subset in itertools.combinations(range(len(rows)), n):
        M = np.array([rows[k][0] for k in subset])
        if abs(np.linalg.det(M)) < 1e-9:
            continue
        x = np.linalg.solve(M, np.array([rows[k][2] for k in subset]))
        ok = all(
            (a @ x <= r + 1e-7) if s == LE else (a @ x >= r - 1e-7) if s == GE else abs(a @ x - r) <= 1e-7
            for a, s, r in rows
        )
        if ok:
            best = min(best, float(c @ x))
    return best


@pytest.mark.parametrize("seed", range(200))
def test_random_lp_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 4))
    m = int(rng.integers(1, 5))
    A, senses, rhs, c = _random_lp(rng, n, m)
    b = ModelBuilder(f"lp{seed}")
    xs = [b.add_var(f"x{j}", 0.0, 10.0) for j in range(n)]
    for i in range(m):
        b.add_constraint(f"r{i}", zip(xs, A[i]), senses[i], rhs[i])
    b.set_objective(zip(xs, c))
    model = b.build()

    res = solve_lp(model, EMBEDDED)
    expected = _vertex_optimum(A, senses, rhs, c)
    assert res.status == OPTIMAL
    assert res.objective == pytest.approx(expected, rel=1e-6, abs=1e-6)
    assert evaluate(model, res.assignment, feas_tol=1e-6).feasible


# --- external backend ---

def test_highs_agrees_on_knapsack():
    pytest.importorskip("scipy")
    res = solve_milp(_knapsack(), HIGHS)
    assert res.status == OPTIMAL
    assert res.objective == pytest.approx(20.0)


@pytest.mark.parametrize("seed", range(20))
def test_highs_agrees_on_random_lps(seed):
    pytest.importorskip("scipy")
    rng = np.random.default_rng(1000 + seed)
    A, senses, rhs, c = _random_lp(rng, 3, 4)
    b = ModelBuilder()
    xs = [b.add_var(f"x{j}", 0.0, 10.0) for j in range(3)]
    for i in range(4):
        b.add_constraint(f"r{i}", zip(xs, A[i]), senses[i], rhs[i])
    b.set_objective(zip(xs, c))
    model = b.build()
    assert solve_lp(model, EMBEDDED).objective == pytest.approx(solve_lp(model, HIGHS).objective, rel=1e-6, abs=1e-6)


def test_row_tolerance_scales_with_row_magnitude():
    A = np.array([[1.0, 1.0], [1.0, 0.0]])
    b = np.array([47513.0, 1.0])
    x = np.array([0.5, 47512.5])
    tols = _row_tolerances(A, b, x, 1e-7)
    assert tols[0] == pytest.approx(1e-7 * 47513.0)
    assert tols[1] == pytest.approx(1e-7)


def test_large_magnitude_relaxation_is_not_a_breakdown(minimal_doc):
    minimal_doc["waste_types"][0]["demand"]["G1"] = 47513.0
    minimal_doc["vehicles"][0]["capacity"] = 60000.0
    for group in minimal_doc["capacity_levels"][0].values():
        if isinstance(group, list):
            for entry in group:
                entry["max"] = 100000.0
    model, _ = build_model(parse_instance(minimal_doc), "f3")
    res = solve_lp(model, EMBEDDED)
    assert res.status == OPTIMAL, res.message
    assert evaluate(model, res.assignment, feas_tol=1e-2).feasible
    pytest.importorskip("scipy")
    assert res.objective == pytest.approx(solve_lp(model, HIGHS).objective, rel=1e-6)

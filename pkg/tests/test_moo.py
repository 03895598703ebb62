import itertools

import numpy as np
import pytest

from hwlrp.errors import MooError
from hwlrp.moo import (
    PayoffTable,
    build_augmented_model,
    dominates,
    epsilon_grid,
    nondominated_filter,
    ordered_map,
    pareto_front,
    payoff_table,
    sweep_epsilon_grid,
)
from hwlrp.solver import OPTIMAL, SolveParams, solve_milp

from conftest import MINIMAL_OBJECTIVES

EMBEDDED = SolveParams(backend="embedded")
RANGES = {"f2": 1.0, "f3": 1.0}


# --- dominance ---

def test_dominates():
    assert dominates((1, 2, 3), (1, 2, 4))
    assert not dominates((1, 2, 3), (1, 2, 3))
    assert not dominates((1, 3, 3), (2, 2, 3))
    assert not dominates((1.0, 2.0, 3.0), (1.0, 2.0, 3.0 + 1e-9), tol=1e-6)


def test_filter_examples():
    points = [(1, 2, 3), (2, 1, 3), (2, 2, 3), (1, 2, 3), (0, 5, 5)]
    assert nondominated_filter(points) == [(1, 2, 3), (2, 1, 3), (0, 5, 5)]
    assert nondominated_filter([]) == []


def test_filter_with_key_keeps_objects():
    items = [{"id": "a", "f": (3, 1, 1)}, {"id": "b", "f": (4, 1, 1)}]
    assert [i["id"] for i in nondominated_filter(items, key=lambda i: i["f"])] == ["a"]


def _reference_front(points):
    kept = []
    for i, p in enumerate(points):
        dominated = any(all(q[k] <= p[k] for k in range(3)) and q != p for q in points)
        duplicate = any(points[j] == p for j in kept)
        if not dominated and not duplicate:
            kept.append(i)
    return [points[i] for i in kept]


@pytest.mark.parametrize("seed", range(25))
def test_filter_matches_pairwise_scan(seed):
    rng = np.random.default_rng(seed)
    points = [tuple(float(v) for v in row) for row in rng.integers(0, 6, size=(40, 3))]
    front = nondominated_filter(points)
    assert front == _reference_front(points)
    for p, q in itertools.permutations(front, 2):
        assert not dominates(p, q)


def test_filter_matches_pairwise_scan_on_many_small_sets():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        size = int(rng.integers(1, 13))
        points = [tuple(float(v) for v in row) for row in rng.integers(0, 4, size=(size, 3))]
        assert nondominated_filter(points) == _reference_front(points)


# --- grid ---

def _table():
    return PayoffTable(
        best={"f1": 0.0, "f2": 0.0, "f3": 10.0},
        worst={"f1": 5.0, "f2": 4.0, "f3": 20.0},
        ranges={"f1": 5.0, "f2": 4.0, "f3": 10.0},
        solutions={},
    )


def test_epsilon_grid_two_points():
    grid = epsilon_grid(_table(), 2, "f1")
    assert grid == [
        {"f2": 0.0, "f3": 10.0}, {"f2": 0.0, "f3": 20.0},
        {"f2": 4.0, "f3": 10.0}, {"f2": 4.0, "f3": 20.0},
    ]


def test_epsilon_grid_three_points():
    grid = epsilon_grid(_table(), 3, "f1")
    assert len(grid) == 9
    assert grid[4] == {"f2": 2.0, "f3": 15.0}
    assert epsilon_grid(_table(), 3, "f2")[0] == {"f1": 0.0, "f3": 10.0}


def test_epsilon_grid_rejects_bad_input():
    with pytest.raises(MooError):
        epsilon_grid(_table(), 1, "f1")
    with pytest.raises(MooError):
        epsilon_grid(_table(), 3, "f9")


def test_ordered_map_keeps_input_order():
    assert ordered_map(lambda v: v * v, list(range(10)), workers=4) == [v * v for v in range(10)]


# --- augmented model ---

def test_augmented_model_structure(minimal):
    model, cat = build_augmented_model(minimal, {"f2": 5.0, "f3": 3000.0}, {"f2": 2.0, "f3": 4.0}, "f1")
    assert model.n_vars == 21 + 2
    assert len(model.constraints) == 36 + 2
    s2, s3 = cat["slack"]["s2"], cat["slack"]["s3"]
    assert model.objective.coeffs[s2] == pytest.approx(-minimal.eps_constant / 2.0)
    assert model.objective.coeffs[s3] == pytest.approx(-minimal.eps_constant / 4.0)
    row = model.constraint("eq42_eps_f2")
    assert row.rhs == 5.0 and row.coeffs[s2] == 1.0
    assert model.name.endswith("_augmented")


def test_augmented_solve_reports_slack(minimal):
    model, cat = build_augmented_model(minimal, {"f2": 5.0, "f3": 3000.0}, RANGES, "f1")
    res = solve_milp(model, EMBEDDED)
    assert res.status == OPTIMAL
    assert res.assignment[cat["slack"]["s2"]] == pytest.approx(5.0 - MINIMAL_OBJECTIVES[1])
    assert res.assignment[cat["slack"]["s3"]] == pytest.approx(3000.0 - MINIMAL_OBJECTIVES[2])


def test_augmented_tight_epsilon_is_infeasible(minimal):
    model, _ = build_augmented_model(minimal, {"f2": 4.0, "f3": 3000.0}, RANGES, "f1")
    assert solve_milp(model, EMBEDDED).status == "infeasible"


def test_augmented_model_rejects_bad_input(minimal):
    with pytest.raises(MooError):
        build_augmented_model(minimal, {"f2": 1.0}, RANGES, "f1")
    with pytest.raises(MooError):
        build_augmented_model(minimal, {"f2": 1.0, "f3": 1.0}, {"f2": 0.0, "f3": 1.0}, "f1")
    with pytest.raises(MooError):
        build_augmented_model(minimal, {"f2": 1.0, "f3": 1.0}, RANGES, "f1", eps_constant=0.5)


# --- payoff table and front ---

def test_payoff_table_guards_unique_solution(minimal):
    table = payoff_table(minimal, EMBEDDED)
    assert [table.best[f] for f in ("f1", "f2", "f3")] == pytest.approx(MINIMAL_OBJECTIVES)
    assert table.guarded == ("f1", "f2", "f3")
    assert dict(table.ranges) == {"f1": 1.0, "f2": 1.0, "f3": 1.0}
    assert [row["objective"] for row in table.rows()] == ["f1", "f2", "f3"]


def test_pareto_front_of_unique_solution(minimal):
    front = pareto_front(minimal, n=2, p=EMBEDDED)
    assert len(front) == 1
    assert front[0].objectives == pytest.approx(MINIMAL_OBJECTIVES)


def test_sweep_is_identical_across_workers(minimal):
    table = payoff_table(minimal, EMBEDDED)
    serial = sweep_epsilon_grid(minimal, table, 2, EMBEDDED, "f1")
    parallel = sweep_epsilon_grid(minimal, table, 2, EMBEDDED, "f1", workers=2)
    assert [(c.eps, c.status) for c in serial] == [(c.eps, c.status) for c in parallel]
    assert [c.point.objectives for c in serial] == [c.point.objectives for c in parallel]


@pytest.mark.slow
def test_front_points_are_mutually_nondominated():
    from hwlrp.instance import SynthDims, synth_instance

    inst = synth_instance(3, SynthDims(n_gen=2, n_rec=2, n_treat=2, n_disp=2))
    front = pareto_front(inst, n=3, p=EMBEDDED)
    assert front
    for p, q in itertools.permutations(front, 2):
        assert not dominates(p.objectives, q.objectives, tol=1e-6)

import copy
import itertools
from dataclasses import replace

import pytest

from hwlrp.errors import FormulationError, RouteReconstructionError
from hwlrp.formulation import (
    Opening,
    big_m,
    build_model,
    check_solution_feasible,
    evaluate_objectives,
    extract_solution,
    residue_links,
    solution_from_document,
    solution_to_document,
    vehicle_arcs,
)
from hwlrp.instance import parse_instance
from hwlrp.milp import EQ, GE, ModelBuilder, evaluate, model_stats
from hwlrp.solver import INFEASIBLE, OPTIMAL, SolveParams, solve_lp, solve_milp

from conftest import MINIMAL_OBJECTIVES

EMBEDDED = SolveParams(backend="embedded")


@pytest.fixture
def solved(minimal):
    model, cat = build_model(minimal, "f1")
    res = solve_milp(model, EMBEDDED)
    assert res.status == OPTIMAL
    return model, cat, res, extract_solution(minimal, cat, res.assignment)


def test_minimal_model_size(minimal):
    model, cat = build_model(minimal, "f1")
    stats = model_stats(model)
    assert stats.binary == 6
    assert stats.continuous == 15
    assert stats.integer == 0
    assert len(model.constraints) == 36
    assert cat.is_bijection(model)


def test_variable_and_row_names(minimal):
    model, cat = build_model(minimal, "f1")
    assert model.var_by_name("x_F1_G1_K1").id == cat["x"][("F1", "G1", "K1")]
    assert model.var_by_name("t_chemical_T1_L1").kind == "binary"
    assert model.constraint("eq06_visit_G1_W1").sense == EQ
    assert model.var_by_name("xl_F1_G1_K1").upper == 0.0
    assert model.var_by_name("xl_T1_F1_K1").upper == 0.0
    assert model.var_by_name("xl_G1_T1_K1").upper == 10.0


def test_routing_arcs(minimal):
    assert vehicle_arcs(minimal, minimal.vehicle("K1")) == [("F1", "G1"), ("G1", "T1"), ("T1", "F1")]
    assert residue_links(minimal) == {"k": [("T1", "R1")], "z": [("T1", "D1")], "v": [("R1", "D1")]}
    assert big_m(minimal) == 10.0


@pytest.mark.parametrize("objective,index", [("f1", 0), ("f2", 1), ("f3", 2)])
def test_minimal_optimum(minimal, objective, index):
    model, cat = build_model(minimal, objective)
    res = solve_milp(model, EMBEDDED)
    assert res.status == OPTIMAL
    assert res.objective == pytest.approx(MINIMAL_OBJECTIVES[index], rel=1e-9)
    sol = extract_solution(minimal, cat, res.assignment)
    assert sol.objectives == pytest.approx(MINIMAL_OBJECTIVES, rel=1e-9)


def test_extracted_plan(minimal, solved):
    _, _, _, sol = solved
    assert len(sol.routes) == 1
    route = sol.routes[0]
    assert route.nodes == ("F1", "G1", "T1", "F1")
    assert route.stops == ("G1",)
    assert route.terminal == "T1"
    assert route.load == pytest.approx(5.0)
    assert route.length == pytest.approx(12.0)
    assert sol.opening("T1") == Opening("T1", "treatment", "L1", "chemical", False)
    assert {o.node for o in sol.openings} == {"T1", "R1", "D1"}
    assert sol.xt[("W1", "T1")] == pytest.approx(5.0)
    assert sol.k[("T1", "R1")] == pytest.approx(1.2)
    assert sol.z[("T1", "D1")] == pytest.approx(2.8)
    assert sol.v[("R1", "D1")] == pytest.approx(0.12)
    assert sol.throughput("recycling", "R1") == pytest.approx(1.2)
    assert sol.throughput("disposal", "D1") == pytest.approx(2.92)


def test_solution_is_feasible(minimal, solved):
    model, _, res, sol = solved
    assert evaluate(model, res.assignment).feasible
    assert check_solution_feasible(minimal, sol) == []


def test_route_too_long_is_reported(short_range, solved):
    _, _, _, sol = solved
    tags = [v.tag for v in check_solution_feasible(short_range, sol)]
    assert tags == ["eq10_12_distance"]


def test_min_throughput_is_reported(minimal_doc, solved):
    _, _, _, sol = solved
    minimal_doc["min_thresholds"]["disposal"][0]["min"] = 3.0
    violations = check_solution_feasible(parse_instance(minimal_doc), sol)
    assert [(v.tag, v.subject) for v in violations] == [("eq28_min_throughput", "D1")]


def test_unserved_demand_is_reported(minimal, solved):
    _, _, _, sol = solved
    tags = {v.tag for v in check_solution_feasible(minimal, replace(sol, routes=()))}
    assert "eq06_single_visit" in tags
    assert "eq17_treated_mass" in tags


def test_short_range_is_infeasible(short_range):
    model, _ = build_model(short_range, "f1")
    assert solve_milp(model, EMBEDDED).status == INFEASIBLE


def test_broken_walk_is_rejected(minimal):
    model, cat = build_model(minimal, "f1")
    a = {i: 0.0 for i in range(model.n_vars)}
    a[cat["x"][("F1", "G1", "K1")]] = 1.0
    with pytest.raises(RouteReconstructionError):
        extract_solution(minimal, cat, a)
    a[cat["x"][("F1", "G1", "K1")]] = 0.0
    a[cat["x"][("T1", "F1", "K1")]] = 1.0
    with pytest.raises(RouteReconstructionError):
        extract_solution(minimal, cat, a)


def test_zero_demand_opens_nothing(zero_demand):
    model, cat = build_model(zero_demand, "f1")
    assert not cat["x"]
    res = solve_milp(model, EMBEDDED)
    assert res.status == OPTIMAL
    sol = extract_solution(zero_demand, cat, res.assignment)
    assert sol.routes == ()
    assert sol.openings == ()
    assert sol.objectives == (0.0, 0.0, 0.0)


def test_existing_facility_is_forced_open_and_free(minimal_doc):
    doc = copy.deepcopy(minimal_doc)
    doc["nodes"][2]["kind"] = "recycling-existing"
    inst = parse_instance(doc)
    model, cat = build_model(inst, "f1")
    row = model.constraint("eq32_existing_R1")
    assert row.sense == EQ and row.rhs == 1.0
    assert model.constraint("eq23_min_throughput_R1").sense == GE
    res = solve_milp(model, EMBEDDED)
    assert res.objective == pytest.approx(MINIMAL_OBJECTIVES[0] - 50.0)


def test_existing_facility_keeps_its_minimum_throughput(minimal_doc, solved):
    doc = copy.deepcopy(minimal_doc)
    doc["nodes"][2]["kind"] = "recycling-existing"
    # R1 can only ever receive the 1.2 t of treatment residue
    doc["min_thresholds"]["recycling"][0]["min"] = 2.0
    inst = parse_instance(doc)
    model, _ = build_model(inst, "f1")
    assert solve_milp(model, EMBEDDED).status == INFEASIBLE
    _, _, _, sol = solved
    assert "eq23_min_throughput" in {v.tag for v in check_solution_feasible(inst, sol)}


def test_risk_modes_agree_on_single_level(minimal, solved):
    _, _, _, sol = solved
    assert evaluate_objectives(minimal, sol, "all-levels") == pytest.approx(
        evaluate_objectives(minimal, sol, "level-coupled"))


def test_build_rejects_bad_input(minimal, minimal_doc):
    with pytest.raises(FormulationError):
        build_model(minimal, "f4")
    with pytest.raises(FormulationError):
        build_model(minimal, "f1", risk_mode="optimistic")
    minimal_doc["waste_types"][0]["demand"]["G1"] = 12.0
    with pytest.raises(FormulationError):
        build_model(parse_instance(minimal_doc), "f1")


def test_solution_document_round_trip(solved):
    _, _, _, sol = solved
    assert solution_from_document(solution_to_document(sol)) == sol
    with pytest.raises(FormulationError):
        solution_from_document({"routes": [{"vehicle": "K1"}]})


@pytest.mark.slow
def test_synthetic_solution_passes_domain_check():
    from hwlrp.instance import SynthDims, synth_instance

    inst = synth_instance(11, SynthDims(n_gen=3, n_waste=2, n_vehicles=2))
    model, cat = build_model(inst, "f1")
    res = solve_milp(model, EMBEDDED)
    assert res.status == OPTIMAL
    sol = extract_solution(inst, cat, res.assignment)
    assert check_solution_feasible(inst, sol) == []
    assert sol.objectives[0] == pytest.approx(res.objective, rel=1e-6)


def test_linearization_is_exact_at_every_integral_point(minimal):
    model, cat = build_model(minimal, "f1")
    binaries = [v for v in model.variables if v.kind == "binary"]
    feasible = 0
    for values in itertools.product((0.0, 1.0), repeat=len(binaries)):
        builder = ModelBuilder.from_model(model)
        for var, value in zip(binaries, values):
            builder.add_constraint(f"fix_{var.name}", [(var.id, 1.0)], EQ, value)
        res = solve_lp(builder.build(), EMBEDDED)
        if res.status != OPTIMAL:
            continue
        feasible += 1
        a = res.assignment
        for (i, j, k), var_id in cat["xl"].items():
            load = a[cat["lo"][(i, k)]] if (i, k) in cat["lo"] else 0.0
            product = a[cat["x"][(i, j, k)]] * load
            assert a[var_id] == pytest.approx(product, abs=1e-7)
        sol = extract_solution(minimal, cat, a)
        assert evaluate_objectives(minimal, sol)[0] == pytest.approx(res.objective, rel=1e-9)
    assert feasible >= 1


@pytest.fixture
def two_stop(minimal_doc):
    """F1 -> G1 -> G2 -> T1 -> F1 is the only route; G1 -> G2 carries 5 t, G2 -> T1 carries 7 t."""
    doc = copy.deepcopy(minimal_doc)
    doc["name"] = "two-stop"
    doc["nodes"].insert(2, {"id": "G2", "kind": "generation", "x": 3.0, "y": 1.0})
    doc["waste_types"][0]["demand"]["G2"] = 2.0
    doc["arcs"] = [a for a in doc["arcs"] if (a["from"], a["to"]) != ("G1", "T1")]
    doc["arcs"] += [
        {"from": "G1", "to": "G2", "distance": 1.0, "unit_cost": 1.0, "directed": True},
        {"from": "G2", "to": "T1", "distance": 4.0, "unit_cost": 2.0, "directed": True},
    ]
    return parse_instance(doc)


def test_routing_cost_charges_only_the_unloading_leg(two_stop):
    model, cat = build_model(two_stop, "f1")
    res = solve_milp(model, EMBEDDED)
    assert res.status == OPTIMAL
    sol = extract_solution(two_stop, cat, res.assignment)
    assert sol.routes[0].nodes == ("F1", "G1", "G2", "T1", "F1")
    assert res.assignment[cat["xl"][("G1", "G2", "K1")]] == pytest.approx(5.0)
    # 2*7 (G2->T1 leg) + 0.5*1.68 + 0.4*3.92 + 0.3*0.168 + 100 + 50 + 30; G1->G2 is free
    assert res.objective == pytest.approx(196.4584, rel=1e-9)
    assert evaluate_objectives(two_stop, sol)[0] == pytest.approx(196.4584, rel=1e-9)


def test_arc_risk_applies_to_residue_links_only(minimal_doc):
    doc = copy.deepcopy(minimal_doc)
    for arc in doc["arcs"]:
        if (arc["from"], arc["to"]) == ("G1", "T1"):
            arc["transport_risk"] = 100.0
    model, _ = build_model(parse_instance(doc), "f2")
    res = solve_milp(model, EMBEDDED)
    assert res.objective == pytest.approx(MINIMAL_OBJECTIVES[1], rel=1e-9)

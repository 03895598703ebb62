import copy

import pytest
import yaml

from hwlrp.instance import SynthDims, parse_instance, synth_instance

# 1 depot, 1 generation node, 1 candidate per facility kind, 1 waste type, 1 vehicle.
# The only feasible plan is F1 -> G1 -> T1 -> F1 with T1, R1 and D1 open.
MINIMAL_YAML = """\
name: minimal
nodes:
  - {id: F1, kind: depot, x: 0.0, y: 0.0}
  - {id: G1, kind: generation, x: 3.0, y: 0.0}
  - {id: R1, kind: recycling-candidate, x: 2.0, y: 5.0}
  - {id: T1, kind: treatment-candidate, x: 3.0, y: 4.0}
  - {id: D1, kind: disposal-candidate, x: 6.0, y: 8.0}
waste_types:
  - id: W1
    demand: {G1: 5.0}
    tech_compat: {chemical: 1}
    recyclable_fraction_after_tech: {chemical: 0.3}
    mass_reduction: {chemical: 0.2}
    risk_potential: 0.2
vehicles:
  - {id: K1, waste_compat: {W1: 1}, capacity: 10.0, max_distance: 100.0}
technologies:
  - {id: chemical}
capacity_levels:
  - level: L1
    treatment:
      - {node: T1, technology: chemical, max: 20.0, invest_cost: 100.0, op_risk: 0.5}
    recycling:
      - {node: R1, max: 20.0, invest_cost: 50.0, op_risk: 0.2}
    disposal:
      - {node: D1, max: 20.0, invest_cost: 30.0, op_risk: 0.3}
min_thresholds:
  treatment:
    - {node: T1, technology: chemical, min: 1.0}
  recycling:
    - {node: R1, min: 1.0}
  disposal:
    - {node: D1, min: 1.0}
arcs:
  - {from: F1, to: G1, distance: 3.0, unit_cost: 1.0}
  - {from: G1, to: T1, distance: 4.0, unit_cost: 2.0}
  - {from: T1, to: F1, distance: 5.0, unit_cost: 1.0}
  - {from: T1, to: R1, distance: 2.0, unit_cost: 0.5, transport_risk: 0.1, co2_transport: 1.0}
  - {from: T1, to: D1, distance: 6.0, unit_cost: 0.4, transport_risk: 0.2, co2_transport: 1.0}
  - {from: R1, to: D1, distance: 3.0, unit_cost: 0.3, transport_risk: 0.3, co2_transport: 1.0}
recycling_ratio: {R1: 0.9}
co2_ops:
  recycling:
    - {node: R1, rate: 398.0}
  treatment:
    - {node: T1, technology: chemical, rate: 280.0}
  disposal:
    - {node: D1, rate: 271.0}
"""

# hand-computed optimum of the minimal instance
# f1: 2*5 (G1->T1 leg) + 0.5*1.2 + 0.4*2.8 + 0.3*0.12 + 100 + 50 + 30
# f2: 0.1*1.2 + 0.2*2.8 + 0.3*0.12 + 0.5*5 + 0.2*1.2 + 0.3*2.92
# f3: 398*1.2 + 280*5 + 271*2.92 + 2*1.2 + 6*2.8 + 3*0.12
MINIMAL_OBJECTIVES = (191.756, 4.332, 2688.48)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="need --runslow option to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def minimal_doc():
    return yaml.safe_load(MINIMAL_YAML)


@pytest.fixture
def minimal(minimal_doc):
    return parse_instance(minimal_doc)


@pytest.fixture
def zero_demand(minimal_doc):
    doc = copy.deepcopy(minimal_doc)
    doc["name"] = "zero-demand"
    doc["waste_types"][0]["demand"]["G1"] = 0.0
    return parse_instance(doc)


@pytest.fixture
def short_range(minimal_doc):
    """Vehicle range below the only route's length (12 km)."""
    doc = copy.deepcopy(minimal_doc)
    doc["name"] = "short-range"
    doc["vehicles"][0]["max_distance"] = 11.0
    return parse_instance(doc)


@pytest.fixture
def tiny():
    return synth_instance(7, SynthDims(n_gen=2))


@pytest.fixture
def minimal_file(tmp_path):
    path = tmp_path / "minimal.yaml"
    path.write_text(MINIMAL_YAML, encoding="utf-8")
    return path

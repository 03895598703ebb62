import copy
import math

import pytest

from hwlrp import case_study
from hwlrp.errors import DuplicateNodeError, InstanceError, InstanceParseError, SchemaViolationError
from hwlrp.instance import (
    FATAL,
    WARNING,
    SynthDims,
    case_study_instance,
    collapse_capacity_levels,
    dump_instance,
    has_fatal,
    load_instance,
    parse_instance,
    rescale_capacity,
    scale_demand,
    serialize_instance,
    synth_instance,
    validate_instance,
)

from conftest import MINIMAL_YAML


# --- parse_instance ---

def test_minimal_document_parses_to_five_nodes():
    inst = parse_instance(MINIMAL_YAML)
    assert len(inst.nodes) == 5
    assert inst.depots == ["F1"]
    assert inst.generation == ["G1"]
    assert inst.eps_constant == 1e-4
    assert inst.arc("D1", "T1").distance == 6.0


def test_negative_demand_names_the_field(minimal_doc):
    minimal_doc["waste_types"][0]["demand"]["G1"] = -3
    with pytest.raises(SchemaViolationError) as err:
        parse_instance(minimal_doc)
    assert "waste_types[0].demand.G1" in err.value.field


def test_unknown_field_is_rejected(minimal_doc):
    minimal_doc["vehicles"][0]["colour"] = "red"
    with pytest.raises(SchemaViolationError):
        parse_instance(minimal_doc)


def test_syntax_error_reports_line_and_column():
    text = "name: broken\nnodes: [\n  {id: F1\n"
    with pytest.raises(InstanceParseError) as err:
        parse_instance(text)
    assert err.value.line is not None and err.value.line >= 2
    assert err.value.column is not None


def test_duplicate_node_id(minimal_doc):
    minimal_doc["nodes"].append({"id": "G1", "kind": "generation"})
    with pytest.raises(DuplicateNodeError) as err:
        parse_instance(minimal_doc)
    assert err.value.node_id == "G1"


def test_declared_defaults_are_applied(minimal):
    arc = minimal.arc("F1", "G1")
    assert arc.transport_risk == 0.0
    assert arc.risk_cap is None
    assert arc.directed is False
    assert minimal.metadata == {}
    assert minimal.provenance == {}


def test_round_trip_is_identity(minimal, tmp_path):
    assert parse_instance(serialize_instance(minimal)) == minimal
    path = dump_instance(minimal, tmp_path / "out" / "minimal.yaml")
    assert load_instance(path) == minimal


# --- validate_instance ---

def test_valid_minimal_has_empty_report(minimal):
    assert validate_instance(minimal) == []


def test_demand_above_vehicle_capacity_is_fatal(minimal_doc):
    minimal_doc["waste_types"][0]["demand"]["G1"] = 12.0
    findings = validate_instance(parse_instance(minimal_doc))
    assert has_fatal(findings)
    assert any("exceeds any single vehicle capacity" in f.message for f in findings)


def test_min_threshold_above_every_level_is_fatal(minimal_doc):
    minimal_doc["min_thresholds"]["disposal"][0]["min"] = 25.0
    findings = validate_instance(parse_instance(minimal_doc))
    assert [f.entity for f in findings if f.severity == FATAL] == ["disposal/D1"]


def test_zero_min_threshold_is_a_warning(minimal_doc):
    minimal_doc["min_thresholds"]["recycling"] = []
    findings = validate_instance(parse_instance(minimal_doc))
    assert [(f.severity, f.entity) for f in findings] == [(WARNING, "recycling/R1")]


def test_waste_without_terminal_is_fatal(minimal_doc):
    minimal_doc["capacity_levels"][0]["treatment"] = []
    minimal_doc["min_thresholds"]["treatment"] = []
    findings = validate_instance(parse_instance(minimal_doc))
    assert any(f.entity == "waste_types/W1" and f.severity == FATAL for f in findings)


def test_vehicle_serving_two_wastes_is_fatal(minimal_doc):
    extra = copy.deepcopy(minimal_doc["waste_types"][0])
    extra["id"] = "W2"
    minimal_doc["waste_types"].append(extra)
    minimal_doc["vehicles"][0]["waste_compat"] = {"W1": 1, "W2": 1}
    findings = validate_instance(parse_instance(minimal_doc))
    assert any(f.entity == "vehicles/K1" for f in findings)


# --- synth_instance ---

def test_synth_all_ones_is_valid():
    inst = synth_instance(1)
    assert validate_instance(inst) == []
    assert inst.metadata["oracle_tractable"] is True


@pytest.mark.parametrize("seed", range(10))
def test_synth_corpus_is_valid(seed):
    dims = SynthDims(n_gen=1 + seed % 4, n_waste=1 + seed % 2, n_vehicles=2, n_levels=1 + seed % 3)
    assert validate_instance(synth_instance(seed, dims)) == []


def test_synth_is_deterministic():
    dims = {"n_gen": 3, "n_waste": 2, "n_vehicles": 3}
    assert serialize_instance(synth_instance(5, dims)) == serialize_instance(synth_instance(5, dims))
    assert serialize_instance(synth_instance(5, dims)) != serialize_instance(synth_instance(6, dims))


def test_synth_rejects_zero_dims():
    with pytest.raises(InstanceError):
        synth_instance(1, SynthDims(n_gen=0))


def test_synth_round_trips():
    inst = synth_instance(3, SynthDims(n_gen=3, n_waste=2, n_vehicles=2, n_levels=2))
    assert parse_instance(serialize_instance(inst)) == inst


# --- scenario transforms ---

def test_scale_demand(minimal):
    scaled = scale_demand(minimal, 1.1)
    assert scaled.demand("W1", "G1") == pytest.approx(5.5)
    with pytest.raises(InstanceError):
        scale_demand(minimal, 0.0)


def test_rescale_capacity(minimal):
    bigger = rescale_capacity(minimal, [2.0], "increased")
    assert bigger.facility_level("recycling", "R1", "L1").max == 40.0
    with pytest.raises(InstanceError):
        rescale_capacity(minimal, [2.0, 1.5])


def test_collapse_capacity_levels(minimal):
    single = collapse_capacity_levels(minimal)
    assert single.levels == ["single"]
    assert single.facility_level("disposal", "D1", "single").max == 50.0
    assert single.min_threshold("treatment", "T1", "chemical") == 0.0


# --- case study ---

@pytest.fixture(scope="module")
def case():
    return case_study_instance()


def test_case_study_is_valid(case):
    assert validate_instance(case) == []


def test_case_study_round_trips(case):
    assert parse_instance(serialize_instance(case)) == case


def test_case_study_published_values(case):
    assert case.co2_ops.recycling["R1"] == 398.0
    assert case.co2_ops.treatment[("T1", "incineration")] == 980.0
    assert case.co2_ops.treatment[("T1", "chemical")] == 280.0
    assert case.co2_ops.disposal["D6"] == 271.0
    assert case.facility_level("recycling", "R6", "5").invest_cost == 847.0
    assert case.facility_level("treatment", "T1", "15", "chemical").invest_cost == 2241.0
    assert case.metadata["total_waste"] == 47513.0
    assert case.metadata["district_waste"]["VI"] == 4329.0
    assert case.metadata["waste_share"]["health"] == [0.10, 0.30, 0.15, 0.08]
    assert case.metadata["waste_risk_potential"] == [0.05, 0.2, 0.2, 0.2]
    assert case.metadata["residue_risk_potential"]["treatment_to_recycling"] == 0.05


def test_case_study_ratios(case):
    chemical = case.waste("W3")
    incineration = case.waste("W2")
    assert chemical.mass_reduction["chemical"] == 0.20
    assert chemical.recyclable_fraction_after_tech["chemical"] == 0.30
    assert incineration.mass_reduction["incineration"] == 0.80
    assert incineration.recyclable_fraction_after_tech["incineration"] == 0.0
    assert case.recycling_ratio["RE1"] == 0.95
    arc = case.arc("F0", "G1")
    assert arc.unit_cost == pytest.approx(0.01 * arc.distance)


def test_case_study_demand_split(case):
    assert len(case.generation) == 13
    assert len(case.vehicles) == 12
    collected = case_study.COLLECTED_SHARE * sum(case_study.DISTRICT_WASTE.values())
    assert case.total_demand == pytest.approx(collected, abs=1e-2)
    assert math.fsum(case_study.waste_type_shares()) == pytest.approx(1.0)


def test_case_study_existing_facilities(case):
    existing = [n.id for n in case.nodes if n.existing]
    assert existing == ["RE1", "TE1", "DE1", "DE4"]
    assert all(n.district is not None for n in case.nodes)
    assert case.hostable_techs("TE1") == ["incineration"]
    assert case.provenance["arcs.distance"] == "synthetic"
    assert case.provenance["nodes.existing"] == "synthetic"
    assert case.provenance["co2_ops"] == "paper"


def test_provenance_tags(minimal_doc):
    minimal_doc["provenance"] = {"co2_ops": "paper", "arcs.distance": "synthetic"}
    assert parse_instance(minimal_doc).provenance["co2_ops"] == "paper"
    minimal_doc["provenance"] = {"co2_ops": "published"}
    with pytest.raises(SchemaViolationError):
        parse_instance(minimal_doc)

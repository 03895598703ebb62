import math

import pytest

from hwlrp.errors import LpExportError, ModelError
from hwlrp.milp import BINARY, EQ, GE, INTEGER, LE, ModelBuilder, combine, evaluate, export_lp, lp_names, model_stats


def _toy():
    b = ModelBuilder("toy")
    x = b.add_var("x", 0, 10)
    y = b.add_var("y", kind=BINARY)
    n = b.add_var("n", 0, 5, kind=INTEGER)
    b.add_constraint("cap", [(x, 1), (y, 4)], LE, 8)
    b.add_constraint("link", [(x, 1), (n, -1)], GE, 0)
    b.add_constraint("fix", [(n, 1)], EQ, 2)
    b.set_objective([(x, 2), (y, 3)], "min", constant=1.5)
    return b.build(), (x, y, n)


def test_builder_rejects_misuse():
    b = ModelBuilder()
    x = b.add_var("x")
    with pytest.raises(ModelError):
        b.add_var("x")
    with pytest.raises(ModelError):
        b.add_var("bad", 2, 1)
    with pytest.raises(ModelError):
        b.add_constraint("c", [(x, math.inf)], LE, 1)
    with pytest.raises(ModelError):
        b.add_constraint("c", [(x, 1)], "<", 1)
    with pytest.raises(ModelError):
        b.add_constraint("c", [(7, 1)], LE, 1)
    b.add_constraint("c", [(x, 1)], LE, 1)
    with pytest.raises(ModelError):
        b.add_constraint("c", [(x, 1)], LE, 2)


def test_duplicate_terms_are_merged():
    b = ModelBuilder()
    x = b.add_var("x")
    b.add_constraint("c", [(x, 1), (x, 2)], LE, 1)
    b.add_constraint("zero", [(x, 1), (x, -1)], LE, 1)
    model = b.build()
    assert model.constraint("c").coeffs == {x: 3.0}
    assert model.constraint("zero").coeffs == {}


def test_evaluate_feasible_point():
    model, (x, y, n) = _toy()
    ev = evaluate(model, {x: 2.0, y: 1.0, n: 2.0})
    assert ev.feasible
    assert ev.objective == pytest.approx(2 * 2 + 3 + 1.5)


def test_evaluate_reports_each_breach():
    model, (x, y, n) = _toy()
    ev = evaluate(model, {x: 6.0, y: 1.0, n: 2.5})
    assert [(v.name, v.residual) for v in ev.violations] == [("cap", 2.0), ("fix", 0.5)]
    assert [v.name for v in ev.integrality] == ["n"]
    assert not ev.feasible


def test_evaluate_tolerance():
    model, (x, y, n) = _toy()
    within = evaluate(model, {x: 2.0, y: 0.0, n: 2.0 + 5e-8})
    assert within.feasible
    beyond = evaluate(model, {x: 2.0, y: 0.0, n: 2.0 + 1e-5})
    assert [v.name for v in beyond.violations] == ["fix"]


def test_evaluate_bounds_and_missing_values():
    model, (x, y, n) = _toy()
    ev = evaluate(model, {x: -1.0, y: 0.0, n: 2.0})
    assert "lb:x" in [v.name for v in ev.violations]
    with pytest.raises(ModelError):
        evaluate(model, {x: 1.0})


def test_model_stats():
    model, _ = _toy()
    stats = model_stats(model)
    assert stats.as_dict() == {
        "continuous": 1, "binary": 1, "integer": 1, "<=": 1, "=": 1, ">=": 1, "nonzeros": 5,
    }


def test_export_sections_in_order():
    model, _ = _toy()
    text = export_lp(model)
    order = [text.index(s) for s in ("Minimize", "Subject To", "Bounds", "Binaries", "Generals", "End")]
    assert order == sorted(order)
    assert " cap:" in text
    assert "   0 <= x <= 10" in text
    assert "   +1.5 ONE_VAR_CONSTANT" in text
    assert "   1 <= ONE_VAR_CONSTANT <= 1" in text


def test_export_is_deterministic():
    first, _ = _toy()
    second, _ = _toy()
    assert export_lp(first) == export_lp(second)


def test_export_without_constant_has_no_helper_variable():
    b = ModelBuilder("plain")
    x = b.add_var("x", 0, 1)
    b.add_constraint("c", [(x, 1)], GE, 0.5)
    b.set_objective([(x, 1)], "max")
    text = export_lp(b.build())
    assert text.startswith("\\* plain *\\")
    assert "Maximize" in text
    assert "ONE_VAR_CONSTANT" not in text
    assert "Binaries" not in text


def test_export_empty_model_fails():
    with pytest.raises(LpExportError):
        export_lp(ModelBuilder("empty").build())


def test_lp_names_are_sanitized_and_unique():
    b = ModelBuilder()
    b.add_var("x[1]")
    b.add_var("x_1_")
    b.add_var("1st")
    b.add_var("e12")
    names = lp_names(b.build())
    assert names["x[1]"] == "x_1_"
    assert names["x_1_"] == "x_1__1"
    assert names["1st"] == "_1st"
    assert names["e12"] == "_e12"


def test_combine():
    assert combine(({0: 1.0, 1: 2.0}, 2.0), ({1: -4.0}, 1.0)) == {0: 2.0}

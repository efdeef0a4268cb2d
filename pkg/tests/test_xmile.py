"""XMILE document parsing: supported subset, diagnostics, determinism."""
import textwrap

import pytest

from stockflow import load_model, model_to_json, parse_xmile, simulate
from stockflow import models as bundled
from stockflow.ir import Binary, Num, Ref, VarKind, model_from_json


def doc(variables: str, specs: str = "<start>0</start><stop>10</stop><dt>1</dt>") -> str:
    return textwrap.dedent(f"""\
        <?xml version="1.0" encoding="utf-8"?>
        <xmile version="1.0" xmlns="http://docs.oasis-open.org/xmile/ns/XMILE/v1.0">
          <header><name>test</name></header>
          <sim_specs time_units="weeks">{specs}</sim_specs>
          <model>
            <variables>
              {variables}
            </variables>
          </model>
        </xmile>
        """)


def test_teacup_parses_to_expected_ir():
    model = load_model(bundled.model_path("teacup"))
    assert model.specs.start == 0.0
    assert model.specs.stop == 30.0
    assert model.specs.dt == 0.1
    assert model.specs.time_units == "minutes"

    kinds = {n: v.kind for n, v in model.variables.items()}
    assert kinds == {
        "teacup_temperature": VarKind.STOCK,
        "heat_loss": VarKind.FLOW,
        "room_temperature": VarKind.CONST,
        "characteristic_time": VarKind.CONST,
    }
    stock = model.variables["teacup_temperature"]
    assert stock.initial == Num(180.0)
    assert stock.outflows == ("heat_loss",)
    assert stock.inflows == ()
    flow = model.variables["heat_loss"]
    assert flow.equation == Binary(
        "/",
        Binary("-", Ref("teacup_temperature"), Ref("room_temperature")),
        Ref("characteristic_time"))
    assert model.variables["room_temperature"].value == 70.0
    assert model.variables["room_temperature"].limits == (50.0, 90.0)
    assert model.variables["characteristic_time"].units == "minutes"


def test_range_maps_to_limits():
    model = load_model(bundled.model_path("ev_adoption"))
    assert model.variables["gov_policy_on_taxes"].limits == (0.0, 1.0)
    assert model.variables["price_ec_without_taxes"].limits == (20000.0, 100000.0)
    assert model.variables["vat"].limits is None


def test_scale_element_also_maps_to_limits():
    result = parse_xmile(doc(
        '<aux name="c"><eqn>1</eqn><scale min="-2" max="2"/></aux>'))
    assert result.ok
    assert result.model.variables["c"].limits == (-2.0, 2.0)


def test_non_negative_flag():
    model = load_model(bundled.model_path("ev_adoption"))
    assert model.variables["ec_in_use"].non_negative
    model = load_model(bundled.model_path("transfer"))
    assert not model.variables["source_tank"].non_negative


def test_gf_with_xscale_builds_even_grid():
    model = load_model(bundled.model_path("ev_adoption"))
    table = model.tables["infrastructure_effect"]
    assert table.x_points == pytest.approx((0.0, 0.04, 0.08, 0.12, 0.16, 0.2))
    assert table.y_points == (0.2, 0.55, 0.75, 0.88, 0.95, 1.0)


def test_gf_with_explicit_xpts():
    result = parse_xmile(doc(
        '<aux name="shaped"><eqn>TIME</eqn>'
        '<gf><xpts>0,2,10</xpts><ypts>1,5,9</ypts></gf></aux>'))
    assert result.ok
    assert result.model.tables["shaped"].x_points == (0.0, 2.0, 10.0)


def test_reciprocal_dt():
    result = parse_xmile(doc(
        '<aux name="c"><eqn>1</eqn></aux>',
        specs='<start>0</start><stop>10</stop><dt reciprocal="true">4</dt>'))
    assert result.ok
    assert result.model.specs.dt == 0.25


def test_display_names_normalize():
    result = parse_xmile(doc(
        '<stock name="Water Level"><eqn>5</eqn><inflow>Fill Rate</inflow></stock>'
        '<flow name="Fill Rate"><eqn>2</eqn></flow>'))
    assert result.ok
    assert "water_level" in result.model.variables
    assert result.model.variables["water_level"].inflows == ("fill_rate",)


def test_array_subscript_in_equation_is_unsupported_arrays():
    result = parse_xmile(doc('<aux name="a"><eqn>b[1]</eqn></aux>'))
    assert not result.ok
    assert any(d.code == "unsupported_arrays" for d in result.diagnostics)


def test_dimensions_element_is_unsupported_arrays():
    result = parse_xmile(doc(
        '<aux name="a"><eqn>1</eqn><dimensions><dim name="region"/></dimensions></aux>'))
    assert not result.ok
    assert any(d.code == "unsupported_arrays" for d in result.diagnostics)


def test_module_is_unsupported_submodels():
    result = parse_xmile(doc('<module name="sub"/>'))
    assert not result.ok
    assert any(d.code == "unsupported_submodels" for d in result.diagnostics)


def test_unknown_builtin_named_in_error():
    result = parse_xmile(doc('<aux name="a"><eqn>WIBBLE(3)</eqn></aux>'))
    assert not result.ok
    diag = next(d for d in result.diagnostics if d.severity == "error")
    assert "wibble" in diag.message
    assert diag.line > 0


def test_views_ignored_with_warning():
    text = doc('<aux name="a"><eqn>1</eqn></aux>').replace(
        "</model>", "<views><view/></views></model>")
    result = parse_xmile(text)
    assert result.ok
    assert any(d.severity == "warning" and d.code == "ignored_display"
               for d in result.diagnostics)


def test_flow_non_negative_warns_but_parses():
    result = parse_xmile(doc(
        '<stock name="s"><eqn>1</eqn><inflow>f</inflow></stock>'
        '<flow name="f"><eqn>1</eqn><non_negative/></flow>'))
    assert result.ok
    assert any(d.code == "ignored_flow_non_negative" for d in result.diagnostics)


def test_per_variable_dt_rejected():
    result = parse_xmile(doc('<aux name="a"><eqn>1</eqn><dt>0.5</dt></aux>'))
    assert not result.ok
    assert any("dt" in d.message for d in result.diagnostics)


def test_malformed_xml_single_error():
    result = parse_xmile("<xmile><unclosed>")
    assert not result.ok
    assert len(result.diagnostics) == 1
    assert result.diagnostics[0].code == "malformed_xml"


def test_reserved_builtin_name_rejected():
    result = parse_xmile(doc('<aux name="time"><eqn>1</eqn></aux>'))
    assert not result.ok
    assert any(d.code == "reserved_name" for d in result.diagnostics)
    result = parse_xmile(doc('<aux name="min"><eqn>1</eqn></aux>'))
    assert any(d.code == "reserved_name" for d in result.diagnostics)


def test_duplicate_names_rejected():
    result = parse_xmile(doc(
        '<aux name="a"><eqn>1</eqn></aux><aux name="A"><eqn>2</eqn></aux>'))
    assert not result.ok
    assert any(d.code == "duplicate_name" for d in result.diagnostics)


def test_stock_referencing_missing_flow_fails_validation():
    result = parse_xmile(doc('<stock name="s"><eqn>1</eqn><inflow>ghost</inflow></stock>'))
    assert not result.ok
    assert any(d.code == "invalid_model" and "ghost" in d.message
               for d in result.diagnostics)


def test_expression_error_position_points_at_eqn():
    text = doc('<aux name="broken"><eqn>1 + * 2</eqn></aux>')
    result = parse_xmile(text)
    assert not result.ok
    diag = next(d for d in result.diagnostics if d.severity == "error")
    assert diag.line > 0
    assert "broken" in diag.message
    assert "offset 4" in diag.message


def test_literal_aux_becomes_constant_gf_aux_does_not():
    result = parse_xmile(doc(
        '<aux name="plain"><eqn>5</eqn></aux>'
        '<aux name="negative"><eqn>-5</eqn></aux>'
        '<aux name="shaped"><eqn>5</eqn>'
        '<gf><xscale min="0" max="10"/><ypts>0,1</ypts></gf></aux>'))
    assert result.ok
    assert result.model.variables["plain"].kind is VarKind.CONST
    assert result.model.variables["negative"].kind is VarKind.CONST
    assert result.model.variables["negative"].value == -5.0
    assert result.model.variables["shaped"].kind is VarKind.AUX


def test_parse_determinism_identical_ir():
    text = bundled.model_path("ev_adoption").read_text(encoding="utf-8")
    first = parse_xmile(text)
    second = parse_xmile(text)
    assert model_to_json(first.model) == model_to_json(second.model)


@pytest.mark.parametrize("name", ["teacup", "decay", "transfer", "bathtub", "ev_adoption"])
def test_ir_json_round_trip_preserves_simulation_bits(name):
    model = load_model(bundled.model_path(name))
    clone = model_from_json(model_to_json(model))
    a = simulate(model, seed=9)
    b = simulate(clone, seed=9)
    assert a.columns == b.columns
    assert a.history == b.history

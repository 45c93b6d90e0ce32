import dataclasses
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pemfc.config import ConfigError, ValidationError, parse_text
from pemfc.params import (
    ParameterSet,
    derived_constants,
    dump_defaults,
    dump_parameters,
    load_parameters,
    parameter_hash,
    parameters_from_entries,
    saturation_pressure,
)


def _load_text(tmp_path, text):
    path = tmp_path / "p.cfg"
    path.write_text(text)
    return load_parameters(path)


def test_empty_file_gives_defaults(tmp_path):
    p = _load_text(tmp_path, "")
    assert p == ParameterSet()
    assert p.aux.J_cp == 5e-5


def test_unphysical_efficiency_names_the_key(tmp_path):
    with pytest.raises(ValidationError) as exc:
        _load_text(tmp_path, "aux.eta_cp = 1.2\n")
    assert exc.value.key == "aux.eta_cp"
    assert "eta_cp" in str(exc.value)


def test_overriding_with_the_default_value_is_idempotent(tmp_path):
    assert _load_text(tmp_path, "aux.V_sm = 0.02 [m^3]\n") == ParameterSet()


def test_unknown_key_and_section_rejected(tmp_path):
    with pytest.raises(ConfigError, match="aux.V_foo"):
        _load_text(tmp_path, "aux.V_foo = 1\n")
    with pytest.raises(ConfigError, match="nosuch"):
        _load_text(tmp_path, "nosuch.x = 1\n")


def test_units_convert_on_load(tmp_path):
    p = _load_text(tmp_path, "conditions.T_st = 70 [degC]\nconditions.P_an = 1.5 [bar]\n")
    assert p.conditions.T_st == pytest.approx(343.15)
    assert p.conditions.P_an == pytest.approx(1.5e5)


@pytest.mark.parametrize(
    "text",
    [
        "constants.gamma = 1.0",
        "constants.phi_atm = 1.5",
        "constants.X_O2 = 0",
        "constants.R_O2 = 300",  # inconsistent with R_univ / M_O2
        "aux.V_ca = -1",
    ],
)
def test_invariant_violations(tmp_path, text):
    with pytest.raises(ValidationError):
        _load_text(tmp_path, text + "\n")


def test_dump_round_trip_is_exact():
    p = ParameterSet().with_values({"aux.V_sm": 0.1 + 0.2, "conditions.T_st": 1.0 / 3.0 + 330})
    again = parameters_from_entries(parse_text(dump_parameters(p)).values())
    assert again == p
    assert parameter_hash(again) == parameter_hash(p)


def test_defaults_dump_marks_calibrated_values():
    text = dump_defaults()
    assert "electrochem.i0" in text
    line = next(l for l in text.splitlines() if l.startswith("electrochem.R_ohm"))
    assert "calibrated" in line


# --- derived constants --------------------------------------------------------


def test_derived_constant_examples(params):
    dc = derived_constants(params)
    assert dc.M_a_atm == pytest.approx(0.02884, abs=5e-6)
    assert dc.y_O2 == pytest.approx(0.2330, abs=5e-5)
    assert dc.Omega_atm == pytest.approx(0.009791, rel=1e-3)


def test_dry_ambient_has_zero_humidity_ratio(params):
    p = params.with_values({"constants.phi_atm": 0.0})
    assert derived_constants(p).Omega_atm == 0.0


@given(st.floats(min_value=1e-3, max_value=0.999))
def test_mass_fraction_closure(x_o2):
    p = ParameterSet().with_values({"constants.X_O2": x_o2})
    dc = derived_constants(p)
    assert dc.y_O2 + dc.y_N2 == 1.0


@settings(max_examples=50)
@given(st.floats(min_value=280.0, max_value=360.0))
def test_pressure_coefficients_positive_and_linear_in_temperature(T):
    p = ParameterSet()
    dc1 = derived_constants(p, dataclasses.replace(p.conditions, T_st=T))
    dc2 = derived_constants(p, dataclasses.replace(p.conditions, T_st=2 * T))
    assert dc1.c1 > 0 and dc1.c2 > 0 and dc1.c3 > 0
    assert dc2.c1 == pytest.approx(2 * dc1.c1, rel=1e-14)
    assert dc2.c2 == pytest.approx(2 * dc1.c2, rel=1e-14)


@pytest.mark.parametrize("T, P", [(298.15, 3140.4), (333.15, 19946.0), (373.15, 101325.0)])
def test_saturation_pressure_anchors(params, T, P):
    assert saturation_pressure(T, params.constants) == pytest.approx(P, rel=1e-12)


def test_saturation_pressure_increasing(params):
    vals = [saturation_pressure(T, params.constants) for T in range(275, 380, 5)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_constant_saturation_strategy(params):
    p = params.with_values({"constants.psat_correlation": "constant"})
    assert saturation_pressure(350.0, p.constants) == p.constants.P_sat_Tatm
    with pytest.raises(ValidationError):
        params.with_values({"constants.psat_correlation": "antoine"})


def test_vapor_pressure_uses_stack_humidity(params):
    dc = derived_constants(params)
    assert dc.P_v_ca == pytest.approx(0.75 * 19946.0, rel=1e-12)
    assert not math.isnan(dc.c3)

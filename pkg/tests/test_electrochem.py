import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pemfc.electrochem import (
    activation_loss,
    cell_voltage,
    concentration_loss,
    nernst_voltage,
    ohmic_loss,
    reversible_voltage,
)
from pemfc.params import ElectrochemParams


def test_reversible_voltage_examples():
    assert reversible_voltage(237340, 2, 96485) == pytest.approx(1.2299, abs=1e-4)
    assert reversible_voltage(0, 2, 96485) == 0.0
    assert reversible_voltage(237340, 4, 96485) == pytest.approx(0.61496, abs=1e-5)


def test_nernst_examples():
    assert nernst_voltage(298.15, 1.0, 1.0) == 1.229
    assert nernst_voltage(333.15, 1.0, 1.0) == pytest.approx(1.19925, abs=1e-10)
    assert nernst_voltage(298.15, 1.0, math.e**2) == pytest.approx(1.229 + 4.3085e-5 * 298.15, abs=1e-12)


@pytest.mark.parametrize("args", [(0.0, 1, 1), (300, 0, 1), (300, 1, -1)])
def test_nernst_rejects_nonpositive(args):
    with pytest.raises(ValueError):
        nernst_voltage(*args)


def test_activation_examples():
    assert activation_loss(298.15, 0.5, 1e-5, 1e-5) == 0.0
    assert activation_loss(298.15, 0.5, math.e * 1e-5, 1e-5) == pytest.approx(
        8.314 * 298.15 / (2 * 0.5 * 96485), rel=1e-12
    )
    a1 = activation_loss(330, 0.4, 0.3, 1e-4)
    assert activation_loss(330, 0.8, 0.3, 1e-4) == pytest.approx(a1 / 2, rel=1e-14)


def test_activation_below_exchange_current_is_clamped():
    assert activation_loss(330, 0.5, 1e-6, 1e-5) == 0.0
    with pytest.raises(ValueError):
        activation_loss(330, 0.5, 0.0, 1e-5)


def test_ohmic_and_concentration_examples():
    assert ohmic_loss(0, 0.01) == 0
    assert ohmic_loss(10, 0.01) == pytest.approx(0.1)
    assert ohmic_loss(-5, 0.01) == pytest.approx(-0.05)
    assert concentration_loss(0, 2e-4, 0.3) == 2e-4
    assert concentration_loss(10, 1e-4, 0.1) == pytest.approx(2.7183e-4, rel=1e-4)
    assert all(concentration_loss(I, 0.0, 0.4) == 0.0 for I in (0, 3, 15))


def test_open_circuit_zero_loss_point():
    ep = ElectrochemParams(m_mt=0.0)
    bd = cell_voltage(ep, 298.15, 1.0, 1.0, 0.0)
    assert bd.v_cell == 1.229
    assert not bd.act_clamped


def test_breakdown_flags_clamped_activation():
    ep = ElectrochemParams(i0=1.0)
    assert cell_voltage(ep, 333.15, 1, 1, 5.0).act_clamped


def test_negative_current_rejected():
    with pytest.raises(ValueError):
        cell_voltage(ElectrochemParams(), 333.15, 1, 1, -1.0)


currents = st.floats(min_value=0.0, max_value=20.0)
temps = st.floats(min_value=300.0, max_value=360.0)
press = st.floats(min_value=0.2, max_value=3.0)


@given(currents, temps, press, press, st.integers(min_value=1, max_value=5))
def test_breakdown_identity_and_stack_linearity(I, T, ph2, po2, n):
    ep = ElectrochemParams(N_cells=n)
    bd = cell_voltage(ep, T, ph2, po2, I)
    assert bd.v_cell == bd.E_nernst - bd.v_act - bd.v_ohm - bd.v_conc
    assert bd.v_stack == n * bd.v_cell
    single = cell_voltage(ElectrochemParams(N_cells=1), T, ph2, po2, I)
    assert single.v_cell == bd.v_cell
    assert min(bd.v_act, bd.v_ohm, bd.v_conc) >= 0.0


@given(temps, press, press, st.floats(min_value=0.1, max_value=20.0), st.floats(min_value=0.01, max_value=5.0))
def test_voltage_decreasing_in_current(T, ph2, po2, I, dI):
    ep = ElectrochemParams()
    assert cell_voltage(ep, T, ph2, po2, I + dI).v_cell < cell_voltage(ep, T, ph2, po2, I).v_cell


@given(temps, press, st.floats(min_value=0.0, max_value=20.0), st.floats(min_value=1.01, max_value=3.0))
def test_voltage_increasing_in_pressure(T, p, I, k):
    ep = ElectrochemParams()
    base = cell_voltage(ep, T, p, p, I).v_cell
    assert cell_voltage(ep, T, p, k * p, I).v_cell > base
    assert cell_voltage(ep, T, k * p, p, I).v_cell > base

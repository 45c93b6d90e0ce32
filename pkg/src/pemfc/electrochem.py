"""Static cell voltage: Nernst potential minus activation, ohmic and
concentration losses.

Partial pressures enter the Nernst correlation in atm; callers holding Pa
convert with :data:`PA_PER_ATM` at the call site.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .params import ElectrochemParams, PhysicalConstants

__all__ = [
    "PA_PER_ATM",
    "VoltageBreakdown",
    "reversible_voltage",
    "nernst_voltage",
    "activation_loss",
    "ohmic_loss",
    "concentration_loss",
    "cell_voltage",
]

PA_PER_ATM = 101325.0

_E_REF = 1.229
_T_REF = 298.15


@dataclass(frozen=True)
class VoltageBreakdown:
    E_nernst: float
    v_act: float
    v_ohm: float
    v_conc: float
    v_cell: float
    v_stack: float
    act_clamped: bool = False


def reversible_voltage(delta_G: float, n_e: int, F: float) -> float:
    """Ideal cell potential ``delta_G / (n_e F)`` for a free-energy magnitude."""
    return delta_G / (n_e * F)


def nernst_voltage(T_fc: float, P_H2: float, P_O2: float) -> float:
    """Open-circuit voltage (V); ``P_H2`` and ``P_O2`` in atm."""
    if T_fc <= 0:
        raise ValueError(f"temperature must be positive, got {T_fc}")
    if P_H2 <= 0 or P_O2 <= 0:
        raise ValueError(f"partial pressures must be positive, got P_H2={P_H2}, P_O2={P_O2}")
    return (
        _E_REF
        - 8.5e-4 * (T_fc - _T_REF)
        + 4.3085e-5 * T_fc * (math.log(P_H2) + 0.5 * math.log(P_O2))
    )


def activation_loss(
    T: float,
    alpha_ct: float,
    i: float,
    i0: float,
    R_univ: float = 8.314,
    F: float = 96485.0,
) -> float:
    """Tafel activation overvoltage.

    Below the exchange current density the Tafel form would go negative;
    the loss is clamped to zero there (see :attr:`VoltageBreakdown.act_clamped`).
    """
    if i <= 0:
        raise ValueError(f"current density must be positive, got {i}")
    if i < i0:
        return 0.0
    return R_univ * T / (2.0 * alpha_ct * F) * math.log(i / i0)


def ohmic_loss(I_fc: float, R_ohm_total: float) -> float:
    return I_fc * R_ohm_total


def concentration_loss(I_fc: float, m_mt: float, n_mt: float) -> float:
    return m_mt * math.exp(n_mt * I_fc)


def cell_voltage(
    params: ElectrochemParams,
    T_fc: float,
    P_H2: float,
    P_O2: float,
    I_fc: float,
    constants: PhysicalConstants | None = None,
) -> VoltageBreakdown:
    """Full voltage breakdown at stack current ``I_fc`` (A), pressures in atm.

    At ``I_fc == 0`` there is no activation loss (open circuit).
    """
    if I_fc < 0:
        raise ValueError(f"stack current must be >= 0, got {I_fc}")
    constants = constants or PhysicalConstants()
    E = nernst_voltage(T_fc, P_H2, P_O2)
    i = I_fc / params.A_eff
    if I_fc == 0:
        v_act, clamped = 0.0, False
    elif i <= 0.0:  # density underflowed for a denormal current
        v_act, clamped = 0.0, True
    else:
        clamped = i < params.i0
        v_act = activation_loss(T_fc, params.alpha_ct, i, params.i0, constants.R_univ, constants.F)
    v_ohm = ohmic_loss(I_fc, params.R_ohm / params.A_eff)
    v_conc = concentration_loss(I_fc, params.m_mt, params.n_mt)
    v_cell = E - v_act - v_ohm - v_conc
    return VoltageBreakdown(
        E_nernst=E,
        v_act=v_act,
        v_ohm=v_ohm,
        v_conc=v_conc,
        v_cell=v_cell,
        v_stack=params.N_cells * v_cell,
        act_clamped=clamped,
    )

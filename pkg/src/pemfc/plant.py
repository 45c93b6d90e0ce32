"""Six-state air-path model of the fuel cell system.

State ``x = [omega_cp, P_sm, m_sm, m_O2, m_N2, P_rm]`` (rad/s, Pa, kg, kg, kg, Pa),
control ``u = v_cm`` (compressor motor voltage, V) and measured disturbance
``d = I_fc`` (stack current, A).  The right-hand side is affine in both::

    dx/dt = f(x) + g*u + phi*d

with constant ``g`` (rotor row only) and ``phi`` (oxygen row only).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .electrochem import PA_PER_ATM, VoltageBreakdown, cell_voltage
from .params import (
    AuxiliaryParams,
    DerivedConstants,
    MapCoefficients,
    OperatingConditions,
    ParameterSet,
    PhysicalConstants,
    derived_constants,
)

__all__ = [
    "STATE_NAMES",
    "PlantState",
    "DerivedQuantities",
    "StateInvariantError",
    "motor_torque",
    "load_torque",
    "compressor_flow_poly",
    "compressor_flow",
    "compressor_exit_temperature",
    "supply_manifold_temperature",
    "cathode_pressure",
    "flow_splits",
    "cathode_outflows",
    "oxygen_reacted",
    "return_manifold_poly",
    "return_manifold_outflow",
    "Plant",
    "state_derivative",
]

STATE_NAMES = ("omega_cp", "P_sm", "m_sm", "m_O2", "m_N2", "P_rm")


class StateInvariantError(ValueError):
    """A state left the physical domain (negative mass, pressure or speed)."""


@dataclass(frozen=True)
class PlantState:
    omega_cp: float
    P_sm: float
    m_sm: float
    m_O2: float
    m_N2: float
    P_rm: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in STATE_NAMES], dtype=float)

    @classmethod
    def from_array(cls, x) -> "PlantState":
        return cls(*(float(v) for v in x))


@dataclass(frozen=True)
class DerivedQuantities:
    tau_cm: float
    tau_cp: float
    W_cp: float
    T_cp: float
    T_sm: float
    W_sm_out: float
    P_ca: float
    P_O2: float
    P_N2: float
    P_v_ca: float
    W_O2_in: float
    W_N2_in: float
    W_O2_out: float
    W_N2_out: float
    W_O2_reacted: float
    W_ca_out: float
    W_rm_out: float
    m_ca: float
    wcp_clamped: bool = False
    wrm_clamped: bool = False
    sm_reverse: bool = False
    ca_reverse: bool = False

    @property
    def flags(self) -> tuple[str, ...]:
        names = ("wcp_clamped", "wrm_clamped", "sm_reverse", "ca_reverse")
        return tuple(n for n in names if getattr(self, n))


# ------------------------------------------------------------- compressor

def motor_torque(v_cm: float, omega_cp: float, aux: AuxiliaryParams) -> float:
    return aux.eta_cm * (aux.k_t / aux.R_cm) * (v_cm - aux.k_v * omega_cp)


def load_torque(omega_cp: float, P_sm: float, maps: MapCoefficients) -> float:
    w = maps.torque_speed_scale * omega_cp
    p = maps.pressure_scale * P_sm
    poly = (
        maps.alpha_0
        + maps.alpha_1 * w
        + maps.alpha_00
        + w * (maps.alpha_10 + maps.alpha_20 * w + maps.alpha_11 * p)
        + p * (maps.alpha_01 + maps.alpha_02 * p)
    )
    return math.pi / 30.0 * poly


def compressor_flow_poly(omega_cp: float, P_sm: float, maps: MapCoefficients) -> float:
    """Unclamped compressor map value (kg/s); may be negative off the envelope."""
    w = maps.speed_scale * omega_cp
    p = maps.pressure_scale * P_sm
    poly = (
        maps.beta_00
        + p * (maps.beta_10 + maps.beta_20 * p)
        + w * (maps.beta_01 + maps.beta_11 * p + maps.beta_02 * w)
    )
    return maps.flow_scale * poly


def compressor_flow(omega_cp: float, P_sm: float, maps: MapCoefficients) -> float:
    """Compressor mass flow (kg/s), clamped at zero from below."""
    return max(compressor_flow_poly(omega_cp, P_sm, maps), 0.0)


def compressor_exit_temperature(
    P_sm: float,
    constants: PhysicalConstants,
    aux: AuxiliaryParams,
    T_atm: float = 298.15,
) -> float:
    ratio = P_sm / constants.P_atm
    if ratio <= 0:
        raise ValueError(f"pressure ratio must be positive, got {ratio}")
    g = constants.gamma
    return T_atm + T_atm / aux.eta_cp * (ratio ** ((g - 1.0) / g) - 1.0)


# ---------------------------------------------------------------- manifolds

def supply_manifold_temperature(
    P_sm: float, m_sm: float, p: ParameterSet, M_a_atm: float | None = None
) -> float:
    if m_sm < p.aux.mass_floor:
        raise StateInvariantError(f"supply manifold mass {m_sm} below floor {p.aux.mass_floor}")
    c = p.constants
    if M_a_atm is None:
        M_a_atm = c.X_O2 * c.M_O2 + (1.0 - c.X_O2) * c.M_N2
    return P_sm * p.aux.V_sm * M_a_atm / (c.R_univ * m_sm)


def cathode_pressure(
    m_O2: float,
    m_N2: float,
    P_v_ca: float,
    dc: DerivedConstants,
    form: str = "specific",
    constants: PhysicalConstants | None = None,
) -> tuple[float, float, float]:
    """Dalton sum ``(P_ca, P_O2, P_N2)`` in Pa.

    ``form="specific"`` uses ``P = c*m`` with specific gas constants.
    ``form="molar"`` reproduces the ``(m/M)*c`` reading, which carries an
    extra 1/M factor; it is kept only for comparison.
    """
    if form == "specific":
        P_O2 = dc.c2 * m_O2
        P_N2 = dc.c1 * m_N2
    elif form == "molar":
        constants = constants or PhysicalConstants()
        P_O2 = dc.c2 * m_O2 / constants.M_O2
        P_N2 = dc.c1 * m_N2 / constants.M_N2
    else:
        raise ValueError(f"unknown partial pressure form {form!r}")
    return P_v_ca + P_O2 + P_N2, P_O2, P_N2


def flow_splits(W_sm_out: float, dc: DerivedConstants) -> tuple[float, float]:
    dry = W_sm_out / (1.0 + dc.Omega_atm)
    return dc.y_O2 * dry, dc.y_N2 * dry


def cathode_outflows(
    m_O2: float,
    m_N2: float,
    P_ca: float,
    P_rm: float,
    dc: DerivedConstants,
    aux: AuxiliaryParams,
) -> tuple[float, float, float]:
    """``(W_ca_out, W_O2_out, W_N2_out)``; the vapor share of the exit flow is the rest."""
    m_ca = m_O2 + m_N2 + dc.c3
    W_ca_out = aux.K_ca_out * (P_ca - P_rm)
    return W_ca_out, m_O2 / m_ca * W_ca_out, m_N2 / m_ca * W_ca_out


def oxygen_reacted(I_fc: float, N_cells: int, constants: PhysicalConstants) -> float:
    return constants.M_O2 * N_cells * I_fc / (4.0 * constants.F)


def return_manifold_poly(P_rm: float, maps: MapCoefficients) -> float:
    """Unclamped return outflow (kg/s); orders 1..5 only, no constant term."""
    s = maps.pressure_scale * (maps.rm_reference_pressure - P_rm)
    return s * (maps.pa_1 + s * (maps.pa_2 + s * (maps.pa_3 + s * (maps.pa_4 + s * maps.pa_5))))


def return_manifold_outflow(P_rm: float, maps: MapCoefficients) -> float:
    if P_rm < 0:
        raise ValueError(f"return manifold pressure must be >= 0, got {P_rm}")
    return max(return_manifold_poly(P_rm, maps), 0.0)


# ---------------------------------------------------------------- assembly

class Plant:
    """Plant right-hand side bound to one parameter set and operating point.

    Instances are immutable in practice and safe to share between runs.
    """

    def __init__(self, p: ParameterSet, oc: OperatingConditions | None = None):
        if oc is not None and oc is not p.conditions:
            p = p.replace(conditions=oc)
        self.params = p
        self.dc = derived_constants(p)
        c, a = p.constants, p.aux
        self._T_atm = p.conditions.T_atm
        self._T_st = p.conditions.T_st
        self._k_sm = c.gamma * c.R_univ / (self.dc.M_a_atm * a.V_sm)
        self._k_rm = c.R_a * self._T_st / a.V_rm
        self.input_gain = np.array(
            [a.eta_cm * a.k_t / (a.J_cp * a.R_cm), 0.0, 0.0, 0.0, 0.0, 0.0]
        )
        self.disturbance_gain = np.array(
            [0.0, 0.0, 0.0, -p.electrochem.N_cells * c.M_O2 / (4.0 * c.F), 0.0, 0.0]
        )

    # The pieces are evaluated through the public component functions so
    # that the assembled model and its parts cannot drift apart.
    def _core(self, x, u: float, d: float):
        p, dc = self.params, self.dc
        c, a, maps = p.constants, p.aux, p.maps
        omega, P_sm, m_sm, m_O2, m_N2, P_rm = (float(v) for v in x)

        tau_cm = motor_torque(u, omega, a)
        tau_cp = load_torque(omega, P_sm, maps)
        W_cp_raw = compressor_flow_poly(omega, P_sm, maps)
        W_cp = max(W_cp_raw, 0.0)
        T_cp = compressor_exit_temperature(P_sm, c, a, self._T_atm)
        T_sm = supply_manifold_temperature(P_sm, m_sm, p, dc.M_a_atm)

        P_ca, P_O2, P_N2 = cathode_pressure(m_O2, m_N2, dc.P_v_ca, dc)
        W_sm = a.K_sm_out * (P_sm - P_ca)
        W_O2_in, W_N2_in = flow_splits(W_sm, dc)
        W_ca, W_O2_out, W_N2_out = cathode_outflows(m_O2, m_N2, P_ca, P_rm, dc, a)
        W_react = oxygen_reacted(d, p.electrochem.N_cells, c)
        W_rm_raw = return_manifold_poly(P_rm, maps)
        W_rm = max(W_rm_raw, 0.0)

        rates = (
            (tau_cm - tau_cp) / a.J_cp,
            self._k_sm * (W_cp * T_cp - W_sm * T_sm),
            W_cp - W_sm,
            W_O2_in - W_O2_out - W_react,
            W_N2_in - W_N2_out,
            self._k_rm * (W_ca - W_rm),
        )
        extras = (
            tau_cm, tau_cp, W_cp, T_cp, T_sm, W_sm, P_ca, P_O2, P_N2, W_O2_in, W_N2_in,
            W_O2_out, W_N2_out, W_react, W_ca, W_rm, m_O2 + m_N2 + dc.c3,
            W_cp_raw < 0, W_rm_raw < 0, W_sm < 0, W_ca < 0,
        )
        return rates, extras

    def rates(self, x, u: float, d: float) -> np.ndarray:
        return np.array(self._core(x, u, d)[0])

    __call__ = rates

    def evaluate(self, x, u: float, d: float) -> tuple[np.ndarray, DerivedQuantities]:
        rates, e = self._core(x, u, d)
        q = DerivedQuantities(
            tau_cm=e[0], tau_cp=e[1], W_cp=e[2], T_cp=e[3], T_sm=e[4], W_sm_out=e[5],
            P_ca=e[6], P_O2=e[7], P_N2=e[8], P_v_ca=self.dc.P_v_ca, W_O2_in=e[9],
            W_N2_in=e[10], W_O2_out=e[11], W_N2_out=e[12], W_O2_reacted=e[13],
            W_ca_out=e[14], W_rm_out=e[15], m_ca=e[16], wcp_clamped=e[17],
            wrm_clamped=e[18], sm_reverse=e[19], ca_reverse=e[20],
        )
        return np.array(rates), q

    def is_valid(self, x) -> bool:
        omega, P_sm, m_sm, m_O2, m_N2, P_rm = (float(v) for v in x)
        # NaN fails every comparison; the sum catches infinities
        return (
            omega >= 0.0
            and P_sm > 0.0
            and m_sm > 0.0
            and m_O2 > 0.0
            and m_N2 > 0.0
            and P_rm > 0.0
            and math.isfinite(omega + P_sm + m_sm + m_O2 + m_N2 + P_rm)
        )

    def voltage(self, x, I_fc: float) -> VoltageBreakdown:
        """Cell voltage with cathode oxygen pressure taken from the state."""
        p = self.params
        P_O2 = self.dc.c2 * float(x[3])
        return cell_voltage(
            p.electrochem, self._T_st, p.conditions.P_an / PA_PER_ATM, P_O2 / PA_PER_ATM,
            I_fc, p.constants,
        )

    def ambient_state(self) -> np.ndarray:
        """Everything at ambient pressure and temperature, rotor at rest.

        The cathode holds the stack vapor pressure plus dry air making up
        the balance to ambient.
        """
        p, dc = self.params, self.dc
        c = p.constants
        P = c.P_atm
        m_sm = P * p.aux.V_sm * dc.M_a_atm / (c.R_univ * self._T_atm)
        dry = max(P - dc.P_v_ca, 1e-3 * P)
        return np.array([0.0, P, m_sm, c.X_O2 * dry / dc.c2, (1 - c.X_O2) * dry / dc.c1, P])

    def nominal_scale(self) -> np.ndarray:
        """Per-component magnitudes used to scale norms and tolerances."""
        s = self.ambient_state()
        s[0] = 100.0
        return s

    def _rotor_speed(self, u: float, P_sm: float) -> float:
        a, maps = self.params.aux, self.params.maps
        lo, hi = 0.0, max(u / a.k_v, 1.0) * 2.0 + 10.0
        f = lambda w: motor_torque(u, w, a) - load_torque(w, P_sm, maps)
        if f(lo) <= 0:
            return 0.0
        while f(hi) > 0 and hi < 1e7:
            hi *= 2.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if f(mid) > 0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def _rm_pressure_for(self, W: float) -> float:
        maps = self.params.maps
        lo = maps.rm_reference_pressure
        hi = lo + 1e5
        while return_manifold_outflow(hi, maps) < W and hi < lo + 1e8:
            hi += 1e5
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if return_manifold_outflow(mid, maps) < W:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def _chain(self, u: float, d: float, P_sm: float):
        """Walk the air path downstream for an assumed supply pressure.

        Returns the implied supply pressure and the matching state.
        """
        p, dc = self.params, self.dc
        c, a = p.constants, p.aux
        omega = self._rotor_speed(u, P_sm)
        W = max(compressor_flow(omega, P_sm, p.maps), 1e-12)
        W_dry = W / (1.0 + dc.Omega_atm)
        r = oxygen_reacted(d, p.electrochem.N_cells, c)
        n_O2 = max(dc.y_O2 * W_dry - r, 0.02 * dc.y_O2 * W_dry) / c.M_O2
        n_N2 = dc.y_N2 * W_dry / c.M_N2
        W_out = max(W_dry - r, 0.05 * W_dry)
        P_rm = self._rm_pressure_for(W_out)
        P_ca = P_rm + W_out / a.K_ca_out
        dry = max(P_ca - dc.P_v_ca, 0.05 * P_ca)
        P_O2 = dry * n_O2 / (n_O2 + n_N2)
        P_N2 = dry - P_O2
        P_sm_implied = P_ca + W / a.K_sm_out
        T_cp = compressor_exit_temperature(P_sm, c, a, self._T_atm)
        m_sm = P_sm * a.V_sm * dc.M_a_atm / (c.R_univ * T_cp)
        return P_sm_implied, np.array([omega, P_sm, m_sm, P_O2 / dc.c2, P_N2 / dc.c1, P_rm])

    def initial_guess(self, u: float, d: float, iterations: int = 60) -> np.ndarray:
        """Cheap approximate equilibrium for ``(u, d)``, good enough to start Newton.

        Bisects on the supply pressure until the downstream chain is
        self-consistent; vapor in the exit flow is ignored.
        """
        lo = self.params.maps.rm_reference_pressure
        hi = 2.0 * lo
        while self._chain(u, d, hi)[0] > hi and hi < 1e8:
            hi *= 2.0
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            if self._chain(u, d, mid)[0] > mid:
                lo = mid
            else:
                hi = mid
        return self._chain(u, d, 0.5 * (lo + hi))[1]


def state_derivative(
    x,
    u: float,
    d: float,
    p: ParameterSet,
    oc: OperatingConditions | None = None,
) -> tuple[np.ndarray, DerivedQuantities]:
    """Time derivative of the state and every intermediate quantity.

    Convenience wrapper; loops should build a :class:`Plant` once.
    """
    if isinstance(x, PlantState):
        x = x.as_array()
    return Plant(p, oc).evaluate(x, u, d)

"""Model parameters, their defaults, validation, and derived constants.

Everything is SI internally (Pa, kg, K, rad/s, J, s).  Electrochemical areas
stay in cm² because the exchange current density and area-specific
resistance are conventionally quoted per cm².
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .config import (
    ConfigError,
    Entry,
    ParseError,
    ValidationError,
    convert_unit,
    format_value,
    parse_file,
    parse_text,
)

__all__ = [
    "PhysicalConstants",
    "AuxiliaryParams",
    "ElectrochemParams",
    "MapCoefficients",
    "OperatingConditions",
    "ParameterSet",
    "DerivedConstants",
    "SECTIONS",
    "load_parameters",
    "parameters_from_entries",
    "apply_entries",
    "derived_constants",
    "saturation_pressure",
    "dump_parameters",
    "dump_defaults",
    "parameter_hash",
]


def _f(default, unit: str, doc: str, note: str | None = None):
    meta = {"unit": unit, "doc": doc}
    if note:
        meta["note"] = note
    return field(default=default, metadata=meta)


CALIBRATED = "calibrated default; no published value"


@dataclass(frozen=True)
class PhysicalConstants:
    P_atm: float = _f(101325.0, "Pa", "atmospheric pressure")
    phi_atm: float = _f(0.5, "-", "ambient relative humidity")
    P_sat_Tatm: float = _f(3140.4, "Pa", "water saturation pressure at T_atm")
    gamma: float = _f(1.4, "-", "air specific-heat ratio")
    C_p: float = _f(1004.0, "J/kg/K", "specific heat of air (stored, unused)")
    R_a: float = _f(286.9, "J/kg/K", "air gas constant")
    R_O2: float = _f(259.8, "J/kg/K", "oxygen gas constant")
    R_N2: float = _f(296.8, "J/kg/K", "nitrogen gas constant")
    R_v: float = _f(461.5, "J/kg/K", "vapor gas constant")
    R_univ: float = _f(8.314, "J/mol/K", "universal gas constant")
    F: float = _f(96485.0, "C/mol", "Faraday constant")
    M_a: float = _f(28.97e-3, "kg/mol", "molar mass of (humid) air, humidity ratio only")
    M_O2: float = _f(32e-3, "kg/mol", "molar mass of oxygen")
    M_N2: float = _f(28e-3, "kg/mol", "molar mass of nitrogen")
    M_v: float = _f(18.02e-3, "kg/mol", "molar mass of water vapor")
    X_O2: float = _f(0.21, "-", "oxygen mole fraction in dry air")
    psat_correlation: str = _f(
        "log-quadratic", "-", "saturation-pressure model: log-quadratic | constant"
    )


@dataclass(frozen=True)
class AuxiliaryParams:
    k_t: float = _f(0.0153, "N*m/A", "motor torque constant")
    R_cm: float = _f(0.82, "ohm", "motor winding resistance")
    k_v: float = _f(0.0153, "V*s/rad", "motor back-EMF constant")
    eta_cp: float = _f(0.8, "-", "compressor efficiency")
    eta_cm: float = _f(0.98, "-", "motor mechanical efficiency")
    J_cp: float = _f(5e-5, "kg*m^2", "compressor and motor inertia")
    V_sm: float = _f(0.02, "m^3", "supply manifold volume")
    V_ca: float = _f(0.005, "m^3", "cathode volume")
    V_rm: float = _f(0.005, "m^3", "return manifold volume")
    K_sm_out: float = _f(0.3629e-5, "kg/s/Pa", "supply manifold outlet orifice constant")
    K_ca_out: float = _f(0.2177e-5, "kg/s/Pa", "cathode outlet orifice constant")
    y_O2_in: float = _f(0.21, "-", "oxygen mole fraction at cathode inlet (stored, unused)")
    d_c: float = _f(0.2286, "m", "compressor diameter (stored, unused)")
    mass_floor: float = _f(1e-9, "kg", "smallest supply-manifold mass accepted")


@dataclass(frozen=True)
class ElectrochemParams:
    N_cells: int = _f(1, "-", "cells in series")
    delta_G: float = _f(237340.0, "J/mol", "Gibbs free energy magnitude")
    n_e: int = _f(2, "-", "electrons per reaction")
    alpha_ct: float = _f(0.5, "-", "charge transfer coefficient", CALIBRATED)
    i0: float = _f(1e-5, "A/cm^2", "exchange current density", CALIBRATED)
    A_eff: float = _f(25.0, "cm^2", "effective cell area")
    R_ohm: float = _f(0.25, "ohm*cm^2", "area-specific resistance", CALIBRATED)
    m_mt: float = _f(1e-4, "V", "mass-transfer voltage amplitude", CALIBRATED)
    n_mt: float = _f(0.4, "1/A", "mass-transfer exponent coefficient", CALIBRATED)


@dataclass(frozen=True)
class MapCoefficients:
    """Fitted compressor and return-manifold polynomials.

    Load torque (N*m), with w = torque_speed_scale*omega, p = pressure_scale*P_sm::

        pi/30 * (a0 + a1*w + a00 + a10*w + a20*w^2 + a01*p + a11*p*w + a02*p^2)

    Compressor flow (kg/s), with w = speed_scale*omega::

        flow_scale * (b00 + b10*p + b20*p^2 + b01*w + b11*p*w + b02*w^2)

    Return-manifold outflow (kg/s), with s = pressure_scale*(rm_reference_pressure - P_rm)::

        sum(pa_i * s^i for i in 1..5)
    """

    alpha_0: float = _f(0.0, "-", "load torque: bare constant")
    alpha_1: float = _f(0.0, "-", "load torque: bare linear speed term")
    alpha_00: float = _f(0.0, "-", "load torque: constant")
    alpha_10: float = _f(0.0058, "-", "load torque: speed")
    alpha_20: float = _f(-0.0013, "-", "load torque: speed^2")
    alpha_01: float = _f(3.25e-6, "-", "load torque: pressure (alternate listing 4.1e-4)")
    alpha_11: float = _f(-2.80e-6, "-", "load torque: pressure*speed (alternate listing 3.92e-6)")
    alpha_02: float = _f(-1.37e-9, "-", "load torque: pressure^2")
    beta_00: float = _f(4.83e-5, "-", "compressor flow: constant")
    beta_10: float = _f(-5.42e-5, "-", "compressor flow: pressure")
    beta_20: float = _f(8.79e-6, "-", "compressor flow: pressure^2")
    beta_01: float = _f(3.49e-7, "-", "compressor flow: speed")
    beta_11: float = _f(3.55e-13, "-", "compressor flow: pressure*speed")
    beta_02: float = _f(-4.11e-10, "-", "compressor flow: speed^2")
    pa_0: float = _f(1.248e-3, "-", "return outflow: constant (not used by the sum)")
    pa_1: float = _f(-1.96e-3, "-", "return outflow: order 1")
    pa_2: float = _f(-1.52e-3, "-", "return outflow: order 2")
    pa_3: float = _f(-2.12e-3, "-", "return outflow: order 3")
    pa_4: float = _f(-27.7e-3, "-", "return outflow: order 4")
    pa_5: float = _f(-78e-3, "-", "return outflow: order 5")
    speed_scale: float = _f(1.0, "-", "flow map speed multiplier (rad/s -> map units)")
    pressure_scale: float = _f(1e-5, "-", "map pressure multiplier (Pa -> bar)")
    torque_speed_scale: float = _f(
        30.0 / (1000.0 * math.pi), "-", "torque map speed multiplier (rad/s -> krpm)", CALIBRATED
    )
    flow_scale: float = _f(200.0, "-", "flow map output multiplier", CALIBRATED)
    rm_reference_pressure: float = _f(
        101325.0, "Pa", "discharge reference pressure of the return outflow map"
    )

    @property
    def alpha_tau(self) -> tuple[float, ...]:
        return (
            self.alpha_0,
            self.alpha_1,
            self.alpha_00,
            self.alpha_10,
            self.alpha_20,
            self.alpha_01,
            self.alpha_11,
            self.alpha_02,
        )

    @property
    def beta_W(self) -> tuple[float, ...]:
        return (self.beta_00, self.beta_10, self.beta_20, self.beta_01, self.beta_11, self.beta_02)

    @property
    def pa(self) -> tuple[float, ...]:
        return (self.pa_0, self.pa_1, self.pa_2, self.pa_3, self.pa_4, self.pa_5)


@dataclass(frozen=True)
class OperatingConditions:
    T_st: float = _f(333.15, "K", "stack temperature")
    T_atm: float = _f(298.15, "K", "ambient temperature")
    phi_ca_in: float = _f(0.75, "-", "cathode inlet relative humidity")
    phi_ca: float = _f(0.75, "-", "cathode relative humidity")
    P_an: float = _f(1e5, "Pa", "anode hydrogen pressure (held constant)")
    P_O2_polarization: float = _f(1e5, "Pa", "cathode oxygen pressure for static curves")


@dataclass(frozen=True)
class ParameterSet:
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    aux: AuxiliaryParams = field(default_factory=AuxiliaryParams)
    electrochem: ElectrochemParams = field(default_factory=ElectrochemParams)
    maps: MapCoefficients = field(default_factory=MapCoefficients)
    conditions: OperatingConditions = field(default_factory=OperatingConditions)

    def replace(self, **sections) -> "ParameterSet":
        return dataclasses.replace(self, **sections)

    def with_values(self, values: Mapping[str, object]) -> "ParameterSet":
        """Return a copy with ``{"section.key": value}`` replaced and revalidated."""
        grouped: dict[str, dict[str, object]] = {}
        for name, value in values.items():
            section, key = _split(name)
            grouped.setdefault(section, {})[key] = value
        updates = {
            s: dataclasses.replace(getattr(self, s), **kv) for s, kv in grouped.items()
        }
        out = dataclasses.replace(self, **updates)
        validate(out)
        return out


SECTIONS: dict[str, type] = {
    "constants": PhysicalConstants,
    "aux": AuxiliaryParams,
    "electrochem": ElectrochemParams,
    "maps": MapCoefficients,
    "conditions": OperatingConditions,
}


def _split(name: str) -> tuple[str, str]:
    section, _, key = name.partition(".")
    cls = SECTIONS.get(section)
    if cls is None or key not in {f.name for f in dataclasses.fields(cls)}:
        raise ConfigError(f"unknown key {name!r}")
    return section, key


# ---------------------------------------------------------------- validation

def _require(cond: bool, name: str, msg: str) -> None:
    if not cond:
        raise ValidationError(name, msg)


def validate(p: ParameterSet) -> None:
    """Raise :class:`ValidationError` naming the first violated invariant."""
    c = p.constants
    for k in ("P_atm", "P_sat_Tatm", "C_p", "R_a", "R_O2", "R_N2", "R_v", "R_univ", "F",
              "M_a", "M_O2", "M_N2", "M_v"):
        _require(getattr(c, k) > 0, f"constants.{k}", "must be > 0")
    _require(c.gamma > 1, "constants.gamma", "must be > 1")
    _require(0 <= c.phi_atm <= 1, "constants.phi_atm", "must lie in [0, 1]")
    _require(0 < c.X_O2 < 1, "constants.X_O2", "must lie in (0, 1)")
    _require(c.phi_atm * c.P_sat_Tatm < c.P_atm, "constants.phi_atm",
             "ambient vapor pressure must stay below P_atm")
    for gas, M in (("R_O2", c.M_O2), ("R_N2", c.M_N2), ("R_v", c.M_v)):
        R = getattr(c, gas)
        _require(abs(c.R_univ / M - R) / R < 0.01, f"constants.{gas}",
                 f"inconsistent with R_univ/M ({c.R_univ / M:.4g}) by more than 1%")
    _require(c.psat_correlation in _PSAT_MODELS, "constants.psat_correlation",
             f"must be one of {sorted(_PSAT_MODELS)}")

    a = p.aux
    for f_ in dataclasses.fields(a):
        _require(getattr(a, f_.name) > 0, f"aux.{f_.name}", "must be > 0")
    _require(a.eta_cp <= 1, "aux.eta_cp", "efficiency must be <= 1")
    _require(a.eta_cm <= 1, "aux.eta_cm", "efficiency must be <= 1")

    e = p.electrochem
    _require(isinstance(e.N_cells, int) and e.N_cells >= 1, "electrochem.N_cells",
             "must be an integer >= 1")
    _require(isinstance(e.n_e, int) and e.n_e >= 1, "electrochem.n_e", "must be an integer >= 1")
    _require(e.delta_G >= 0, "electrochem.delta_G", "must be >= 0")
    _require(e.alpha_ct > 0, "electrochem.alpha_ct", "must be > 0")
    _require(e.i0 > 0, "electrochem.i0", "must be > 0")
    _require(e.A_eff > 0, "electrochem.A_eff", "must be > 0")
    _require(e.R_ohm >= 0, "electrochem.R_ohm", "must be >= 0")
    _require(e.m_mt >= 0, "electrochem.m_mt", "must be >= 0")

    m = p.maps
    for k in ("speed_scale", "pressure_scale", "torque_speed_scale", "flow_scale",
              "rm_reference_pressure"):
        _require(getattr(m, k) > 0, f"maps.{k}", "must be > 0")
    for f_ in dataclasses.fields(m):
        _require(math.isfinite(getattr(m, f_.name)), f"maps.{f_.name}", "must be finite")

    o = p.conditions
    _require(o.T_st > 0, "conditions.T_st", "must be > 0 K")
    _require(o.T_atm > 0, "conditions.T_atm", "must be > 0 K")
    for k in ("phi_ca_in", "phi_ca"):
        _require(0 <= getattr(o, k) <= 1, f"conditions.{k}", "must lie in [0, 1]")
    _require(o.P_an > 0, "conditions.P_an", "must be > 0")
    _require(o.P_O2_polarization > 0, "conditions.P_O2_polarization", "must be > 0")


# ------------------------------------------------------------------- loading

def _coerce(entry: Entry, f_: dataclasses.Field):
    raw = entry.raw.strip()
    name = entry.name
    if f_.type in ("str", str):
        if entry.unit is not None:
            raise ValidationError(name, "takes no unit")
        return raw
    try:
        if f_.type in ("int", int):
            value = int(raw)
        else:
            value = float(raw)
    except ValueError:
        raise ParseError(
            f"{entry.source}:{entry.line}: {name} expects a number, got {raw!r}"
        ) from None
    if f_.type in ("int", int):
        if entry.unit not in (None, "-"):
            raise ValidationError(name, f"unit [{entry.unit}] given for a count")
        return value
    return convert_unit(value, entry.unit, f_.metadata["unit"], name)


def apply_entries(p: ParameterSet, entries: Iterable[Entry]) -> ParameterSet:
    """Layer parsed entries over ``p``; unknown keys are an error."""
    values: dict[str, object] = {}
    for entry in entries:
        if entry.section not in SECTIONS:
            raise ConfigError(
                f"{entry.source}:{entry.line}: unknown section {entry.section!r} in {entry.name}"
            )
        fields_ = {f_.name: f_ for f_ in dataclasses.fields(SECTIONS[entry.section])}
        if entry.key not in fields_:
            raise ConfigError(f"{entry.source}:{entry.line}: unknown key {entry.name!r}")
        values[entry.name] = _coerce(entry, fields_[entry.key])
    if not values:
        validate(p)
        return p
    return p.with_values(values)


def parameters_from_entries(entries: Iterable[Entry]) -> ParameterSet:
    return apply_entries(ParameterSet(), entries)


def load_parameters(path: str | Path | None = None, overrides: Iterable[Entry] = ()) -> ParameterSet:
    """Load a parameter file; omitted keys keep their defaults.

    ``overrides`` are applied after the file, so they win on collision.
    """
    entries = list(parse_file(path).values()) if path is not None else []
    entries.extend(overrides)
    return parameters_from_entries(entries)


def dump_parameters(p: ParameterSet, header: str | None = None) -> str:
    """Serialize every key; reloading the text reproduces ``p`` exactly."""
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
        lines.append("")
    for section, cls in SECTIONS.items():
        lines.append(f"# --- {section}")
        obj = getattr(p, section)
        for f_ in dataclasses.fields(cls):
            unit = f_.metadata["unit"]
            value = format_value(getattr(obj, f_.name))
            unit_part = "" if f_.type in ("str", str, "int", int) else f" [{unit}]"
            comment = f_.metadata["doc"]
            if "note" in f_.metadata:
                comment += f"; {f_.metadata['note']}"
            lines.append(f"{section}.{f_.name} = {value}{unit_part}  # {comment}")
        lines.append("")
    return "\n".join(lines)


def dump_defaults() -> str:
    return dump_parameters(
        ParameterSet(),
        header="PEM fuel cell system model: default parameters (SI units).\n"
        "Grammar: section.key = value [unit]; unknown keys are rejected.",
    )


def parameter_hash(p: ParameterSet) -> str:
    import hashlib

    return hashlib.sha256(dump_parameters(p).encode("utf-8")).hexdigest()


# ------------------------------------------------------ saturation pressure

# saturated water (t in degC, P in Pa): 25 C anchored to the ambient table value
_PSAT_ANCHORS = ((25.0, 3140.4), (60.0, 19946.0), (100.0, 101325.0))


def _log_quadratic_coeffs():
    (t1, p1), (t2, p2), (t3, p3) = _PSAT_ANCHORS
    y1, y2, y3 = math.log(p1), math.log(p2), math.log(p3)
    # divided differences
    d12 = (y2 - y1) / (t2 - t1)
    d23 = (y3 - y2) / (t3 - t2)
    c = (d23 - d12) / (t3 - t1)
    b = d12 - c * (t1 + t2)
    a = y1 - b * t1 - c * t1 * t1
    return a, b, c


_PSAT_A, _PSAT_B, _PSAT_C = _log_quadratic_coeffs()


def _psat_log_quadratic(T: float, constants: PhysicalConstants) -> float:
    t = T - 273.15
    return math.exp(_PSAT_A + _PSAT_B * t + _PSAT_C * t * t)


def _psat_constant(T: float, constants: PhysicalConstants) -> float:
    return constants.P_sat_Tatm


_PSAT_MODELS = {"log-quadratic": _psat_log_quadratic, "constant": _psat_constant}


def saturation_pressure(T: float, constants: PhysicalConstants | None = None) -> float:
    """Water vapor saturation pressure (Pa) at temperature ``T`` (K)."""
    if T <= 0:
        raise ValueError(f"temperature must be positive, got {T}")
    constants = constants or PhysicalConstants()
    return _PSAT_MODELS[constants.psat_correlation](T, constants)


# --------------------------------------------------------- derived constants

@dataclass(frozen=True)
class DerivedConstants:
    c1: float  # N2 mass -> partial pressure (Pa/kg)
    c2: float  # O2 mass -> partial pressure (Pa/kg)
    c3: float  # cathode vapor mass (kg)
    M_a_atm: float
    y_O2: float
    y_N2: float
    Omega_atm: float
    P_sat_st: float
    P_v_ca: float


def derived_constants(p: ParameterSet, oc: OperatingConditions | None = None) -> DerivedConstants:
    oc = oc or p.conditions
    c, a = p.constants, p.aux
    M_a_atm = c.X_O2 * c.M_O2 + (1.0 - c.X_O2) * c.M_N2
    y_O2 = c.X_O2 * c.M_O2 / M_a_atm
    # the complement keeps y_O2 + y_N2 == 1 exactly
    y_N2 = 1.0 - y_O2
    vap = c.phi_atm * c.P_sat_Tatm / c.P_atm
    Omega_atm = (c.M_v / c.M_a) * vap / (1.0 - vap)
    P_sat_st = saturation_pressure(oc.T_st, c)
    P_v_ca = oc.phi_ca * P_sat_st
    return DerivedConstants(
        c1=c.R_N2 * oc.T_st / a.V_ca,
        c2=c.R_O2 * oc.T_st / a.V_ca,
        c3=a.V_ca * P_v_ca * c.M_v / (c.R_univ * oc.T_st),
        M_a_atm=M_a_atm,
        y_O2=y_O2,
        y_N2=y_N2,
        Omega_atm=Omega_atm,
        P_sat_st=P_sat_st,
        P_v_ca=P_v_ca,
    )

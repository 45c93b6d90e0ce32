"""Declarative polarization experiments and their CSV / plot outputs.

A scenario is a key/value file: ``experiment.*`` keys describe the run,
any other section (usually ``conditions.*``) overrides parameters for it.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .config import ConfigError, Entry, ParseError, ValidationError, convert_unit, parse_file
from .electrochem import PA_PER_ATM, VoltageBreakdown, cell_voltage
from .params import OperatingConditions, ParameterSet, apply_entries
from .plant import DerivedQuantities, Plant, PlantState
from .sim import (
    IntegratorConfig,
    Trajectory,
    find_steady_state,
    integrate,
    staircase_profile,
)

__all__ = [
    "SLPM_AIR_KG_S",
    "KINDS",
    "ExperimentSpec",
    "PolarizationRecord",
    "load_scenario",
    "scenario_from_entries",
    "spec_parameters",
    "run_polarization",
    "run_sweep",
    "run_transient",
    "flow_to_kg_s",
    "max_voltage_spread",
    "csv_columns",
    "emit_csv",
    "emit_trajectory_csv",
    "emit_plot_script",
]

log = logging.getLogger(__name__)

# ideal-gas dry air (M = 28.97 g/mol) at 1 atm, 25 degC: kg/s per standard L/min
SLPM_AIR_KG_S = 101325.0 * 28.97e-3 / (8.314462618 * 298.15) * 1e-3 / 60.0

KINDS = ("polarization", "flow_sweep", "pressure_sweep", "temperature_sweep", "transient")
MODES = ("static", "dynamic")

_SWEEP_TARGET = {
    "pressure_sweep": ("conditions.P_O2_polarization", "Pa"),
    "temperature_sweep": ("conditions.T_st", "K"),
}

# dynamic-mode sanity envelope
_W_CP_RANGE = (0.0, 0.1)
_P_RANGE = (0.3e5, 3e5)


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    kind: str
    mode: str = "static"
    current_grid: tuple[float, ...] = ()
    swept_values: tuple[float, ...] = ()
    swept_unit: str = ""
    overrides: tuple[Entry, ...] = ()
    v_cm: float = 3.0
    marginality_threshold: float = 0.020
    level_duration: float = 5.0
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    output_path: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError("experiment.kind", f"must be one of {KINDS}")
        if self.mode not in MODES:
            raise ValidationError("experiment.mode", f"must be one of {MODES}")
        if not self.current_grid:
            raise ValidationError("experiment.current_grid", "must not be empty")
        if any(not math.isfinite(i) or i < 0 for i in self.current_grid):
            raise ValidationError("experiment.current_grid", "currents must be finite and >= 0")
        sweeping = self.kind.endswith("_sweep")
        if sweeping and not self.swept_values:
            raise ValidationError("experiment.swept_values", f"{self.kind} needs swept values")
        if not sweeping and self.swept_values:
            raise ValidationError("experiment.swept_values", f"{self.kind} takes no swept values")
        if self.kind == "pressure_sweep" and self.mode == "dynamic":
            raise ValidationError(
                "experiment.mode", "pressure sweeps need static mode (no back-pressure actuator)"
            )
        if self.kind == "transient" and self.mode != "dynamic":
            raise ValidationError("experiment.mode", "transient runs are dynamic")
        for v in self.swept_values:
            _check_swept(self.kind, v, self.swept_unit)
        if self.level_duration <= 0:
            raise ValidationError("experiment.level_duration", "must be > 0")
        if self.marginality_threshold <= 0:
            raise ValidationError("experiment.marginality_threshold", "must be > 0")

    @property
    def sweeping(self) -> bool:
        return self.kind.endswith("_sweep")


def _check_swept(kind: str, value: float, unit: str) -> None:
    name = "experiment.swept_values"
    if kind == "pressure_sweep":
        pa = convert_unit(value, unit, "Pa", name)
        if not 1e3 <= pa <= 1e7:
            raise ValidationError(name, f"pressure {value} {unit} outside 1 kPa .. 100 bar")
    elif kind == "temperature_sweep":
        k = convert_unit(value, unit, "K", name)
        if not 250.0 <= k <= 400.0:
            raise ValidationError(name, f"temperature {value} {unit} outside 250 .. 400 K")
    elif kind == "flow_sweep":
        w = flow_to_kg_s(value, unit)
        if not 0.0 < w <= _W_CP_RANGE[1]:
            raise ValidationError(name, f"flow {value} {unit} outside (0, 0.1] kg/s")


def flow_to_kg_s(value: float, unit: str) -> float:
    if unit == "kg/s":
        return value
    if unit == "Slpm":
        return value * SLPM_AIR_KG_S
    raise ValidationError("experiment.swept_values", f"flow unit must be kg/s or Slpm, got {unit!r}")


# ----------------------------------------------------------- scenario files

def _floats(entry: Entry) -> tuple[float, ...]:
    out: list[float] = []
    for part in entry.raw.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if ":" in part:
                start, stop, step = (float(v) for v in part.split(":"))
                if step <= 0:
                    raise ValueError
                n = int(math.floor((stop - start) / step + 1e-9))
                out.extend(start + k * step for k in range(n + 1))
            else:
                out.append(float(part))
        except ValueError:
            raise ParseError(
                f"{entry.source}:{entry.line}: {entry.name}: bad number list {entry.raw!r}"
            ) from None
    return tuple(out)


def _scalar(entry: Entry, canonical: str, extra: dict[str, float] | None = None) -> float:
    values = _floats(entry)
    if len(values) != 1:
        raise ParseError(f"{entry.source}:{entry.line}: {entry.name} expects one number")
    if extra and entry.unit in extra:
        return values[0] * extra[entry.unit]
    return convert_unit(values[0], entry.unit, canonical, entry.name)


_EXPERIMENT_KEYS = {
    "name", "kind", "mode", "current_grid", "swept_values", "v_cm", "marginality_threshold",
    "level_duration", "method", "dt", "rel_tol", "abs_tol", "dt_max", "record_stride",
    "output_path",
}


def scenario_from_entries(entries: dict[str, Entry], default_name: str = "scenario") -> ExperimentSpec:
    exp = {e.key: e for e in entries.values() if e.section == "experiment"}
    unknown = sorted(set(exp) - _EXPERIMENT_KEYS)
    if unknown:
        e = exp[unknown[0]]
        raise ConfigError(f"{e.source}:{e.line}: unknown key {e.name!r}")
    if "kind" not in exp:
        raise ValidationError("experiment.kind", "missing")
    kw: dict = {"name": exp["name"].raw.strip() if "name" in exp else default_name,
                "kind": exp["kind"].raw.strip()}
    if "mode" in exp:
        kw["mode"] = exp["mode"].raw.strip()
    if "current_grid" in exp:
        e = exp["current_grid"]
        if e.unit not in (None, "A"):
            raise ValidationError(e.name, "currents are given in [A]")
        kw["current_grid"] = tuple(sorted(_floats(e)))
    if "swept_values" in exp:
        e = exp["swept_values"]
        kw["swept_values"] = tuple(sorted(_floats(e)))
        kw["swept_unit"] = e.unit or _default_unit(kw["kind"])
    if "v_cm" in exp:
        kw["v_cm"] = _scalar(exp["v_cm"], "V")
    if "marginality_threshold" in exp:
        kw["marginality_threshold"] = _scalar(exp["marginality_threshold"], "V", {"mV": 1e-3})
    if "level_duration" in exp:
        kw["level_duration"] = _scalar(exp["level_duration"], "s")
    if "output_path" in exp:
        kw["output_path"] = exp["output_path"].raw.strip()
    icfg = {}
    if "method" in exp:
        icfg["method"] = exp["method"].raw.strip()
    for key in ("dt", "rel_tol", "abs_tol", "dt_max"):
        if key in exp:
            icfg[key] = _scalar(exp[key], "s" if key.startswith("dt") else "-")
    if "record_stride" in exp:
        icfg["record_stride"] = int(_scalar(exp["record_stride"], "-"))
    if icfg:
        try:
            kw["integrator"] = IntegratorConfig(**icfg)
        except ValueError as exc:
            raise ValidationError("experiment.method", str(exc)) from None
    kw["overrides"] = tuple(e for e in entries.values() if e.section != "experiment")
    return ExperimentSpec(**kw)


def _default_unit(kind: str) -> str:
    return {"pressure_sweep": "bar", "temperature_sweep": "K", "flow_sweep": "kg/s"}.get(kind, "")


def load_scenario(path: str | Path) -> ExperimentSpec:
    path = Path(path)
    return scenario_from_entries(parse_file(path), default_name=path.stem)


def spec_parameters(spec: ExperimentSpec, p: ParameterSet) -> ParameterSet:
    """Parameters with the scenario's non-experiment overrides applied."""
    return apply_entries(p, spec.overrides)


# ------------------------------------------------------------------ records

@dataclass(frozen=True)
class PolarizationRecord:
    sweep_value: float | None
    sweep_unit: str
    I_fc: float
    breakdown: VoltageBreakdown
    conditions: OperatingConditions
    x_star: PlantState | None = None
    q: DerivedQuantities | None = None
    converged: bool = True
    sane: bool = True
    v_cm: float | None = None

    @property
    def v_cell(self) -> float:
        return self.breakdown.v_cell


def _is_sane(q: DerivedQuantities, x: PlantState) -> bool:
    lo, hi = _P_RANGE
    return (
        _W_CP_RANGE[0] <= q.W_cp <= _W_CP_RANGE[1]
        and all(lo <= P <= hi for P in (x.P_sm, x.P_rm, q.P_ca))
    )


def _static_records(spec, p, sweep_value, sweep_unit):
    oc = p.conditions
    out = []
    for I in spec.current_grid:
        bd = cell_voltage(
            p.electrochem, oc.T_st, oc.P_an / PA_PER_ATM, oc.P_O2_polarization / PA_PER_ATM,
            I, p.constants,
        )
        out.append(PolarizationRecord(sweep_value, sweep_unit, I, bd, oc))
    return out


def _dynamic_records(spec, p, sweep_value, sweep_unit, v_cm):
    plant = Plant(p)
    out = []
    x_prev = None
    for I in spec.current_grid:
        guess = plant.initial_guess(v_cm, I)
        res = find_steady_state(guess, v_cm, I, plant)
        if not res.converged and x_prev is not None:
            retry = find_steady_state(x_prev, v_cm, I, plant)
            if retry.residual_norm < res.residual_norm:
                res = retry
        x = res.x_star.as_array()
        _, q = plant.evaluate(x, v_cm, I)
        if res.converged:
            x_prev = x
        else:
            log.warning("steady state not converged at I = %g A (residual %.3g)", I, res.residual_norm)
        out.append(
            PolarizationRecord(
                sweep_value, sweep_unit, I, plant.voltage(x, I), p.conditions, res.x_star, q,
                converged=res.converged, sane=_is_sane(q, res.x_star), v_cm=v_cm,
            )
        )
    return out


def run_polarization(
    spec: ExperimentSpec,
    p: ParameterSet,
    sweep_value: float | None = None,
    v_cm: float | None = None,
) -> list[PolarizationRecord]:
    """One polarization curve over ``spec.current_grid``.

    Static mode evaluates the voltage model at the scenario's pressures;
    dynamic mode solves the plant steady state at each current with
    ``v_cm`` held and reads the cathode oxygen pressure from it.  A point
    whose steady state does not converge is kept with ``converged=False``.
    """
    p = spec_parameters(spec, p)
    unit = spec.swept_unit if sweep_value is not None else ""
    if spec.mode == "static":
        return _static_records(spec, p, sweep_value, unit)
    return _dynamic_records(spec, p, sweep_value, unit, spec.v_cm if v_cm is None else v_cm)


def _secant_voltage(plant: Plant, target: float, I: float, v0: float, v1: float,
                    tol: float = 1e-9, max_iter: int = 40) -> tuple[float, bool]:
    def flow(v):
        res = find_steady_state(plant.initial_guess(v, I), v, I, plant)
        _, q = plant.evaluate(res.x_star.as_array(), v, I)
        return q.W_cp - target, res.converged

    f0, ok0 = flow(v0)
    f1, ok1 = flow(v1)
    for _ in range(max_iter):
        if ok1 and abs(f1) <= tol * target:
            return v1, True
        if f1 == f0:
            break
        v2 = v1 - f1 * (v1 - v0) / (f1 - f0)
        v2 = min(max(v2, 0.5 * v1), 2.0 * v1 + 1.0)
        v0, f0 = v1, f1
        v1 = v2
        f1, ok1 = flow(v1)
    return v1, False


def run_sweep(spec: ExperimentSpec, p: ParameterSet) -> list[tuple[float, list[PolarizationRecord]]]:
    """One polarization curve per swept value, in ascending swept order."""
    if not spec.sweeping:
        return [(math.nan, run_polarization(spec, p))]
    base = spec_parameters(spec, p)
    out = []
    v_prev = spec.v_cm
    for value in spec.swept_values:
        v_cm = None
        q = base
        if spec.kind in _SWEEP_TARGET:
            key, canonical = _SWEEP_TARGET[spec.kind]
            si = convert_unit(value, spec.swept_unit, canonical, "experiment.swept_values")
            q = base.with_values({key: si})
        elif spec.kind == "flow_sweep" and spec.mode == "dynamic":
            target = flow_to_kg_s(value, spec.swept_unit)
            plant = Plant(base)
            v_cm, ok = _secant_voltage(plant, target, spec.current_grid[0], v_prev, 1.1 * v_prev)
            if ok:
                v_prev = v_cm
            else:
                log.warning("could not reach flow %g %s (best v_cm %.4g V)", value, spec.swept_unit, v_cm)
        # overrides are already folded into q
        plain = dataclasses.replace(spec, overrides=())
        records = run_polarization(plain, q, sweep_value=value, v_cm=v_cm)
        if v_cm is not None and not ok:
            records = [dataclasses.replace(r, converged=False) for r in records]
        out.append((value, records))
    return out


def max_voltage_spread(curves: Sequence[tuple[float, list[PolarizationRecord]]]) -> float:
    """Largest pointwise cell-voltage spread across the curves of a sweep."""
    spread = 0.0
    for points in zip(*(recs for _, recs in curves)):
        volts = [r.v_cell for r in points]
        spread = max(spread, max(volts) - min(volts))
    return spread


def run_transient(spec: ExperimentSpec, p: ParameterSet) -> Trajectory:
    """Current staircase over ``spec.current_grid``, one level per ``level_duration``.

    Starts from the steady state at the first level.
    """
    p = spec_parameters(spec, p)
    plant = Plant(p)
    levels = [(spec.level_duration, I) for I in spec.current_grid]
    profile = staircase_profile(levels, spec.v_cm)
    I0 = spec.current_grid[0]
    res = find_steady_state(plant.initial_guess(spec.v_cm, I0), spec.v_cm, I0, plant)
    cfg = dataclasses.replace(spec.integrator, t_end=profile.t_end)
    return integrate(res.x_star, profile, cfg, plant)


# ---------------------------------------------------------------------- CSV

STATIC_COLUMNS = (
    "sweep_value", "sweep_unit", "I_fc_A", "v_cell_V", "E_nernst_V", "v_act_V", "v_ohm_V",
    "v_conc_V", "v_stack_V",
)
DYNAMIC_COLUMNS = STATIC_COLUMNS + (
    "omega_cp_rad_s", "P_sm_Pa", "m_sm_kg", "m_O2_kg", "m_N2_kg", "P_rm_Pa", "W_cp_kg_s",
    "P_ca_Pa", "converged_flag", "sanity_flag",
)


def csv_columns(dynamic: bool) -> tuple[str, ...]:
    return DYNAMIC_COLUMNS if dynamic else STATIC_COLUMNS


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float) and math.isnan(v):
        return ""
    return format(float(v), ".17g")


def _row(r: PolarizationRecord, dynamic: bool) -> list[str]:
    b = r.breakdown
    row = [_fmt(r.sweep_value), r.sweep_unit, _fmt(r.I_fc), _fmt(b.v_cell), _fmt(b.E_nernst),
           _fmt(b.v_act), _fmt(b.v_ohm), _fmt(b.v_conc), _fmt(b.v_stack)]
    if dynamic:
        x, q = r.x_star, r.q
        row += [_fmt(x.omega_cp), _fmt(x.P_sm), _fmt(x.m_sm), _fmt(x.m_O2), _fmt(x.m_N2),
                _fmt(x.P_rm), _fmt(q.W_cp), _fmt(q.P_ca), _fmt(r.converged), _fmt(r.sane)]
    return row


def _write(path: Path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def emit_csv(records: Iterable[PolarizationRecord], path: str | Path, dynamic: bool | None = None) -> Path:
    """Write records with a fixed column order; header only if empty."""
    records = list(records)
    if dynamic is None:
        dynamic = bool(records) and records[0].x_star is not None
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_columns(dynamic))
    for r in records:
        w.writerow(_row(r, dynamic))
    return _write(Path(path), buf.getvalue())


TRAJECTORY_COLUMNS = (
    "t_s", "v_cm_V", "I_fc_A", "omega_cp_rad_s", "P_sm_Pa", "m_sm_kg", "m_O2_kg", "m_N2_kg",
    "P_rm_Pa", "W_cp_kg_s", "W_sm_out_kg_s", "W_ca_out_kg_s", "W_rm_out_kg_s", "P_ca_Pa",
    "P_O2_Pa", "T_sm_K", "v_cell_V", "v_stack_V",
)


def emit_trajectory_csv(traj: Trajectory, path: str | Path) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_COLUMNS)
    for t, x, u, d, q, v in zip(traj.t, traj.x, traj.u, traj.d, traj.q, traj.v):
        w.writerow([_fmt(t), _fmt(u), _fmt(d), *(_fmt(xi) for xi in x), _fmt(q.W_cp),
                    _fmt(q.W_sm_out), _fmt(q.W_ca_out), _fmt(q.W_rm_out), _fmt(q.P_ca),
                    _fmt(q.P_O2), _fmt(q.T_sm), _fmt(v.v_cell), _fmt(v.v_stack)])
    return _write(Path(path), buf.getvalue())


_PLOT_TEMPLATE = '''#!/usr/bin/env python3
"""Voltage-current curves, one series per swept value. Generated file."""
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = Path(__file__).resolve().parent
CSV_FILES = {files}
OUTPUT = HERE / {png!r}


def series(path):
    curves = {{}}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["sweep_value"], row["sweep_unit"])
            curves.setdefault(key, []).append((float(row["I_fc_A"]), float(row["v_cell_V"])))
    return curves


def main():
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for name in CSV_FILES:
        path = Path(name) if Path(name).is_absolute() else HERE / name
        for (value, unit), pts in series(path).items():
            label = f"{{float(value):g}} {{unit}}" if value else path.stem
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", ms=3, label=label)
    ax.set_xlabel("Stack current (A)")
    ax.set_ylabel("Cell voltage (V)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(OUTPUT, dpi=150)
    print(OUTPUT)


if __name__ == "__main__":
    main()
'''


def emit_plot_script(csv_paths: Sequence[str | Path], path: str | Path) -> Path:
    """Write a standalone matplotlib script plotting the given CSVs.

    CSV paths are stored relative to the script's directory when possible.
    """
    path = Path(path)
    base = path.parent.resolve()
    names = []
    for c in csv_paths:
        c = Path(c)
        if not c.exists():
            raise FileNotFoundError(f"CSV not found: {c}")
        try:
            names.append(os.path.relpath(c.resolve(), base).replace(os.sep, "/"))
        except ValueError:
            names.append(str(c.resolve()))
    files = "[\n" + "".join(f"    {n!r},\n" for n in names) + "]"
    text = _PLOT_TEMPLATE.format(files=files, png=path.stem + ".png")
    return _write(path, text)

"""Command-line entry point: ``python -m pemfc <subcommand>``.

Parameter layering, lowest to highest precedence: built-in defaults,
``--config`` file, the scenario's non-experiment keys, ``--override``.
Every subcommand that writes files also writes a JSON manifest next to them.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import platform
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, Entry, parse_override, parse_text
from .harness import (
    ExperimentSpec,
    emit_csv,
    emit_plot_script,
    emit_trajectory_csv,
    max_voltage_spread,
    run_sweep,
    run_transient,
    scenario_from_entries,
    spec_parameters,
)
from .params import ParameterSet, apply_entries, dump_defaults, load_parameters, parameter_hash
from .plant import Plant, StateInvariantError
from .sim import IntegrationError, IntegratorConfig, Schedule, find_steady_state, integrate

log = logging.getLogger("pemfc")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class RunFailure(Exception):
    """Outputs were written but some point did not converge."""


# ------------------------------------------------------------------ inputs

def bundled_scenarios() -> list[str]:
    root = resources.files("pemfc") / "scenarios"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".cfg"))


def _read_scenario_text(ref: str) -> tuple[str, str]:
    """Return ``(text, label)`` for a scenario path or bundled name."""
    path = Path(ref)
    if path.is_file():
        return path.read_text(encoding="utf-8"), path.name
    name = ref if ref.endswith(".cfg") else ref + ".cfg"
    res = resources.files("pemfc") / "scenarios" / name
    if res.is_file():
        return res.read_text(encoding="utf-8"), name
    raise ConfigError(f"no scenario file or bundled scenario named {ref!r}")


def _load_scenario(ref: str, overrides: list[Entry]) -> tuple[ExperimentSpec, str, str]:
    text, label = _read_scenario_text(ref)
    entries = parse_text(text, source=label)
    for e in overrides:
        if e.section == "experiment":
            entries[e.name] = e
    spec = scenario_from_entries(entries, default_name=Path(label).stem)
    return spec, label, _sha256(text)


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _overrides(args) -> list[Entry]:
    return [parse_override(s) for s in args.override]


def _parameters(args, spec: ExperimentSpec | None, overrides: list[Entry]) -> ParameterSet:
    p = load_parameters(args.config)
    if spec is not None:
        p = spec_parameters(spec, p)
    return apply_entries(p, [e for e in overrides if e.section != "experiment"])


def _out_dir(args) -> Path:
    return Path(args.out) if args.out else Path(".")


def _manifest(args, command: str, p: ParameterSet, outputs: list[Path], extra: dict | None = None,
              scenario: tuple[str, str] | None = None) -> dict:
    inputs: dict = {"overrides": list(args.override)}
    if args.config:
        inputs["config"] = {"name": Path(args.config).name,
                            "sha256": _sha256(Path(args.config).read_text(encoding="utf-8"))}
    if scenario:
        inputs["scenario"] = {"name": scenario[0], "sha256": scenario[1]}
    m = {
        "command": command,
        "inputs": inputs,
        "parameter_hash": parameter_hash(p),
        "outputs": sorted(o.name for o in outputs),
        "versions": {
            "pemfc": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
    }
    if extra:
        m.update(extra)
    return m


def _write_manifest(out: Path, stem: str, manifest: dict) -> Path:
    path = out / f"{stem}.manifest.json"
    out.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def _value_tag(value: float, unit: str) -> str:
    tag = format(value, "g").replace("-", "m").replace(".", "p")
    return f"{tag}{unit.replace('/', '_per_')}" if unit else tag


# ------------------------------------------------------------- subcommands

def cmd_dump_defaults(args) -> int:
    sys.stdout.write(dump_defaults())
    return EXIT_OK


def cmd_validate(args) -> int:
    overrides = _overrides(args)
    spec = None
    if args.scenario:
        spec, _, _ = _load_scenario(args.scenario, overrides)
    p = _parameters(args, spec, overrides)
    print(f"ok  parameter_hash={parameter_hash(p)}")
    if spec is not None:
        print(f"ok  scenario={spec.name} kind={spec.kind} mode={spec.mode}")
    return EXIT_OK


def _sweep_common(args):
    overrides = _overrides(args)
    spec, label, digest = _load_scenario(args.scenario, overrides)
    if spec.kind == "transient":
        raise ConfigError(f"scenario {spec.name!r} is a transient; use 'simulate'")
    p = _parameters(args, spec, overrides)
    curves = run_sweep(dataclasses.replace(spec, overrides=()), p)
    return spec, p, curves, (label, digest)


def _finish(curves) -> None:
    bad = [(v, r.I_fc) for v, recs in curves for r in recs if not r.converged]
    if bad:
        raise RunFailure(f"{len(bad)} point(s) did not converge, first at value={bad[0][0]:g}, "
                         f"I={bad[0][1]:g} A")


def cmd_polarize(args) -> int:
    spec, p, curves, scen = _sweep_common(args)
    out = _out_dir(args)
    dynamic = spec.mode == "dynamic"
    csvs = []
    for value, recs in curves:
        stem = spec.name if not spec.sweeping else f"{spec.name}_{_value_tag(value, spec.swept_unit)}"
        csvs.append(emit_csv(recs, out / f"{stem}.csv", dynamic=dynamic))
    plot = emit_plot_script(csvs, out / f"plot_{spec.name}.py")
    extra = {"scenario": spec.name, "kind": spec.kind, "mode": spec.mode}
    if spec.sweeping:
        extra["max_voltage_spread_V"] = max_voltage_spread(curves)
    _write_manifest(out, spec.name, _manifest(args, "polarize", p, csvs + [plot], extra, scen))
    for c in csvs:
        log.info("wrote %s", c)
    _finish(curves)
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec, p, curves, scen = _sweep_common(args)
    out = _out_dir(args)
    records = [r for _, recs in curves for r in recs]
    csv_path = emit_csv(records, out / f"{spec.name}_sweep.csv", dynamic=spec.mode == "dynamic")
    plot = emit_plot_script([csv_path], out / f"plot_{spec.name}_sweep.py")
    spread = max_voltage_spread(curves)
    extra = {"scenario": spec.name, "kind": spec.kind, "mode": spec.mode,
             "max_voltage_spread_V": spread,
             "marginality_threshold_V": spec.marginality_threshold}
    _write_manifest(out, f"{spec.name}_sweep", _manifest(args, "sweep", p, [csv_path, plot], extra, scen))
    print(f"{spec.name}: {len(curves)} curve(s), max voltage spread {spread:.6g} V")
    _finish(curves)
    return EXIT_OK


def cmd_simulate(args) -> int:
    overrides = _overrides(args)
    out = _out_dir(args)
    if args.scenario:
        spec, label, digest = _load_scenario(args.scenario, overrides)
        if spec.kind != "transient":
            raise ConfigError(f"scenario {spec.name!r} is not a transient; use 'polarize' or 'sweep'")
        p = _parameters(args, spec, overrides)
        traj = run_transient(dataclasses.replace(spec, overrides=()), p)
        name, scen = spec.name, (label, digest)
    else:
        p = _parameters(args, None, overrides)
        plant = Plant(p)
        cfg = IntegratorConfig(method=args.method, t_end=args.t_end, dt=args.dt)
        x0 = find_steady_state(plant.initial_guess(args.v_cm, args.current), args.v_cm,
                               args.current, plant).x_star if args.start == "steady" \
            else plant.ambient_state()
        traj = integrate(x0, Schedule.constant(args.v_cm, args.current, args.t_end), cfg, plant)
        name, scen = "simulate", None
    path = emit_trajectory_csv(traj, out / f"{name}_trajectory.csv")
    extra = {"steps": traj.steps, "rejected_steps": traj.rejected,
             "reverse_flow_samples": traj.reverse_flow_samples}
    _write_manifest(out, f"{name}_trajectory", _manifest(args, "simulate", p, [path], extra, scen))
    log.info("wrote %s (%d samples)", path, len(traj))
    return EXIT_OK


def cmd_steady(args) -> int:
    overrides = _overrides(args)
    p = _parameters(args, None, overrides)
    plant = Plant(p)
    res = find_steady_state(plant.initial_guess(args.v_cm, args.current), args.v_cm,
                            args.current, plant)
    x = res.x_star.as_array()
    _, q = plant.evaluate(x, args.v_cm, args.current)
    v = plant.voltage(x, args.current)
    rows = [(name, getattr(res.x_star, name)) for name in res.x_star.__dataclass_fields__]
    rows += [("W_cp", q.W_cp), ("P_ca", q.P_ca), ("P_O2", q.P_O2), ("v_cell", v.v_cell),
             ("residual_norm", res.residual_norm), ("iterations", res.iterations)]
    for name, value in rows:
        print(f"{name} = {value!r}")
    print(f"method = {res.method}")
    print(f"converged = {res.converged}")
    if not res.converged:
        raise RunFailure(f"steady state did not converge (residual {res.residual_norm:.3g})")
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="parameter file (section.key = value [unit])")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="override one key, e.g. 'conditions.T_st=70 [degC]'; repeatable")
    common.add_argument("--out", help="output directory (default: current directory)")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="pemfc", description="PEM fuel cell system model")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("dump-defaults", parents=[common], help="print the default parameter file")

    p = sub.add_parser("validate", parents=[common], help="load and check config/scenario")
    p.add_argument("--scenario")

    for name, helptext in (("polarize", "one CSV per swept value"),
                           ("sweep", "one combined CSV for the whole sweep")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--scenario", required=True,
                       help="scenario path or bundled name: " + ", ".join(bundled_scenarios()))

    p = sub.add_parser("simulate", parents=[common], help="integrate the plant, write a trajectory")
    p.add_argument("--scenario", help="transient scenario; otherwise a constant-input run")
    p.add_argument("--v-cm", type=float, default=3.0, help="compressor voltage (V)")
    p.add_argument("--current", type=float, default=0.0, help="stack current (A)")
    p.add_argument("--t-end", type=float, default=10.0, help="duration (s)")
    p.add_argument("--dt", type=float, default=1e-3, help="step for rk4-fixed (s)")
    p.add_argument("--method", choices=("rk45-adaptive", "rk4-fixed"), default="rk45-adaptive")
    p.add_argument("--start", choices=("steady", "ambient"), default="steady")

    p = sub.add_parser("steady", parents=[common], help="solve one steady state, print it")
    p.add_argument("--v-cm", type=float, required=True, help="compressor voltage (V)")
    p.add_argument("--current", type=float, required=True, help="stack current (A)")
    return parser


COMMANDS = {
    "dump-defaults": cmd_dump_defaults,
    "validate": cmd_validate,
    "polarize": cmd_polarize,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "steady": cmd_steady,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    level = logging.ERROR if args.quiet else (logging.DEBUG if args.verbose > 1 else
                                              logging.INFO if args.verbose else logging.WARNING)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s: %(message)s",
                        force=True)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, RunFailure, IntegrationError, StateInvariantError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

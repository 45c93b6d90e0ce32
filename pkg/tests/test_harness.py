import dataclasses
import logging

import numpy as np
import pytest

from pemfc.config import ParseError, ValidationError, parse_text
from pemfc.harness import (
    DYNAMIC_COLUMNS,
    SLPM_AIR_KG_S,
    STATIC_COLUMNS,
    ExperimentSpec,
    emit_csv,
    emit_plot_script,
    flow_to_kg_s,
    max_voltage_spread,
    run_polarization,
    run_sweep,
    run_transient,
    scenario_from_entries,
)
from pemfc.plant import Plant
from pemfc.sim import IntegratorConfig, Schedule, integrate

GRID = tuple(float(i) for i in range(1, 16))


def spec(**kw):
    base = dict(name="t", kind="polarization", current_grid=GRID)
    base.update(kw)
    return ExperimentSpec(**base)


def test_zero_loss_point(params):
    p = params.with_values({"electrochem.m_mt": 0.0, "conditions.T_st": 298.15,
                            "conditions.P_an": 101325.0, "conditions.P_O2_polarization": 101325.0})
    (rec,) = run_polarization(spec(current_grid=(0.0,)), p)
    assert rec.v_cell == pytest.approx(1.229, abs=1e-12)


def test_static_curve_strictly_decreasing(params):
    recs = run_polarization(spec(), params)
    assert len(recs) == 15
    v = [r.v_cell for r in recs]
    assert all(b < a for a, b in zip(v, v[1:]))


def test_dynamic_point_matches_long_integration(params):
    (rec,) = run_polarization(spec(mode="dynamic", current_grid=(9.0,), v_cm=3.0), params)
    assert rec.converged and rec.sane
    plant = Plant(params)
    x0 = plant.initial_guess(3.0, 9.0)
    cfg = IntegratorConfig(t_end=300.0, rel_tol=1e-9, abs_tol=1e-12)
    traj = integrate(x0, Schedule.constant(3.0, 9.0, 300.0), cfg, plant)
    np.testing.assert_allclose(traj.x[-1], rec.x_star.as_array(), rtol=1e-6, atol=0)
    assert traj.v[-1].v_cell == pytest.approx(rec.v_cell, abs=1e-9)


def test_pressure_sweep_orders_curves(params):
    curves = run_sweep(spec(kind="pressure_sweep", swept_values=(0.5, 1.0, 1.5), swept_unit="bar"), params)
    assert [v for v, _ in curves] == [0.5, 1.0, 1.5]
    for lo, hi in zip(curves, curves[1:]):
        assert all(h.v_cell > l.v_cell for l, h in zip(lo[1], hi[1]))


def test_temperature_sweep_reevaluates_vapor_pressure(params):
    curves = run_sweep(spec(kind="temperature_sweep", swept_values=(45.0, 70.0), swept_unit="degC"), params)
    assert [r.conditions.T_st for r in (curves[0][1][0], curves[1][1][0])] == pytest.approx([318.15, 343.15])


def test_single_swept_value_equals_plain_run(params):
    p = params.with_values({"conditions.P_O2_polarization": 1.2e5})
    (value, recs), = run_sweep(spec(kind="pressure_sweep", swept_values=(1.2,), swept_unit="bar"), params)
    plain = run_polarization(spec(), p)
    assert [r.breakdown for r in recs] == [r.breakdown for r in plain]


def test_dynamic_flow_sweep_hits_targets_and_is_marginal(params):
    s = spec(kind="flow_sweep", mode="dynamic", current_grid=tuple(float(i) for i in range(0, 13)),
             swept_values=(0.00333, 0.00833), swept_unit="kg/s")
    curves = run_sweep(s, params)
    for target, recs in curves:
        assert all(r.converged and r.sane for r in recs)
        assert recs[0].q.W_cp == pytest.approx(target, rel=1e-8)
    assert max_voltage_spread(curves) < s.marginality_threshold


def test_unreachable_slpm_flows_are_flagged(params, caplog):
    s = spec(kind="flow_sweep", mode="dynamic", current_grid=tuple(float(i) for i in range(1, 9)),
             swept_values=(0.2, 0.5), swept_unit="Slpm")
    with caplog.at_level(logging.WARNING):
        curves = run_sweep(s, params)
    assert "could not reach flow" in caplog.text
    assert all(not r.converged for _, recs in curves for r in recs)
    # both land at the smallest flow the compressor can hold, so the curves coincide
    assert max_voltage_spread(curves) < s.marginality_threshold


def test_slpm_conversion():
    assert SLPM_AIR_KG_S == pytest.approx(1.9737e-5, rel=1e-4)
    assert flow_to_kg_s(0.2, "Slpm") == pytest.approx(3.947e-6, rel=1e-3)
    with pytest.raises(ValidationError):
        flow_to_kg_s(1.0, "lb/h")


@pytest.mark.parametrize(
    "kw",
    [
        {"kind": "nope"},
        {"current_grid": ()},
        {"current_grid": (-1.0,)},
        {"kind": "pressure_sweep"},
        {"swept_values": (1.0,), "swept_unit": "bar"},
        {"kind": "pressure_sweep", "mode": "dynamic", "swept_values": (1.0,), "swept_unit": "bar"},
        {"kind": "temperature_sweep", "swept_values": (900.0,), "swept_unit": "K"},
    ],
)
def test_invalid_specs(kw):
    with pytest.raises(ValidationError):
        spec(**kw)


def test_scenario_parsing_ranges_and_units():
    entries = parse_text(
        "experiment.kind = pressure_sweep\n"
        "experiment.current_grid = 1:3:1, 5 [A]\n"
        "experiment.swept_values = 1.5, 0.5 [bar]\n"
        "experiment.marginality_threshold = 5 [mV]\n"
        "conditions.T_st = 50 [degC]\n"
    )
    s = scenario_from_entries(entries)
    assert s.current_grid == (1.0, 2.0, 3.0, 5.0)
    assert s.swept_values == (0.5, 1.5)
    assert s.marginality_threshold == pytest.approx(0.005)
    assert [e.name for e in s.overrides] == ["conditions.T_st"]
    with pytest.raises(ParseError):
        scenario_from_entries(parse_text("experiment.kind = polarization\nexperiment.current_grid = a:b\n"))


def test_transient_runs_the_staircase(params):
    s = spec(kind="transient", mode="dynamic", current_grid=(0.0, 6.0, 12.0), level_duration=1.0,
             integrator=IntegratorConfig(record_stride=5))
    traj = run_transient(s, params)
    assert traj.t[-1] == pytest.approx(3.0)
    assert traj.d[-1] == 12.0
    assert traj.v[-1].v_cell < traj.v[0].v_cell


# --- CSV and plot script --------------------------------------------------------------


def test_csv_line_counts_and_header(tmp_path, params):
    assert emit_csv([], tmp_path / "empty.csv").read_text() == ",".join(STATIC_COLUMNS) + "\n"
    path = emit_csv(run_polarization(spec(), params), tmp_path / "a.csv")
    lines = path.read_text().splitlines()
    assert len(lines) == 16
    assert lines[0].split(",") == list(STATIC_COLUMNS)


def test_dynamic_csv_columns(tmp_path, params):
    recs = run_polarization(spec(mode="dynamic", current_grid=(2.0, 4.0)), params)
    lines = emit_csv(recs, tmp_path / "d.csv").read_text().splitlines()
    assert lines[0].split(",") == list(DYNAMIC_COLUMNS)
    assert all(len(l.split(",")) == len(DYNAMIC_COLUMNS) for l in lines)
    assert lines[1].split(",")[-2:] == ["1", "1"]


def test_csv_is_reproducible(tmp_path, params):
    a = emit_csv(run_polarization(spec(mode="dynamic", current_grid=(1.0, 7.0)), params), tmp_path / "a.csv")
    b = emit_csv(run_polarization(spec(mode="dynamic", current_grid=(1.0, 7.0)), params), tmp_path / "b.csv")
    assert a.read_bytes() == b.read_bytes()


def test_csv_floats_round_trip(tmp_path, params):
    recs = run_polarization(spec(), params)
    path = emit_csv(recs, tmp_path / "a.csv")
    col = STATIC_COLUMNS.index("v_cell_V")
    values = [float(l.split(",")[col]) for l in path.read_text().splitlines()[1:]]
    assert values == [r.v_cell for r in recs]


def test_unwritable_path_names_the_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError, match="file"):
        emit_csv([], blocker / "x.csv")


def _csvs(tmp_path, params, n):
    values = (0.5, 1.0, 1.5)[:n]
    curves = run_sweep(spec(kind="pressure_sweep", swept_values=values, swept_unit="bar"), params)
    return [emit_csv(recs, tmp_path / f"c{v}.csv") for v, recs in curves]


def test_plot_script_references_given_csv(tmp_path, params):
    (c,) = _csvs(tmp_path, params, 1)
    text = emit_plot_script([c], tmp_path / "plot.py").read_text()
    assert "'c0.5.csv'" in text
    assert text.count(".csv'") == 1


def test_plot_script_is_deterministic_and_draws_each_series(tmp_path, params):
    pytest.importorskip("matplotlib")
    import runpy

    csvs = _csvs(tmp_path, params, 3)
    a = emit_plot_script(csvs, tmp_path / "plot.py").read_bytes()
    b = emit_plot_script(csvs, tmp_path / "plot.py").read_bytes()
    assert a == b
    import matplotlib.pyplot as plt

    ns = runpy.run_path(str(tmp_path / "plot.py"))
    captured = {}
    real = plt.subplots

    def spy(*args, **kw):
        fig, ax = real(*args, **kw)
        captured["ax"] = ax
        return fig, ax

    ns["plt"].subplots = spy
    try:
        ns["main"]()
    finally:
        ns["plt"].subplots = real
    labels = [t.get_text() for t in captured["ax"].get_legend().get_texts()]
    assert labels == ["0.5 bar", "1 bar", "1.5 bar"]
    assert (tmp_path / "plot.png").exists()


def test_missing_csv_rejected(tmp_path):
    with pytest.raises(FileNotFoundError):
        emit_plot_script([tmp_path / "nope.csv"], tmp_path / "plot.py")

import json
import subprocess
import sys

import pytest

from pemfc.cli import bundled_scenarios, main
from pemfc.config import parse_text
from pemfc.params import ParameterSet, parameter_hash, parameters_from_entries


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def test_dump_defaults_round_trips(capsys):
    assert main(["dump-defaults"]) == 0
    out = capsys.readouterr().out
    assert parameters_from_entries(parse_text(out).values()) == ParameterSet()


def test_validate_reports_bad_efficiency(workdir, capsys):
    (workdir / "bad.cfg").write_text("aux.eta_cp = 1.2\n")
    assert main(["validate", "--config", "bad.cfg"]) == 1
    assert "eta_cp" in capsys.readouterr().err


def test_usage_errors_exit_2(capsys):
    assert main([]) == 2
    assert main(["polarize"]) == 2
    assert main(["steady", "--v-cm", "x", "--current", "1"]) == 2


def test_unknown_scenario_exits_1(workdir, capsys):
    assert main(["polarize", "--scenario", "no_such_thing"]) == 1
    assert "no_such_thing" in capsys.readouterr().err


def test_polarize_writes_one_csv_per_pressure(workdir):
    assert main(["polarize", "-q", "--scenario", "fig7.cfg", "--out", "out"]) == 0
    files = sorted(p.name for p in (workdir / "out").iterdir())
    assert [f for f in files if f.endswith(".csv")] == ["fig7_0p5bar.csv", "fig7_1bar.csv", "fig7_1p5bar.csv"]
    assert [f for f in files if f.endswith(".py")] == ["plot_fig7.py"]
    manifest = json.loads((workdir / "out" / "fig7.manifest.json").read_text())
    assert manifest["outputs"] == ["fig7_0p5bar.csv", "fig7_1bar.csv", "fig7_1p5bar.csv", "plot_fig7.py"]
    assert manifest["inputs"]["scenario"]["name"] == "fig7.cfg"
    assert set(manifest["versions"]) == {"numpy", "pemfc", "python"}


def test_three_layer_precedence(workdir, capsys):
    (workdir / "base.cfg").write_text("conditions.T_st = 340 [K]\naux.V_sm = 0.03 [m^3]\n")
    assert main(["validate", "--config", "base.cfg", "--override", "conditions.T_st=350 [K]"]) == 0
    out = capsys.readouterr().out
    expected = ParameterSet().with_values({"conditions.T_st": 350.0, "aux.V_sm": 0.03})
    assert parameter_hash(expected) in out


def test_override_beats_scenario(workdir, capsys):
    (workdir / "s.cfg").write_text(
        "experiment.kind = polarization\nexperiment.current_grid = 1, 2 [A]\nconditions.T_st = 320 [K]\n"
    )
    (workdir / "c.cfg").write_text("conditions.T_st = 310 [K]\n")
    assert main(["validate", "--config", "c.cfg", "--scenario", "s.cfg"]) == 0
    assert parameter_hash(ParameterSet().with_values({"conditions.T_st": 320.0})) in capsys.readouterr().out
    assert main(["validate", "--config", "c.cfg", "--scenario", "s.cfg", "--override", "conditions.T_st=330"]) == 0
    assert parameter_hash(ParameterSet().with_values({"conditions.T_st": 330.0})) in capsys.readouterr().out


def test_experiment_override(workdir):
    assert main(["polarize", "-q", "--scenario", "fig6", "--override", "experiment.current_grid=1, 2 [A]"]) == 0
    assert len((workdir / "fig6.csv").read_text().splitlines()) == 3


def test_sweep_writes_single_csv(workdir, capsys):
    assert main(["sweep", "-q", "--scenario", "fig10", "--out", "o"]) == 0
    lines = (workdir / "o" / "fig10_sweep.csv").read_text().splitlines()
    assert len(lines) == 1 + 2 * 15
    assert "max voltage spread" in capsys.readouterr().out


def test_simulate_and_steady(workdir, capsys):
    assert main(["simulate", "-q", "--v-cm", "3", "--current", "4", "--t-end", "0.5", "--out", "o"]) == 0
    assert (workdir / "o" / "simulate_trajectory.csv").exists()
    assert main(["steady", "--v-cm", "3", "--current", "4"]) == 0
    out = capsys.readouterr().out
    assert "converged = True" in out
    assert main(["simulate", "-q", "--scenario", "fig7"]) == 1


def test_outputs_stay_inside_out_dir(workdir):
    before = set(workdir.iterdir())
    assert main(["polarize", "-q", "--scenario", "fig5_dynamic", "--out", "inside"]) == 0
    assert set(workdir.iterdir()) - before == {workdir / "inside"}


def test_bundled_scenarios_listed():
    names = bundled_scenarios()
    for k in range(5, 11):
        assert f"fig{k}.cfg" in names
    assert "staircase.cfg" in names


def test_module_entry_point(workdir):
    r = subprocess.run([sys.executable, "-m", "pemfc", "--version"], capture_output=True, text=True)
    assert r.returncode == 0
    assert r.stdout.startswith("pemfc ")

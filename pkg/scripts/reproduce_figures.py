#!/usr/bin/env python3
"""Run every bundled scenario through the CLI and render the plots.

    python scripts/reproduce_figures.py [--out results]
"""
import argparse
import runpy
import sys
from pathlib import Path

from pemfc.cli import bundled_scenarios, main


def run(out: Path, plot: bool) -> int:
    status = 0
    for name in bundled_scenarios():
        cmd = "simulate" if name == "staircase.cfg" else "polarize"
        code = main([cmd, "-q", "--scenario", name, "--out", str(out)])
        print(f"{name:<20} {cmd:<9} exit {code}")
        status = max(status, code)
    if plot:
        try:
            import matplotlib  # noqa: F401
        except ImportError:
            print("matplotlib not installed; skipping plots", file=sys.stderr)
            return status
        for script in sorted(out.glob("plot_*.py")):
            runpy.run_path(str(script))["main"]()
    return status


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results", type=Path)
    ap.add_argument("--no-plots", action="store_true")
    a = ap.parse_args()
    sys.exit(run(a.out, not a.no_plots))

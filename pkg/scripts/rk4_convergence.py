#!/usr/bin/env python3
"""Observed order of fixed-step RK4 on the plant.

Steps from the (2 V, 2 A) equilibrium to (4 V, 12 A) and compares the
state after 1 s against a tight-tolerance adaptive run.  The error ratio
per halving should approach 16.
"""
import numpy as np

from pemfc.params import ParameterSet
from pemfc.plant import Plant
from pemfc.sim import IntegratorConfig, Schedule, find_steady_state, integrate


def main():
    plant = Plant(ParameterSet())
    x0 = find_steady_state(plant.initial_guess(2.0, 2.0), 2.0, 2.0, plant).x_star
    prof = Schedule.constant(4.0, 12.0, 1.0)
    ref_cfg = IntegratorConfig(t_end=1.0, rel_tol=1e-13, abs_tol=1e-15)
    ref = integrate(x0, prof, ref_cfg, plant, derived=False).x[-1]
    scale = plant.nominal_scale()
    prev = None
    print(f"{'dt [s]':>10} {'scaled error':>14} {'ratio':>8}")
    for dt in (1.6e-2, 8e-3, 4e-3, 2e-3, 1e-3):
        cfg = IntegratorConfig(method="rk4-fixed", t_end=1.0, dt=dt)
        x = integrate(x0, prof, cfg, plant, derived=False).x[-1]
        err = float(np.max(np.abs(x - ref) / scale))
        ratio = "" if prev is None else f"{prev / err:8.2f}"
        print(f"{dt:10.4g} {err:14.3e} {ratio}")
        prev = err


if __name__ == "__main__":
    main()

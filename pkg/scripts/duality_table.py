#!/usr/bin/env python3
"""Newton steady states next to 300 s integrations over a current grid."""
import numpy as np

from pemfc.params import ParameterSet
from pemfc.plant import STATE_NAMES, Plant
from pemfc.sim import IntegratorConfig, Schedule, find_steady_state, integrate


def main(v_cm=3.0):
    plant = Plant(ParameterSet())
    cfg = IntegratorConfig(t_end=300.0, rel_tol=1e-9, abs_tol=1e-12)
    print(f"{'I [A]':>6} {'iters':>5} {'W_cp [kg/s]':>12} {'v_cell [V]':>10} {'max rel gap':>12}  worst state")
    for I in np.linspace(0.0, 15.0, 7):
        guess = plant.initial_guess(v_cm, I)
        res = find_steady_state(guess, v_cm, I, plant)
        x = res.x_star.as_array()
        xi = integrate(guess, Schedule.constant(v_cm, I, 300.0), cfg, plant, derived=False).x[-1]
        gap = np.abs(xi - x) / np.abs(x)
        _, q = plant.evaluate(x, v_cm, I)
        print(f"{I:6.2f} {res.iterations:5d} {q.W_cp:12.5e} {plant.voltage(x, I).v_cell:10.5f} "
              f"{gap.max():12.2e}  {STATE_NAMES[int(gap.argmax())]}")


if __name__ == "__main__":
    main()

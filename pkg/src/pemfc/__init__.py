"""Control-oriented PEM fuel cell system model.

Six-state air-path plant, static cell voltage, integrators and a steady-state
solver, plus a small experiment harness and CLI.
"""

__version__ = "0.1.0"

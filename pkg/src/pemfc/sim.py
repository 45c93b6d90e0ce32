"""Time integration and steady-state solving for the plant.

Inputs are zero-order held: between schedule breakpoints ``u`` and ``d``
are constant, and no step ever straddles a breakpoint.
"""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .electrochem import VoltageBreakdown
from .params import ParameterSet
from .plant import DerivedQuantities, Plant, PlantState, StateInvariantError

__all__ = [
    "IntegratorConfig",
    "Schedule",
    "staircase_profile",
    "Trajectory",
    "IntegrationError",
    "rk4_step",
    "dopri_step",
    "integrate",
    "integrate_array",
    "SteadyStateResult",
    "find_steady_state",
    "jacobian_fd",
]

log = logging.getLogger(__name__)

Rhs = Callable[[np.ndarray, float, float], np.ndarray]


class IntegrationError(RuntimeError):
    def __init__(self, message: str, t: float):
        self.t = t
        super().__init__(f"t = {t:.6g} s: {message}")


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk45-adaptive"
    t_end: float = 1.0
    dt: float = 1e-3
    dt_min: float = 1e-9
    dt_max: float = 0.5
    rel_tol: float = 1e-6
    abs_tol: float = 1e-9
    record_stride: int = 1
    blowup_factor: float = 1e3

    def __post_init__(self):
        if self.method not in ("rk4-fixed", "rk45-adaptive"):
            raise ValueError(f"unknown integration method {self.method!r}")
        if self.t_end < 0:
            raise ValueError("t_end must be >= 0")
        if min(self.dt, self.dt_min, self.dt_max, self.rel_tol, self.abs_tol) <= 0:
            raise ValueError("step sizes and tolerances must be > 0")
        if self.dt_min > self.dt_max:
            raise ValueError("dt_min must not exceed dt_max")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")


# ------------------------------------------------------------------ profiles

@dataclass(frozen=True)
class Schedule:
    """Piecewise-constant ``(v_cm, I_fc)`` schedule, right-continuous.

    ``times[k]`` is where segment ``k`` starts; ``times[0] == 0``.
    """

    times: tuple[float, ...]
    v_cm: tuple[float, ...]
    I_fc: tuple[float, ...]
    t_end: float

    def __post_init__(self):
        if not (len(self.times) == len(self.v_cm) == len(self.I_fc)) or not self.times:
            raise ValueError("schedule arrays must be non-empty and equally long")
        if self.times[0] != 0.0 or any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("breakpoints must start at 0 and strictly increase")

    @classmethod
    def constant(cls, v_cm: float, I_fc: float, t_end: float) -> "Schedule":
        return cls((0.0,), (float(v_cm),), (float(I_fc),), float(t_end))

    @property
    def breakpoints(self) -> tuple[float, ...]:
        """Start time of every segment, including 0."""
        return self.times

    def __call__(self, t: float) -> tuple[float, float]:
        k = bisect.bisect_right(self.times, t) - 1
        k = max(k, 0)
        return self.v_cm[k], self.I_fc[k]

    def next_breakpoint(self, t: float) -> float:
        k = bisect.bisect_right(self.times, t)
        return self.times[k] if k < len(self.times) else math.inf


def _merge(levels_a, levels_b):
    """Merge two ``[(duration, value)]`` lists onto common breakpoints."""
    def starts(levels):
        out, t = [], 0.0
        for dur, val in levels:
            out.append((t, val))
            t += dur
        return out, t

    sa, ta = starts(levels_a)
    sb, tb = starts(levels_b)
    times = sorted({t for t, _ in sa} | {t for t, _ in sb})

    def value_at(starts_, t):
        val = starts_[0][1]
        for s, v in starts_:
            if s <= t:
                val = v
        return val

    return times, [value_at(sa, t) for t in times], [value_at(sb, t) for t in times], max(ta, tb)


def staircase_profile(
    levels: Sequence[tuple[float, float]],
    v_cm: float | Sequence[tuple[float, float]],
) -> Schedule:
    """Current staircase ``[(duration, I_fc), ...]`` with constant or stepped ``v_cm``.

    A stepped ``v_cm`` is given as ``[(duration, volts), ...]``; if it ends
    early its last level is held.
    """
    if not levels:
        raise ValueError("at least one current level is required")
    if any(dur <= 0 for dur, _ in levels):
        raise ValueError("level durations must be > 0")
    total = float(sum(dur for dur, _ in levels))
    if isinstance(v_cm, (int, float)):
        v_levels = [(total, float(v_cm))]
    else:
        v_levels = [(float(dur), float(v)) for dur, v in v_cm]
        if any(dur <= 0 for dur, _ in v_levels):
            raise ValueError("voltage durations must be > 0")
    times, vs, cur, t_end = _merge(v_levels, [(float(dur), float(i)) for dur, i in levels])
    # keep only true breakpoints (drop repeated values) and clip to the current profile
    keep_t, keep_v, keep_i = [], [], []
    for t, v, i in zip(times, vs, cur):
        if t >= total:
            break
        if keep_t and keep_v[-1] == v and keep_i[-1] == i:
            continue
        keep_t.append(float(t))
        keep_v.append(v)
        keep_i.append(i)
    return Schedule(tuple(keep_t), tuple(keep_v), tuple(keep_i), total)


# --------------------------------------------------------------- steppers

def rk4_step(
    x: np.ndarray,
    u: float,
    d: float,
    dt: float,
    rhs: Rhs,
    check: Callable[[np.ndarray], bool] | None = None,
) -> np.ndarray:
    """One classical Runge-Kutta step with ``u, d`` held over the step."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    x = np.asarray(x, dtype=float)
    k1 = rhs(x, u, d)
    x2 = x + 0.5 * dt * k1
    if check is not None and not check(x2):
        raise StateInvariantError("RK4 stage 2 left the state domain")
    k2 = rhs(x2, u, d)
    x3 = x + 0.5 * dt * k2
    if check is not None and not check(x3):
        raise StateInvariantError("RK4 stage 3 left the state domain")
    k3 = rhs(x3, u, d)
    x4 = x + dt * k3
    if check is not None and not check(x4):
        raise StateInvariantError("RK4 stage 4 left the state domain")
    k4 = rhs(x4, u, d)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# Dormand-Prince 5(4); row i of _A holds the stage-(i+1) weights
_A = np.zeros((7, 7))
for _i, _row in enumerate((
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
), start=1):
    _A[_i, : len(_row)] = _row
_B5 = _A[6].copy()
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B5 - _B4


def dopri_step(x, u, d, dt, rhs: Rhs, k1=None, check=None):
    """One Dormand-Prince step: ``(x_new, error_estimate, k_last)``.

    ``k_last`` is the derivative at ``x_new`` (first-same-as-last), or
    ``None`` when a stage left the state domain.
    """
    x = np.asarray(x, dtype=float)
    K = np.empty((7, x.size))
    K[0] = rhs(x, u, d) if k1 is None else k1
    for i in range(1, 7):
        xs = x + dt * (_A[i, :i] @ K[:i])
        if check is not None and not check(xs):
            return None, None, None
        K[i] = rhs(xs, u, d)
    # the last stage is evaluated at the fifth-order solution
    return xs, dt * (_E @ K), K[6].copy()


# ------------------------------------------------------------- trajectory

@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray  # (n, 6)
    u: np.ndarray
    d: np.ndarray
    q: list[DerivedQuantities] = field(default_factory=list)
    v: list[VoltageBreakdown] = field(default_factory=list)
    steps: int = 0
    rejected: int = 0

    def __len__(self) -> int:
        return len(self.t)

    @property
    def final(self) -> PlantState:
        return PlantState.from_array(self.x[-1])

    @property
    def reverse_flow_samples(self) -> int:
        return sum(1 for q in self.q if q.sm_reverse or q.ca_reverse)


def integrate_array(
    x0,
    profile: Schedule,
    cfg: IntegratorConfig,
    rhs: Rhs,
    check: Callable[[np.ndarray], bool] | None = None,
    scale: np.ndarray | None = None,
):
    """Integrate a generic ``rhs``; returns ``(t, x, steps, rejected)`` arrays.

    ``scale`` sets per-component magnitudes for absolute tolerance and
    blow-up detection (defaults to ones).
    """
    x = np.array(x0, dtype=float)
    scale = np.ones_like(x) if scale is None else np.asarray(scale, dtype=float)
    bound = cfg.blowup_factor * np.maximum(scale, np.abs(x))
    t_end = cfg.t_end
    ts, xs = [0.0], [x.copy()]
    t, steps, rejected, since_record = 0.0, 0, 0, 0
    adaptive = cfg.method == "rk45-adaptive"
    dt = cfg.dt if not adaptive else min(cfg.dt, cfg.dt_max)
    k1 = None
    eps = 1e-12 * max(t_end, 1.0)

    while t < t_end - eps:
        u, d = profile(t)
        t_stop = min(profile.next_breakpoint(t), t_end)
        if adaptive:
            h = min(dt, t_stop - t, cfg.dt_max)
            x_new, err, k_last = dopri_step(x, u, d, h, rhs, k1, check)
            if x_new is None:
                ratio = math.inf
            else:
                tol = cfg.abs_tol * scale + cfg.rel_tol * np.maximum(np.abs(x), np.abs(x_new))
                ratio = float(np.sqrt(np.mean((err / tol) ** 2)))
            if ratio > 1.0:
                rejected += 1
                dt = h * max(0.2, 0.9 * ratio ** -0.2) if math.isfinite(ratio) else 0.25 * h
                if dt < cfg.dt_min:
                    raise IntegrationError(f"step size underflow ({dt:.3g} s)", t)
                continue
            landed = t + h >= t_stop - eps
            t = t_stop if landed else t + h
            x = x_new
            # FSAL derivative is only valid while inputs stay constant
            k1 = None if landed else k_last
            grow = 5.0 if ratio == 0 else min(5.0, 0.9 * ratio ** -0.2)
            # a step truncated at a breakpoint says nothing about the natural step
            dt = max(dt if landed and h < dt else h * grow, cfg.dt_min)
        else:
            h = min(cfg.dt, t_stop - t)
            x = rk4_step(x, u, d, h, rhs, check)
            t = t_stop if t + h >= t_stop - eps else t + h
        steps += 1
        since_record += 1
        if not np.all(np.isfinite(x)) or np.any(np.abs(x) > bound):
            raise IntegrationError("state blow-up", t)
        if check is not None and not check(x):
            raise IntegrationError("state left the physical domain", t)
        if since_record >= cfg.record_stride or t >= t_end - eps:
            ts.append(t)
            xs.append(x.copy())
            since_record = 0
    return np.array(ts), np.array(xs), steps, rejected


def integrate(
    x0,
    profile: Schedule,
    cfg: IntegratorConfig,
    p: ParameterSet | Plant,
    derived: bool = True,
) -> Trajectory:
    """Simulate the plant along ``profile``.

    With ``derived=True`` every recorded sample also carries its
    :class:`DerivedQuantities` and voltage breakdown.
    """
    plant = p if isinstance(p, Plant) else Plant(p)
    if isinstance(x0, PlantState):
        x0 = x0.as_array()
    if not plant.is_valid(x0):
        raise StateInvariantError(f"initial state violates invariants: {x0}")
    try:
        t, x, steps, rejected = integrate_array(
            x0, profile, cfg, plant.rates, plant.is_valid, plant.nominal_scale()
        )
    except StateInvariantError as exc:
        raise IntegrationError(str(exc), math.nan) from exc
    inputs = [profile(ti) for ti in t]
    u = np.array([a for a, _ in inputs])
    d = np.array([b for _, b in inputs])
    traj = Trajectory(t=t, x=x, u=u, d=d, steps=steps, rejected=rejected)
    if derived:
        for xi, ui, di in zip(x, u, d):
            traj.q.append(plant.evaluate(xi, ui, di)[1])
            traj.v.append(plant.voltage(xi, di))
    return traj


# ----------------------------------------------------------- steady state

@dataclass(frozen=True)
class SteadyStateResult:
    x_star: PlantState
    residual_norm: float
    iterations: int
    converged: bool
    method: str = "newton"


def jacobian_fd(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, central: bool = True,
                steps: np.ndarray | None = None) -> np.ndarray:
    """Finite-difference Jacobian; steps default to ``max(1e-6 |x_i|, 1e-10)``."""
    x = np.asarray(x, dtype=float)
    h = np.maximum(1e-6 * np.abs(x), 1e-10) if steps is None else np.asarray(steps, dtype=float)
    f0 = None if central else f(x)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        if central:
            cols.append((f(x + e) - f(x - e)) / (2.0 * h[i]))
        else:
            cols.append((f(x + e) - f0) / h[i])
    return np.column_stack(cols)


def find_steady_state(
    guess,
    u: float,
    d: float,
    p: ParameterSet | Plant,
    tol: float = 1e-10,
    max_iter: int = 100,
    scale: np.ndarray | None = None,
) -> SteadyStateResult:
    """Solve ``dx/dt = 0`` for fixed ``(u, d)``.

    Damped Newton on the scaled residual ``(dx/dt) / scale`` with a central
    difference Jacobian and backtracking.  When the line search stalls,
    switches to pseudo-transient continuation, solving
    ``(I/tau - J) dx = F`` with ``tau`` grown as the residual falls.
    The residual norm is the max-norm of the scaled rates (1/s).
    """
    plant = p if isinstance(p, Plant) else Plant(p)
    x = guess.as_array() if isinstance(guess, PlantState) else np.array(guess, dtype=float)
    if not plant.is_valid(x):
        raise StateInvariantError(f"initial guess violates invariants: {x}")
    scale = plant.nominal_scale() if scale is None else np.asarray(scale, dtype=float)

    def F(xv):
        return plant.rates(xv, u, d) / scale

    def norm(v):
        return float(np.max(np.abs(v)))

    def safe(xv):
        if not plant.is_valid(xv):
            return None
        try:
            r = F(xv)
        except StateInvariantError:
            return None
        return r if np.all(np.isfinite(r)) else None

    r = F(x)
    res = norm(r)
    best_x, best_res = x.copy(), res
    it = 0
    method = "newton"
    tau = None
    while res >= tol and it < max_iter:
        it += 1
        J = jacobian_fd(F, x)
        if tau is None:
            try:
                dx = np.linalg.solve(J, -r)
            except np.linalg.LinAlgError:
                dx = None
            accepted = False
            if dx is not None and np.all(np.isfinite(dx)):
                lam = 1.0
                while lam > 1e-4:
                    x_try = x + lam * dx
                    r_try = safe(x_try)
                    if r_try is not None and norm(r_try) <= (1.0 - 1e-4 * lam) * res:
                        x, r, res = x_try, r_try, norm(r_try)
                        accepted = True
                        break
                    lam *= 0.5
            if not accepted:
                log.debug("newton stalled at iteration %d (residual %.3g); continuing pseudo-transiently", it, res)
                method = "newton+ptc"
                tau = 1e-3
                continue
        else:
            A = np.eye(x.size) / tau - J
            dx = np.linalg.solve(A, r)
            x_try = x + dx
            r_try = safe(x_try)
            if r_try is None:
                tau *= 0.25
                continue
            new = norm(r_try)
            tau = min(tau * max(res / max(new, 1e-300), 0.5), 1e12)
            x, r, res = x_try, r_try, new
        if res < best_res:
            best_x, best_res = x.copy(), res
    converged = best_res < tol
    return SteadyStateResult(PlantState.from_array(best_x), best_res, it, converged, method)

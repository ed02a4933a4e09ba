"""Brute-force solvers used to validate the synthesized controls.

dp_solve runs backward value iteration on a time x state grid with exact
one-step transitions (the only discretization error comes from the linear
value interpolation and the finite control grid).  parametric_search
optimizes the switch times of a declared control structure directly with
exact cost evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dynamics
from .dynamics import ModelParams, PiecewiseControl, ProblemInstance
from .pmp import singular_data
from .synthesis import RegimeLabel

__all__ = ["DpConfig", "dp_solve", "parametric_search", "structure_values"]


@dataclass(frozen=True)
class DpConfig:
    """Grid resolution for the dynamic-programming solver."""

    n_time: int
    n_state: int
    n_control: int
    r_max: float

    def __post_init__(self) -> None:
        if self.n_time < 1 or self.n_state < 2 or self.n_control < 1:
            raise ValueError(
                f"grid sizes must satisfy n_time >= 1, n_state >= 2, n_control >= 1, "
                f"got ({self.n_time}, {self.n_state}, {self.n_control})"
            )
        if not self.r_max > 0:
            raise ValueError(f"r_max must be > 0, got {self.r_max}")

    @classmethod
    def for_instance(
        cls,
        instance: ProblemInstance,
        n_time: int = 2000,
        n_state: int = 2001,
        n_control: int = 21,
        margin: float = 1.05,
    ) -> "DpConfig":
        """Default acceptance-baseline resolution with a state grid that
        covers the uncontrolled trajectory from r0."""
        reach = instance.r0 + instance.params.noise_rate * instance.horizon
        return cls(n_time, n_state, n_control, margin * reach + 1e-12)


def _control_grid(params: ModelParams, n_control: int) -> np.ndarray:
    """Control grid always containing 0, u_max, and u_s when admissible."""
    if params.u_max == 0.0:
        return np.array([0.0])
    grid = list(np.linspace(0.0, params.u_max, n_control))
    sd = singular_data(params)
    if sd.admissible:
        grid.append(sd.u_s)
    return np.unique(np.array(grid))


def _step_tables(
    instance: ProblemInstance, config: DpConfig, u_grid: np.ndarray, dt: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-control transition and stage-cost tables on the state grid."""
    params = instance.params
    r = np.linspace(0.0, config.r_max, config.n_state)
    dr = r[1] - r[0]
    n_u = len(u_grid)
    idx = np.empty((n_u, config.n_state), dtype=np.int64)
    w = np.empty((n_u, config.n_state))
    stage = np.empty((n_u, config.n_state))
    for k, u in enumerate(u_grid):
        x = u * dt
        r_next = r * math.exp(-x) + params.noise_rate * dt * dynamics._phi1(x)
        stage[k] = params.alpha * (
            r * dt * dynamics._phi1(x) + params.noise_rate * dt * dt * dynamics._phi2(x)
        ) + params.beta * u * dt
        pos = r_next / dr
        i = np.clip(np.floor(pos).astype(np.int64), 0, config.n_state - 2)
        idx[k] = i
        w[k] = np.clip(pos - i, 0.0, 1.0)  # clamping at r_max only affects
        # states outside the reachable cone guaranteed by the r_max invariant
    return r, idx, w, stage


def dp_solve(
    instance: ProblemInstance, config: DpConfig
) -> tuple[float, PiecewiseControl]:
    """Backward value iteration plus greedy readout.

    Returns the exactly re-evaluated cost of the greedy control (a feasible
    control cost, not the interpolated grid value) and the control itself
    with equal-valued steps merged.
    """
    params = instance.params
    T = instance.horizon
    reach = instance.r0 + params.noise_rate * T
    if config.r_max < reach - 1e-9 * max(1.0, reach):
        raise ValueError(
            f"r_max = {config.r_max} below the uncontrolled reach {reach}"
        )
    dt = T / config.n_time
    u_grid = _control_grid(params, config.n_control)
    _, idx, w, stage = _step_tables(instance, config, u_grid, dt)

    values = np.empty((config.n_time + 1, config.n_state))
    values[config.n_time] = 0.0
    cand = np.empty_like(stage)
    for k in range(config.n_time - 1, -1, -1):
        v_next = values[k + 1]
        np.multiply(v_next[idx], 1.0 - w, out=cand)
        cand += v_next[idx + 1] * w
        cand += stage
        values[k] = cand.min(axis=0)

    # greedy forward readout at the continuous state
    dr = config.r_max / (config.n_state - 1)
    boundaries = [T * (k / config.n_time) for k in range(config.n_time + 1)]
    r = instance.r0
    us: list[float] = []
    for k in range(config.n_time):
        v_next = values[k + 1]
        best_u, best_val = 0.0, math.inf
        for u in u_grid:
            r_nxt = dynamics.propagate_r(r, float(u), dt, params)
            if r_nxt > config.r_max + 1e-9 * max(1.0, config.r_max):
                raise RuntimeError(
                    f"greedy trajectory left the state grid: r = {r_nxt} > {config.r_max}"
                )
            pos = r_nxt / dr
            i = min(int(pos), config.n_state - 2)
            frac = min(max(pos - i, 0.0), 1.0)
            val = (
                dynamics.segment_cost(r, float(u), dt, params)
                + (1.0 - frac) * v_next[i]
                + frac * v_next[i + 1]
            )
            if val < best_val:
                best_u, best_val = float(u), val
        us.append(best_u)
        r = dynamics.propagate_r(r, best_u, dt, params)

    segs = []
    start = 0
    for k in range(1, config.n_time + 1):
        if k == config.n_time or us[k] != us[start]:
            segs.append(
                dynamics.ControlSegment(boundaries[start], boundaries[k], us[start])
            )
            start = k
    control = PiecewiseControl(tuple(segs))
    return dynamics.cost(instance, control), control


def structure_values(
    instance: ProblemInstance, structure: RegimeLabel
) -> list[float]:
    """Control-value sequence of a structural form for this instance."""
    params = instance.params
    sd = singular_data(params)
    if structure in (RegimeLabel.S0, RegimeLabel.ZS0, RegimeLabel.BS0) and not sd.admissible:
        raise ValueError(f"structure {structure} needs an admissible singular control")
    return {
        RegimeLabel.Z: [0.0],
        RegimeLabel.B0: [params.u_max, 0.0],
        RegimeLabel.BZB: [0.0, params.u_max, 0.0],
        RegimeLabel.S0: [sd.u_s if sd.admissible else math.nan, 0.0],
        RegimeLabel.ZS0: [0.0, sd.u_s if sd.admissible else math.nan, 0.0],
        RegimeLabel.BS0: [params.u_max, sd.u_s if sd.admissible else math.nan, 0.0],
    }[structure]


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_min(f, a: float, b: float, tol: float = 1e-10) -> float:
    """Golden-section minimizer on [a, b] (scipy's golden-section routine
    expands its bracket outside the bounds, which is unusable here)."""
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
    return 0.5 * (a + b)


def parametric_search(
    instance: ProblemInstance, structure: RegimeLabel, grid: int = 32
) -> tuple[float, tuple[float, ...]]:
    """Best cost within one structural form: exhaustive switch-time grid
    followed by golden-section refinement on each coordinate."""
    if grid < 2:
        raise ValueError(f"grid must be >= 2, got {grid}")
    values = structure_values(instance, structure)
    T = instance.horizon

    def cost_of(times: tuple[float, ...]) -> float:
        ordered = tuple(sorted(min(max(t, 0.0), T) for t in times))
        control = PiecewiseControl.from_switch_times(values, ordered, T)
        return dynamics.cost(instance, control)

    n_par = len(values) - 1
    if n_par == 0:
        return cost_of(()), ()

    ts = np.linspace(0.0, T, grid)
    if n_par == 1:
        best_t = min((float(t) for t in ts), key=lambda t: cost_of((t,)))
        lo = max(best_t - T / (grid - 1), 0.0)
        hi = min(best_t + T / (grid - 1), T)
        t1 = _golden_min(lambda t: cost_of((t,)), lo, hi, tol=1e-10 * max(1.0, T))
        if cost_of((best_t,)) < cost_of((t1,)):
            t1 = best_t
        return cost_of((t1,)), (t1,)

    best = (math.inf, (0.0, 0.0))
    for i, t1 in enumerate(ts):
        for t2 in ts[i:]:
            c = cost_of((float(t1), float(t2)))
            if c < best[0]:
                best = (c, (float(t1), float(t2)))
    t1, t2 = best[1]
    tol = 1e-10 * max(1.0, T)
    c_prev = math.inf
    for _ in range(30):  # coordinate descent keeps t1 <= t2; the joint slide
        # handles the soft direction where both switches move together
        t1 = _golden_min(lambda t: cost_of((t, t2)), 0.0, t2, tol=tol)
        t2 = _golden_min(lambda t: cost_of((t1, t)), t1, T, tol=tol)
        shift = _golden_min(lambda s: cost_of((t1 + s, t2 + s)), -t1, T - t2, tol=tol)
        t1, t2 = min(max(t1 + shift, 0.0), T), min(max(t2 + shift, 0.0), T)
        c = cost_of((t1, t2))
        if c_prev - c <= 1e-13 * (1.0 + abs(c)):
            break
        c_prev = c
    c = cost_of((t1, t2))
    if best[0] < c:
        (c, (t1, t2)) = best
    return c, (t1, t2)

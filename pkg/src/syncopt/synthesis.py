"""Optimal-control synthesis, structure classification, and regime maps.

The free terminal state makes psi(T) = 0 the one pinned boundary value, so
the scalar shooting variable is R(T).  In the singular regime the family of
extremals that dwell at the singular point is available in closed form and
is tried first; outside its reach (and always in the nonsingular regime)
the terminal state is found by bisection on the backward-orbit map
R(T) -> R(0).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import dynamics
from .dynamics import ModelParams, PiecewiseControl, ProblemInstance
from .pmp import (
    Extremal,
    ExtremalArc,
    SingularData,
    _backward_r0,
    backward_orbit,
    singular_data,
)

__all__ = [
    "RegimeLabel",
    "SynthesisError",
    "StructureViolationError",
    "SynthesisResult",
    "synthesize",
    "classify",
    "classify_control",
    "regime_map",
    "zero_regime_threshold",
]

logger = logging.getLogger(__name__)

# zero-length arcs below this fraction of the horizon are merged away
MERGE_FRACTION = 1e-10
# acceptance tolerance on the shooting residual |R(0) - r0|
SHOOT_RTOL = 1e-9
# bisection tolerance on the terminal state
BISECT_TOL = 1e-12
GRID_SCAN_POINTS = 64


class SynthesisError(RuntimeError):
    """Shooting could not bracket or match R(0) = r0; carries the scanned
    (terminal_r, R(0)) pairs for diagnosis."""

    def __init__(self, message: str, scan: list[tuple[float, float]] | None = None):
        super().__init__(message)
        self.scan = scan or []


class StructureViolationError(RuntimeError):
    """A control's segment sequence matches none of the admissible forms."""


class RegimeLabel(str, Enum):
    """Structural form of an optimal control (value sequence of its arcs)."""

    Z = "Z"        # (0)
    B0 = "B0"      # (u1, 0)
    BZB = "BZB"    # (0, u1, 0)
    S0 = "S0"      # (us, 0)
    ZS0 = "ZS0"    # (0, us, 0)
    BS0 = "BS0"    # (u1, us, 0)

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


_SEQUENCE_TO_LABEL = {
    ("zero",): RegimeLabel.Z,
    ("bang", "zero"): RegimeLabel.B0,
    ("zero", "bang", "zero"): RegimeLabel.BZB,
    ("sing", "zero"): RegimeLabel.S0,
    ("zero", "sing", "zero"): RegimeLabel.ZS0,
    ("bang", "sing", "zero"): RegimeLabel.BS0,
}


@dataclass(frozen=True)
class SynthesisResult:
    """Synthesized optimal control and its certificate extremal."""

    control: PiecewiseControl
    regime: RegimeLabel
    switch_times: tuple[float, ...]
    cost: float
    terminal_r: float
    extremal: Extremal


def _category(u: float, params: ModelParams, sd: SingularData) -> str:
    tol = 1e-9 * max(1.0, params.u_max)
    # prefer the singular value on ties (only possible when u_s == u_max)
    if sd.admissible and abs(u - sd.u_s) <= tol:
        return "sing"
    if abs(u) <= tol:
        return "zero"
    if abs(u - params.u_max) <= tol:
        return "bang"
    raise StructureViolationError(
        f"segment value {u} is none of 0, u_max = {params.u_max}"
        + (f", u_s = {sd.u_s}" if sd.admissible else "")
    )


def classify_control(control: PiecewiseControl, params: ModelParams) -> RegimeLabel:
    """Label a control by its merged segment-value sequence; sequences outside
    the admissible forms raise StructureViolationError."""
    sd = singular_data(params)
    merged = control.merged(MERGE_FRACTION * control.horizon)
    cats: list[str] = []
    for seg in merged.segments:
        c = _category(seg.u, params, sd)
        if not cats or cats[-1] != c:
            cats.append(c)
    label = _SEQUENCE_TO_LABEL.get(tuple(cats))
    if label is None:
        raise StructureViolationError(f"unrecognized control structure {tuple(cats)}")
    return label


def classify(result: SynthesisResult) -> RegimeLabel:
    """Label a synthesis result from its control's segment sequence."""
    return classify_control(result.control, result.extremal.params)


def zero_regime_threshold(params: ModelParams, r0: float) -> float:
    """Largest horizon T for which the zero control is optimal at this r0.

    Along the candidate zero-control extremal, H1(t) = -beta +
    alpha (T - t)(r0 + N s^2 t); the control stays optimal while the maximum
    of that concave quadratic is <= 0, which yields a closed-form threshold.
    """
    if r0 < 0:
        raise ValueError(f"r0 must be >= 0, got {r0}")
    nr = params.noise_rate
    r_s = math.sqrt(nr * params.beta / params.alpha)
    if r0 <= r_s:
        return (2.0 * r_s - r0) / nr
    return params.beta / (params.alpha * r0)


def _singular_family(
    instance: ProblemInstance, sd: SingularData
) -> tuple[list[ExtremalArc], float] | None:
    """Closed-form extremal holding at the singular point, or None when the
    dwell would be negative (r0 outside the family's reach)."""
    params = instance.params
    nr = params.noise_rate
    T, r0 = instance.horizon, instance.r0
    t_tail = sd.r_s / nr  # free arc from the singular point up to psi = 0
    if T < t_tail:
        return None
    if r0 == sd.r_s:
        t_pre, pre_u = 0.0, None
    elif r0 < sd.r_s:
        t_pre, pre_u = (sd.r_s - r0) / nr, 0.0
    else:
        if params.u_max <= sd.u_s:
            return None  # a u_max arc cannot reach the singular level from above
        r_eq = nr / params.u_max
        t_pre = math.log((r0 - r_eq) / (sd.r_s - r_eq)) / params.u_max
        pre_u = params.u_max
    dwell = T - t_tail - t_pre
    if dwell < 0.0:
        return None

    t1 = t_pre
    t2 = T - t_tail
    arcs: list[ExtremalArc] = []
    if pre_u is not None and t_pre > 0.0:
        if pre_u == 0.0:
            psi0 = sd.psi_s - params.alpha * t_pre
        else:
            psi_eq = -params.alpha / pre_u
            psi0 = psi_eq + (sd.psi_s - psi_eq) * math.exp(-pre_u * t_pre)
        arcs.append(ExtremalArc(params, pre_u, 0.0, t1, r0, psi0, sd.r_s, sd.psi_s))
    if dwell > 0.0:
        arcs.append(
            ExtremalArc(params, sd.u_s, t1, t2, sd.r_s, sd.psi_s, sd.r_s, sd.psi_s)
        )
    arcs.append(
        ExtremalArc(
            params, 0.0, t2, instance.horizon, sd.r_s, sd.psi_s, 2.0 * sd.r_s, 0.0
        )
    )
    return arcs, 2.0 * sd.r_s


def _bisect_terminal(
    params: ModelParams, r0: float, horizon: float, lo: float, hi: float
) -> float:
    """Terminal state with backward R(0) = r0 on [lo, hi].

    Bisection runs to the 1e-12 window and keeps halving down to float
    spacing while the R(0) residual stays above its contract: near the
    boundary of the singular family R(0) has a square-root cusp in the
    terminal state, where a fixed terminal window is not enough.
    """
    f_lo = _backward_r0(params, lo, horizon) - r0 if lo > 0 else -math.inf
    f_hi = _backward_r0(params, hi, horizon) - r0
    if f_lo > 0 or f_hi < 0:
        raise SynthesisError(
            f"no sign change on [{lo}, {hi}]: f = ({f_lo}, {f_hi})",
            scan=[(lo, f_lo + r0), (hi, f_hi + r0)],
        )
    resid_tol = SHOOT_RTOL * max(1.0, r0)
    best_rt, best_resid = hi, abs(f_hi)
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        f_mid = _backward_r0(params, mid, horizon) - r0
        if abs(f_mid) < best_resid:
            best_rt, best_resid = mid, abs(f_mid)
        if f_mid <= 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= BISECT_TOL and best_resid <= resid_tol:
            break
    return best_rt


def _shoot(instance: ProblemInstance) -> Extremal:
    """Find terminal_r with backward R(0) = r0 by bisection, falling back to a
    grid scan when the residual check fails (e.g. near a structural jump)."""
    params = instance.params
    r0, T = instance.r0, instance.horizon
    # widened so round-off at the exact zero-control root keeps f(hi) >= 0
    hi = (r0 + params.noise_rate * T) * (1.0 + 1e-9) + 1e-12
    tol = SHOOT_RTOL * max(1.0, r0)

    rt = _bisect_terminal(params, r0, T, 0.0, hi)
    orbit = backward_orbit(params, rt, T)
    if abs(orbit.r0 - r0) <= tol:
        return orbit

    # residual check failed: scan for every sign-change bracket and retry
    rts = np.linspace(0.0, hi, GRID_SCAN_POINTS)
    vals = [_backward_r0(params, float(x), T) for x in rts]
    scan = list(zip(map(float, rts), map(float, vals)))
    brackets = [
        (float(rts[i]), float(rts[i + 1]))
        for i in range(len(rts) - 1)
        if (vals[i] - r0) <= 0.0 <= (vals[i + 1] - r0)
    ]
    if len(brackets) > 1:
        logger.warning(
            "multiple shooting brackets for r0=%g, T=%g: %s", r0, T, brackets
        )
    best: Extremal | None = None
    for lo, b_hi in brackets:
        try:
            rt = _bisect_terminal(params, r0, T, lo, b_hi)
        except SynthesisError:
            continue
        cand = backward_orbit(params, rt, T)
        if best is None or abs(cand.r0 - r0) < abs(best.r0 - r0):
            best = cand
    if best is not None and abs(best.r0 - r0) <= tol:
        return best
    raise SynthesisError(
        f"shooting failed for r0={r0}, T={T}: best residual "
        f"{abs(best.r0 - r0) if best else math.inf}",
        scan=scan,
    )


def synthesize(instance: ProblemInstance) -> SynthesisResult:
    """Optimal control for one problem instance.

    Singular regime: the closed-form dwell family (pre-arc, hold at the
    singular point, free tail) is accepted whenever its dwell is
    nonnegative.  Otherwise, and always in the nonsingular regime, the
    terminal state is found by shooting; R(0) must match r0 within
    1e-9 * max(1, r0) or a SynthesisError with diagnostics is raised.
    """
    params = instance.params
    sd = singular_data(params)

    extremal: Extremal | None = None
    if sd.admissible and params.u_max > 0.0:
        family = _singular_family(instance, sd)
        if family is not None:
            arcs, terminal_r = family
            extremal = Extremal(params=params, arcs=tuple(arcs), terminal_r=terminal_r)
    if extremal is None:
        extremal = _shoot(instance)

    control = extremal.to_control().merged(MERGE_FRACTION * instance.horizon)
    regime = classify_control(control, params)
    return SynthesisResult(
        control=control,
        regime=regime,
        switch_times=control.switch_times,
        cost=dynamics.cost(instance, control),
        terminal_r=extremal.terminal_r,
        extremal=extremal,
    )


def regime_map(
    params: ModelParams,
    t_range: tuple[float, float],
    r0_range: tuple[float, float],
    grid_nt: int,
    grid_nr: int,
) -> np.ndarray:
    """Matrix of regime labels over the (T, r0) plane: entry (i, j) classifies
    the instance with T = linspace(*t_range, grid_nt)[i] and
    r0 = linspace(*r0_range, grid_nr)[j]."""
    t_lo, t_hi = t_range
    r_lo, r_hi = r0_range
    if not (0 < t_lo <= t_hi):
        raise ValueError(f"t_range must be positive and ordered, got {t_range}")
    if not (0 <= r_lo <= r_hi):
        raise ValueError(f"r0_range must be nonnegative and ordered, got {r0_range}")
    if grid_nt < 1 or grid_nr < 1:
        raise ValueError("grid dimensions must be >= 1")
    ts = np.linspace(t_lo, t_hi, grid_nt)
    r0s = np.linspace(r_lo, r_hi, grid_nr)
    labels = np.empty((grid_nt, grid_nr), dtype=object)
    for i, T in enumerate(ts):
        for j, r0 in enumerate(r0s):
            try:
                res = synthesize(ProblemInstance(params, float(r0), float(T)))
            except SynthesisError as exc:
                raise SynthesisError(
                    f"cell (i={i}, j={j}) with T={T}, r0={r0}: {exc}", exc.scan
                ) from exc
            labels[i, j] = res.regime
    return labels

"""Maximum-principle machinery for the desynchronization control problem.

Maximized Hamiltonian H(R, psi, u) = -(alpha R + beta u) + psi (-u R + N s^2)
with adjoint dynamics psi' = alpha + u psi and free-endpoint condition
psi(T) = 0.  The control enters linearly, so the sign of the switching
function H1 = -beta - R psi selects u = 0 (H1 < 0) or u = u_max (H1 > 0),
and H1 = 0 on singular arcs.

Orbits under a constant control are closed-form (lines for u = 0,
hyperbola branches for u > 0), so backward construction of extremals from
the terminal manifold psi(T) = 0 detects switching events by solving
quadratics, never by step-and-check integration.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

from .dynamics import (
    ControlSegment,
    ModelParams,
    PiecewiseControl,
    TrajectorySample,
)

__all__ = [
    "AtSwitchingCurveError",
    "SingularData",
    "ExtremalArc",
    "Extremal",
    "hamiltonian",
    "switching_h1",
    "h1_time_derivatives",
    "singular_data",
    "next_event_backward",
    "backward_orbit",
]

# on-curve detection threshold for |H1|, scaled by max(1, beta)
ON_CURVE_TOL = 1e-12
# events with |dH1/dt| below this (times the problem scale) are tangential
# touches; position error of a near-double root is O(sqrt(eps)), hence 1e-6
_TANGENT_TOL = 1e-6
_MAX_ARCS = 64


class AtSwitchingCurveError(ValueError):
    """Event search started on the switching curve; the caller must decide
    between the two bang branches or a singular capture."""


def hamiltonian(r: float, psi: float, u: float, params: ModelParams) -> float:
    """Control Hamiltonian -(alpha r + beta u) + psi(-u r + N sigma^2)."""
    return -(params.alpha * r + params.beta * u) + psi * (-u * r + params.noise_rate)


def switching_h1(r: float, psi: float, params: ModelParams) -> float:
    """Coefficient of u in the Hamiltonian: H1 = -beta - r psi."""
    return -params.beta - r * psi


def h1_time_derivatives(r: float, psi: float, params: ModelParams) -> tuple[float, float]:
    """(dH1/dt along the extremal flow, coefficient of u in d^2H1/dt^2).

    The first derivative -N s^2 psi - alpha r is control-independent; the
    u-coefficient alpha r - N s^2 psi is the Legendre-Clebsch quantity
    whose positivity admits an order-1 singular arc.
    """
    nr = params.noise_rate
    h1_dot = -nr * psi - params.alpha * r
    lc_coeff = params.alpha * r - nr * psi
    return h1_dot, lc_coeff


@dataclass(frozen=True)
class SingularData:
    """Stationary point of the switching surface and its holding control."""

    r_s: float
    psi_s: float
    u_s: float
    admissible: bool


def singular_data(params: ModelParams) -> SingularData:
    """Singular level r_s, adjoint psi_s, holding control u_s; admissible
    when u_s fits under the intensity bound."""
    nr = params.noise_rate
    r_s = math.sqrt(nr * params.beta / params.alpha)
    psi_s = -math.sqrt(params.alpha * params.beta / nr)
    u_s = math.sqrt(params.alpha * nr / params.beta)
    _, lc = h1_time_derivatives(r_s, psi_s, params)
    assert lc > 0.0  # order-1 singular arc exists for every positive parameter set
    return SingularData(r_s=r_s, psi_s=psi_s, u_s=u_s, admissible=u_s <= params.u_max)


@dataclass(frozen=True)
class ExtremalArc:
    """Closed-form (R, psi) arc under one constant control.

    Both end states are stored: R is evaluated forward from the start and
    psi backward from the end, the two contractive directions, so round-off
    never gets amplified by e^{u * duration} on long bang arcs.
    """

    params: ModelParams
    u: float
    t_start: float
    t_end: float
    r_start: float
    psi_start: float
    r_end: float
    psi_end: float

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def line_offset(self) -> float:
        """u = 0 orbit invariant C3 in psi = (alpha/N s^2) R + C3."""
        return self.psi_start - (self.params.alpha / self.params.noise_rate) * self.r_start

    @property
    def decay_coeff(self) -> float:
        """Coefficient of e^{-u t} in R(t) for u > 0 arcs."""
        return self.r_start - self.params.noise_rate / self.u

    @property
    def growth_coeff(self) -> float:
        """Coefficient of e^{+u t} in psi(t) for u > 0 arcs (vanishingly small
        on long arcs; prefer psi_end for evaluation)."""
        return self.psi_start + self.params.alpha / self.u

    @property
    def orbit_invariant(self) -> float:
        """Hyperbola invariant |alpha + psi u| * |N s^2 - u R| for u > 0 arcs,
        evaluated at the arc end where both factors are well conditioned."""
        return abs(self.params.alpha + self.psi_end * self.u) * abs(
            self.params.noise_rate - self.u * self.r_end
        )

    def r_at(self, t: float) -> float:
        tau = t - self.t_start
        if self.u == 0.0:
            return self.r_start + self.params.noise_rate * tau
        r_eq = self.params.noise_rate / self.u
        return (self.r_start - r_eq) * math.exp(-self.u * tau) + r_eq

    def psi_at(self, t: float) -> float:
        back = self.t_end - t
        if self.u == 0.0:
            return self.psi_end - self.params.alpha * back
        psi_eq = -self.params.alpha / self.u
        return (self.psi_end - psi_eq) * math.exp(-self.u * back) + psi_eq


@dataclass(frozen=True)
class Extremal:
    """Chain of arcs covering [0, T] with psi(T) = 0."""

    params: ModelParams
    arcs: tuple[ExtremalArc, ...]
    terminal_r: float

    @property
    def horizon(self) -> float:
        return self.arcs[-1].t_end

    @property
    def r0(self) -> float:
        return self.arcs[0].r_start

    def _arc_at(self, t: float) -> ExtremalArc:
        starts = [a.t_start for a in self.arcs]
        i = min(max(bisect.bisect_right(starts, t) - 1, 0), len(self.arcs) - 1)
        return self.arcs[i]

    def r_at(self, t: float) -> float:
        return self._arc_at(t).r_at(t)

    def psi_at(self, t: float) -> float:
        return self._arc_at(t).psi_at(t)

    def u_at(self, t: float) -> float:
        return self._arc_at(t).u

    def hamiltonian_at(self, t: float) -> float:
        arc = self._arc_at(t)
        return hamiltonian(arc.r_at(t), arc.psi_at(t), arc.u, self.params)

    def samples(self, n: int = 1000) -> list[TrajectorySample]:
        """n samples across [0, T], arc boundaries always included."""
        T = self.horizon
        out: list[TrajectorySample] = []
        for arc in self.arcs:
            m = max(2, int(round(n * arc.duration / T)))
            for k in range(m):
                t = arc.t_start + arc.duration * (k / (m - 1))
                if out and t <= out[-1].t:
                    continue
                out.append(TrajectorySample(t, arc.r_at(t), arc.u, arc.psi_at(t)))
        return out

    def to_control(self) -> PiecewiseControl:
        return PiecewiseControl(
            tuple(ControlSegment(a.t_start, a.t_end, a.u) for a in self.arcs)
        )


# --- backward event detection ----------------------------------------------


def _quad_roots(a: float, b: float, c: float) -> list[float]:
    """Real roots of a x^2 + b x + c, ascending; tiny negative discriminants
    (tangency hit by round-off) are clamped to a double root."""
    if a == 0.0:
        if b == 0.0:
            return []
        return [-c / b]
    disc = b * b - 4.0 * a * c
    scale = b * b + abs(4.0 * a * c)
    if disc < 0.0:
        if disc > -1e-14 * scale:
            disc = 0.0
        else:
            return []
    sq = math.sqrt(disc)
    q = -0.5 * (b + math.copysign(sq, b)) if b != 0.0 else -0.5 * sq
    if q == 0.0:
        return [0.0, 0.0] if a != 0.0 else [0.0]
    r1, r2 = q / a, c / q
    return sorted((r1, r2))


def _backward_state(
    r: float, psi: float, u: float, s: float, params: ModelParams
) -> tuple[float, float]:
    """State s time units earlier on the constant-u orbit through (r, psi).

    Difference form around the flow equilibrium keeps the evaluation well
    conditioned in both the expanding and the contracting direction.
    """
    nr = params.noise_rate
    if u == 0.0:
        return r - nr * s, psi - params.alpha * s
    r_eq, psi_eq = nr / u, -params.alpha / u
    x = u * s
    return (r - r_eq) * math.exp(x) + r_eq, (psi - psi_eq) * math.exp(-x) + psi_eq


def _backward_h1_roots(r: float, psi: float, u: float, params: ModelParams) -> list[float]:
    """Ascending positive backward times s with H1(R(-s), psi(-s)) = 0.

    u = 0: both coordinates are affine in s, so -beta - R psi is an exact
    quadratic in s.  u > 0: substituting z = e^{u s} makes z * H1 an exact
    quadratic in z.  Roots within 1e-12 of s = 0 are dropped.
    """
    nr = params.noise_rate
    h10 = switching_h1(r, psi, params)
    if u == 0.0:
        # H1(s) = h10 + (alpha r + nr psi) s - alpha nr s^2
        roots = _quad_roots(-params.alpha * nr, params.alpha * r + nr * psi, h10)
        out = [s for s in roots if s > 1e-12]
    else:
        r_eq, psi_eq = nr / u, -params.alpha / u
        a_coef = r - r_eq
        b_coef = psi - psi_eq
        qa = -a_coef * psi_eq
        qb = -(params.beta + r_eq * psi_eq + a_coef * b_coef)
        qc = -r_eq * b_coef
        out = []
        for z in _quad_roots(qa, qb, qc):
            if z <= 0.0:
                continue
            s = math.log(z) / u
            if s > 1e-12:
                out.append(s)
        out.sort()
    # collapse double roots
    dedup: list[float] = []
    for s in out:
        if not dedup or s - dedup[-1] > 1e-12:
            dedup.append(s)
    return dedup


def next_event_backward(
    r: float, psi: float, u: float, params: ModelParams
) -> float | None:
    """Smallest backward time at which the constant-u orbit through (r, psi)
    meets the switching curve, or None if it never does.

    The start point must lie off the curve; a start with |H1| below the
    on-curve tolerance raises AtSwitchingCurveError so the caller can apply
    its singular-capture rule.
    """
    if u != 0.0 and u != params.u_max:
        raise ValueError(f"u must be 0 or u_max = {params.u_max}, got {u}")
    if abs(switching_h1(r, psi, params)) < ON_CURVE_TOL * max(1.0, params.beta):
        raise AtSwitchingCurveError(
            f"(r, psi) = ({r}, {psi}) lies on the switching curve"
        )
    roots = _backward_h1_roots(r, psi, u, params)
    return roots[0] if roots else None


# --- backward orbit construction --------------------------------------------


def _backward_arcs(
    params: ModelParams,
    terminal_r: float,
    horizon: float,
    singular_dwell: float = 0.0,
    incoming_u: float | None = None,
) -> list[tuple[float, float, float, float, float, float, float]]:
    """Arc tuples (u, t_start, t_end, r_start, psi_start, r_end, psi_end) of
    the backward extremal from (terminal_r, 0) at time T, in forward order."""
    if not terminal_r >= 0:
        raise ValueError(f"terminal_r must be >= 0, got {terminal_r}")
    if not horizon > 0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    if singular_dwell < 0:
        raise ValueError(f"singular_dwell must be >= 0, got {singular_dwell}")
    if incoming_u is not None and incoming_u != 0.0 and incoming_u != params.u_max:
        raise ValueError(f"incoming_u must be 0 or u_max, got {incoming_u}")

    sd = singular_data(params)
    hdot_scale = 2.0 * math.sqrt(params.alpha * params.beta * params.noise_rate)
    arcs_rev: list[tuple[float, float, float, float, float, float, float]] = []
    t_cur = horizon
    r, psi = terminal_r, 0.0
    u = 0.0  # H1(T) = -beta < 0 pins the terminal control
    dwell_left = singular_dwell
    captured = False

    def emit(u_arc: float, dur: float, r_end: float, psi_end: float) -> tuple[float, float]:
        nonlocal t_cur
        r_b, psi_b = _backward_state(r_end, psi_end, u_arc, dur, params)
        arcs_rev.append((u_arc, t_cur - dur, t_cur, r_b, psi_b, r_end, psi_end))
        t_cur -= dur
        return r_b, psi_b

    while t_cur > 1e-15 * horizon:
        if len(arcs_rev) >= _MAX_ARCS:
            raise RuntimeError(
                f"backward orbit exceeded {_MAX_ARCS} arcs; terminal_r={terminal_r}"
            )
        if params.u_max == 0.0:
            # both bang values coincide: one free arc to t = 0
            r, psi = emit(0.0, t_cur, r, psi)
            break
        event_s = None
        event_kind = "none"
        re = pe = hdot = 0.0
        for s in _backward_h1_roots(r, psi, u, params):
            if s >= t_cur - 1e-15 * horizon:
                break
            re, pe = _backward_state(r, psi, u, s, params)
            hdot, _ = h1_time_derivatives(re, pe, params)
            if abs(hdot) <= _TANGENT_TOL * hdot_scale:
                # tangential touch at the singular point
                if sd.admissible and (dwell_left > 0.0 or incoming_u is not None):
                    event_s, event_kind = s, "capture"
                    break
                continue  # grazing: same control continues through the touch
            event_s, event_kind = s, "switch"
            break

        if event_s is None:
            r, psi = emit(u, t_cur, r, psi)
            break
        if event_kind == "switch":
            r, psi = emit(u, event_s, r, psi)
            u = params.u_max if -hdot > 0 else 0.0
            continue
        # singular capture: land exactly on the singular point, hold, leave
        emit(u, event_s, r, psi)
        r, psi = sd.r_s, sd.psi_s
        captured = True
        dwell = min(dwell_left, t_cur)
        dwell_left -= dwell
        if dwell > 0.0:
            arcs_rev.append(
                (sd.u_s, t_cur - dwell, t_cur, sd.r_s, sd.psi_s, sd.r_s, sd.psi_s)
            )
            t_cur -= dwell
        if t_cur <= 1e-15 * horizon:
            break
        if incoming_u is None:
            raise ValueError(
                "orbit leaves the singular point before t = 0; incoming_u is required"
            )
        u = incoming_u

    if singular_dwell > 0.0 and not captured:
        raise ValueError(
            "singular_dwell > 0 but the backward orbit never reaches the singular point"
        )
    arcs = list(reversed(arcs_rev))
    # snap the first boundary onto t = 0 exactly
    if arcs:
        u0, _, t_end0, r0a, psi0a, r1a, psi1a = arcs[0]
        arcs[0] = (u0, 0.0, t_end0, r0a, psi0a, r1a, psi1a)
    return arcs


def backward_orbit(
    params: ModelParams,
    terminal_r: float,
    horizon: float,
    singular_dwell: float = 0.0,
    incoming_u: float | None = None,
) -> Extremal:
    """Extremal ending at (R, psi) = (terminal_r, 0) at time T, built backward
    with the bang feedback u = 0 for H1 < 0 and u = u_max for H1 > 0.

    If the orbit reaches the singular point it holds there for
    singular_dwell time units with u = u_s and then continues backward on
    the branch selected by incoming_u (0 or u_max).  A positive dwell for an
    orbit that never reaches the singular point is rejected.
    """
    tuples = _backward_arcs(params, terminal_r, horizon, singular_dwell, incoming_u)
    arcs = tuple(
        ExtremalArc(params, u, a, b, r0, psi0, r1, psi1)
        for (u, a, b, r0, psi0, r1, psi1) in tuples
    )
    return Extremal(params=params, arcs=arcs, terminal_r=terminal_r)


def _backward_r0(
    params: ModelParams, terminal_r: float, horizon: float
) -> float:
    """R(0) of the plain (dwell-free) backward extremal; shooting hot path."""
    return _backward_arcs(params, terminal_r, horizon)[0][3]

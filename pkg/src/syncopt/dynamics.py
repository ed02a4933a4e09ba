"""Problem data model and closed-form trajectory/cost evaluation.

The controlled desynchronization level R obeys dR/dt = -u(t) R + N sigma^2.
Every control handled by this package is piecewise constant, so state
propagation and the running-cost integral reduce to exponential/affine
closed forms; nothing here steps an ODE.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Sequence

__all__ = [
    "InvalidControlError",
    "ModelParams",
    "ProblemInstance",
    "ControlSegment",
    "PiecewiseControl",
    "TrajectorySample",
    "propagate_r",
    "segment_cost",
    "integrate_control",
    "cost",
    "r_at_times",
]


class InvalidControlError(ValueError):
    """A control does not cover the horizon or breaks the intensity bounds."""


@dataclass(frozen=True)
class ModelParams:
    """Model and cost constants for one network.

    alpha      weight of the accumulated desynchronization cost
    beta       weight of the transmission energy
    n_clients  number of client nodes
    sigma_sq   per-client clock noise variance rate
    u_max      upper bound on the transmission intensity
    drift      common clock rate; only absolute clocks in the simulator use it
    """

    alpha: float
    beta: float
    n_clients: int
    sigma_sq: float
    u_max: float
    drift: float = 1.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be a positive finite number, got {self.alpha}")
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be a positive finite number, got {self.beta}")
        if not (isinstance(self.n_clients, int) and self.n_clients >= 1):
            raise ValueError(f"n_clients must be an integer >= 1, got {self.n_clients!r}")
        if not (math.isfinite(self.sigma_sq) and self.sigma_sq > 0):
            raise ValueError(f"sigma_sq must be a positive finite number, got {self.sigma_sq}")
        if not (math.isfinite(self.u_max) and self.u_max >= 0):
            raise ValueError(f"u_max must be a nonnegative finite number, got {self.u_max}")
        if not math.isfinite(self.drift):
            raise ValueError(f"drift must be finite, got {self.drift}")

    @property
    def noise_rate(self) -> float:
        """Total variance growth rate N*sigma^2 of the summed squared offsets."""
        return self.n_clients * self.sigma_sq


@dataclass(frozen=True)
class ProblemInstance:
    """One solvable problem: model constants plus initial state and horizon."""

    params: ModelParams
    r0: float
    horizon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.r0) and self.r0 >= 0):
            raise ValueError(f"r0 must be a nonnegative finite number, got {self.r0}")
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError(f"horizon must be a positive finite number, got {self.horizon}")


@dataclass(frozen=True)
class ControlSegment:
    """Constant intensity u applied on [t_start, t_end)."""

    t_start: float
    t_end: float
    u: float

    def __post_init__(self) -> None:
        if not self.t_end > self.t_start:
            raise ValueError(
                f"segment must have t_end > t_start, got [{self.t_start}, {self.t_end}]"
            )
        if not (math.isfinite(self.u) and self.u >= 0):
            raise ValueError(f"segment intensity must be >= 0, got {self.u}")

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class PiecewiseControl:
    """Ordered constant-control segments partitioning [0, T].

    Adjacent segments must be exactly contiguous (shared boundary floats);
    all constructors in this package reuse the same boundary value on both
    sides, so equality is exact, not approximate.
    """

    segments: tuple[ControlSegment, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValueError("control must have at least one segment")
        if self.segments[0].t_start != 0.0:
            raise ValueError(
                f"first segment must start at t = 0, got {self.segments[0].t_start}"
            )
        for a, b in zip(self.segments, self.segments[1:]):
            if a.t_end != b.t_start:
                raise ValueError(
                    f"segments must be contiguous: {a.t_end} != {b.t_start}"
                )

    @classmethod
    def from_constant(cls, u: float, horizon: float) -> "PiecewiseControl":
        return cls((ControlSegment(0.0, horizon, u),))

    @classmethod
    def from_switch_times(
        cls, values: Sequence[float], times: Sequence[float], horizon: float
    ) -> "PiecewiseControl":
        """Build from a value sequence and interior switch times; zero-length
        pieces (coincident switch times) are dropped."""
        bounds = [0.0, *times, horizon]
        segs = []
        for v, a, b in zip(values, bounds, bounds[1:]):
            if b > a:
                segs.append(ControlSegment(a, b, v))
        return cls(tuple(segs))

    @property
    def horizon(self) -> float:
        return self.segments[-1].t_end

    @property
    def values(self) -> tuple[float, ...]:
        return tuple(s.u for s in self.segments)

    @property
    def switch_times(self) -> tuple[float, ...]:
        return tuple(s.t_start for s in self.segments[1:])

    def value_at(self, t: float) -> float:
        """Intensity at time t; right-continuous, with u(T) = last value."""
        if t >= self.segments[-1].t_start:
            return self.segments[-1].u
        starts = [s.t_start for s in self.segments]
        return self.segments[bisect.bisect_right(starts, t) - 1].u

    def merged(self, min_length: float = 0.0) -> "PiecewiseControl":
        """Drop segments shorter than min_length (absorbing their span into the
        next surviving segment) and merge adjacent equal-valued segments."""
        kept: list[list[float]] = []
        pending_start: float | None = None
        for seg in self.segments:
            start = pending_start if pending_start is not None else seg.t_start
            if seg.t_end - start <= min_length and seg is not self.segments[-1]:
                pending_start = start
                continue
            pending_start = None
            if kept and kept[-1][2] == seg.u:
                kept[-1][1] = seg.t_end
            else:
                kept.append([start, seg.t_end, seg.u])
        # a trailing short segment extends the previous one instead
        if len(kept) >= 2 and kept[-1][1] - kept[-1][0] <= min_length:
            kept[-2][1] = kept[-1][1]
            kept.pop()
        return PiecewiseControl(tuple(ControlSegment(a, b, u) for a, b, u in kept))

    def to_dicts(self) -> list[dict]:
        return [{"t_start": s.t_start, "t_end": s.t_end, "u": s.u} for s in self.segments]

    @classmethod
    def from_dicts(cls, rows: Sequence[dict]) -> "PiecewiseControl":
        return cls(tuple(ControlSegment(r["t_start"], r["t_end"], r["u"]) for r in rows))


@dataclass(frozen=True)
class TrajectorySample:
    """State sample along a trajectory; psi is set only on PMP extremals."""

    t: float
    r: float
    u: float
    psi: float | None = None


# --- exponential-integrator coefficients -----------------------------------
#
# phi1(x) = (1 - e^-x)/x and phi2(x) = (x - 1 + e^-x)/x^2 express the exact
# constant-control solution without cancellation for small u*dt.

_PHI2_CUTOFF = 1e-2


def _phi1(x: float) -> float:
    if x == 0.0:
        return 1.0
    return -math.expm1(-x) / x


def _phi2(x: float) -> float:
    if abs(x) < _PHI2_CUTOFF:
        return 0.5 - x / 6.0 + x**2 / 24.0 - x**3 / 120.0 + x**4 / 720.0 - x**5 / 5040.0
    return (x + math.expm1(-x)) / (x * x)


def _phi1_growth(x: float) -> float:
    # (e^x - 1)/x
    if x == 0.0:
        return 1.0
    return math.expm1(x) / x


def propagate_r(r_start: float, u: float, dt: float, params: ModelParams) -> float:
    """Exact R(dt) for dR/dt = -u R + N sigma^2 with constant u, R(0) = r_start.

    u = 0 reduces to the affine form r_start + N sigma^2 dt; u > 0 to the
    exponential relaxation toward N sigma^2 / u.
    """
    if not dt >= 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    if not r_start >= 0:
        raise ValueError(f"r_start must be >= 0, got {r_start}")
    if not 0.0 <= u <= params.u_max:
        raise ValueError(f"u must lie in [0, {params.u_max}], got {u}")
    x = u * dt
    return r_start * math.exp(-x) + params.noise_rate * dt * _phi1(x)


def segment_cost(r_start: float, u: float, dt: float, params: ModelParams) -> float:
    """Exact integral of alpha*R(t) + beta*u over one constant-control piece."""
    if not dt >= 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    if not 0.0 <= u <= params.u_max:
        raise ValueError(f"u must lie in [0, {params.u_max}], got {u}")
    x = u * dt
    state_integral = r_start * dt * _phi1(x) + params.noise_rate * dt * dt * _phi2(x)
    return params.alpha * state_integral + params.beta * u * dt


def _check_cover(instance: ProblemInstance, control: PiecewiseControl) -> None:
    tol = 1e-9 * max(1.0, instance.horizon)
    if abs(control.horizon - instance.horizon) > tol:
        raise InvalidControlError(
            f"control covers [0, {control.horizon}], expected horizon {instance.horizon}"
        )
    u_tol = 1e-12 * max(1.0, instance.params.u_max)
    for seg in control.segments:
        if seg.u > instance.params.u_max + u_tol:
            raise InvalidControlError(
                f"segment intensity {seg.u} exceeds u_max = {instance.params.u_max}"
            )


def integrate_control(
    instance: ProblemInstance,
    control: PiecewiseControl,
    samples_per_segment: int = 20,
) -> list[TrajectorySample]:
    """Trajectory of R under a piecewise-constant control, sampled on every
    segment with both endpoints included (shared boundaries appear once,
    carrying the upcoming segment's intensity)."""
    if samples_per_segment < 1:
        raise ValueError(f"samples_per_segment must be >= 1, got {samples_per_segment}")
    _check_cover(instance, control)
    params = instance.params
    samples: list[TrajectorySample] = []
    r = instance.r0
    for seg in control.segments:
        u = min(seg.u, params.u_max)
        if not samples:
            samples.append(TrajectorySample(seg.t_start, r, u))
        else:
            last = samples[-1]
            samples[-1] = TrajectorySample(last.t, last.r, u, last.psi)
        for k in range(1, samples_per_segment + 1):
            tau = seg.duration * (k / samples_per_segment)
            samples.append(TrajectorySample(seg.t_start + tau, propagate_r(r, u, tau, params), u))
        r = samples[-1].r
    return samples


def cost(instance: ProblemInstance, control: PiecewiseControl) -> float:
    """Total cost J(u) = integral of alpha*R + beta*u, exact per segment."""
    _check_cover(instance, control)
    params = instance.params
    total = 0.0
    r = instance.r0
    for seg in control.segments:
        u = min(seg.u, params.u_max)
        total += segment_cost(r, u, seg.duration, params)
        r = propagate_r(r, u, seg.duration, params)
    return total


def r_at_times(
    instance: ProblemInstance, control: PiecewiseControl, times: Sequence[float]
) -> list[float]:
    """Exact R at arbitrary times in [0, T] under the given control."""
    _check_cover(instance, control)
    params = instance.params
    starts = [s.t_start for s in control.segments]
    seg_r = [instance.r0]
    for seg in control.segments[:-1]:
        seg_r.append(propagate_r(seg_r[-1], min(seg.u, params.u_max), seg.duration, params))
    out = []
    tol = 1e-9 * max(1.0, instance.horizon)
    for t in times:
        if t < -tol or t > instance.horizon + tol:
            raise ValueError(f"time {t} outside [0, {instance.horizon}]")
        i = min(bisect.bisect_right(starts, t) - 1, len(starts) - 1)
        i = max(i, 0)
        seg = control.segments[i]
        tau = min(max(t - seg.t_start, 0.0), seg.duration)
        out.append(propagate_r(seg_r[i], min(seg.u, params.u_max), tau, params))
    return out

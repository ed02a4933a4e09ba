"""Shared helpers: random instance suites and independent numerical oracles."""

from __future__ import annotations

import math

import numpy as np

from syncopt import ModelParams, PiecewiseControl, ProblemInstance

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def random_params(rng: np.random.Generator, regime: str) -> ModelParams:
    """Parameter draw in the requested regime ('singular' or 'nonsingular')."""
    alpha = float(rng.uniform(0.5, 2.0))
    beta = float(rng.uniform(0.5, 2.0))
    n = int(rng.integers(1, 9))
    sigma_sq = float(rng.uniform(0.5, 2.0))
    u_s = math.sqrt(alpha * n * sigma_sq / beta)
    if regime == "singular":
        u_max = u_s * float(rng.uniform(1.05, 3.0))
    elif regime == "nonsingular":
        u_max = u_s * float(rng.uniform(0.25, 0.95))
    else:
        raise ValueError(regime)
    return ModelParams(alpha=alpha, beta=beta, n_clients=n, sigma_sq=sigma_sq, u_max=u_max)


def random_instance(rng: np.random.Generator, regime: str) -> ProblemInstance:
    params = random_params(rng, regime)
    r_s = math.sqrt(params.noise_rate * params.beta / params.alpha)
    r0 = float(rng.uniform(0.0, 3.0 * r_s))
    t_scale = r_s / params.noise_rate
    horizon = float(rng.uniform(0.3, 4.0) * t_scale + rng.uniform(0.0, 1.0))
    return ProblemInstance(params, r0=r0, horizon=horizon)


def rk4_propagate(r0: float, u: float, dt: float, noise_rate: float, n_steps: int = 20000) -> float:
    """Fixed-step RK4 integration of dR/dt = -u R + noise_rate."""

    def f(r: float) -> float:
        return -u * r + noise_rate

    h = dt / n_steps
    r = r0
    for _ in range(n_steps):
        k1 = f(r)
        k2 = f(r + 0.5 * h * k1)
        k3 = f(r + 0.5 * h * k2)
        k4 = f(r + h * k3)
        r += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return r


def segment_r_values(r_start: float, u: float, noise_rate: float, tau: np.ndarray) -> np.ndarray:
    """Vectorized exact R(tau) on one constant-control segment."""
    x = u * tau
    with np.errstate(divide="ignore", invalid="ignore"):
        phi1 = np.where(x == 0.0, 1.0, -np.expm1(-x) / np.where(x == 0.0, 1.0, x))
    return r_start * np.exp(-x) + noise_rate * tau * phi1


def trapezoid_cost(instance: ProblemInstance, control: PiecewiseControl, step: float) -> float:
    """Fixed-step trapezoid quadrature of alpha*R + beta*u, segment by segment."""
    params = instance.params
    total = 0.0
    r = instance.r0
    for seg in control.segments:
        n = max(2, int(math.ceil(seg.duration / step)))
        tau = np.linspace(0.0, seg.duration, n + 1)
        rv = segment_r_values(r, seg.u, params.noise_rate, tau)
        total += float(_trapezoid(params.alpha * rv + params.beta * seg.u, tau))
        r = float(rv[-1])
    return total

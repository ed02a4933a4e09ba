import math

import numpy as np
import pytest

import syncopt.pmp as pmp
from conftest import random_params
from syncopt import (
    AtSwitchingCurveError,
    ModelParams,
    backward_orbit,
    h1_time_derivatives,
    hamiltonian,
    next_event_backward,
    singular_data,
    switching_h1,
)


def ones_params(u_max=2.0, alpha=1.0, beta=1.0, n=1, sigma_sq=1.0):
    return ModelParams(alpha=alpha, beta=beta, n_clients=n, sigma_sq=sigma_sq, u_max=u_max)


def bisect_first_h1_zero(r, psi, u, params, s_max, n_grid=20000):
    """Independent event oracle: dense sign scan of H1 along the backward
    orbit followed by bisection."""
    grid = np.linspace(0.0, s_max, n_grid)
    vals = [
        switching_h1(*pmp._backward_state(r, psi, u, float(s), params), params)
        for s in grid
    ]
    bracket = None
    for i in range(n_grid - 1):
        if vals[i + 1] == 0.0 or (vals[i] > 0) != (vals[i + 1] > 0):
            bracket = (float(grid[i]), float(grid[i + 1]))
            break
    if bracket is None:
        return None
    lo, hi = bracket
    f_lo = switching_h1(*pmp._backward_state(r, psi, u, lo, params), params)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = switching_h1(*pmp._backward_state(r, psi, u, mid, params), params)
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return 0.5 * (lo + hi)


class TestHamiltonian:
    def test_substitution(self):
        p = ones_params()
        assert hamiltonian(1.0, 0.0, 0.0, p) == -1.0

    def test_u_independent_at_singular_point(self):
        p = ones_params()
        sd = singular_data(p)
        values = {hamiltonian(sd.r_s, sd.psi_s, u, p) for u in (0.0, 0.7, 2.0)}
        assert max(values) - min(values) < 1e-14

    def test_substitution_full(self):
        p = ones_params()
        assert hamiltonian(2.0, 1.0, 1.0, p) == -4.0


class TestSwitchingFunction:
    def test_zero_at_singular_point(self):
        assert switching_h1(1.0, -1.0, ones_params()) == 0.0

    def test_negative_value(self):
        assert switching_h1(2.0, 1.0, ones_params()) == -3.0

    def test_positive_selects_bang(self):
        h1 = switching_h1(3.0, -1.0, ones_params())
        assert h1 == 2.0 and h1 > 0  # bang control u_max applies


class TestH1Derivatives:
    def test_zero_at_singular_point(self):
        p = ones_params()
        sd = singular_data(p)
        h1_dot, _ = h1_time_derivatives(sd.r_s, sd.psi_s, p)
        assert abs(h1_dot) < 1e-14

    def test_lc_coefficient_at_singular_point(self):
        p = ones_params()
        sd = singular_data(p)
        _, lc = h1_time_derivatives(sd.r_s, sd.psi_s, p)
        assert lc == pytest.approx(2.0, rel=1e-14)
        assert lc == pytest.approx(
            2.0 * math.sqrt(p.alpha * p.beta * p.noise_rate), rel=1e-14
        )

    def test_zero_adjoint_case(self):
        p = ones_params(alpha=3.0)
        h1_dot, _ = h1_time_derivatives(1.0, 0.0, p)
        assert h1_dot == -3.0

    def test_matches_finite_difference_along_extremal(self):
        p = ones_params(u_max=1.0, alpha=4.0)  # nonsingular
        orbit = backward_orbit(p, terminal_r=6.0, horizon=2.0)
        h = 1e-5
        for t in np.linspace(0.05, 1.95, 40):
            arc = orbit._arc_at(float(t))
            if t - h < arc.t_start or t + h > arc.t_end:
                continue
            fd = (
                switching_h1(orbit.r_at(t + h), orbit.psi_at(t + h), p)
                - switching_h1(orbit.r_at(t - h), orbit.psi_at(t - h), p)
            ) / (2 * h)
            h1_dot, _ = h1_time_derivatives(orbit.r_at(t), orbit.psi_at(t), p)
            assert fd == pytest.approx(h1_dot, abs=1e-6)


class TestSingularData:
    def test_unit_parameters(self):
        sd = singular_data(ones_params())
        assert (sd.r_s, sd.psi_s, sd.u_s) == (1.0, -1.0, 1.0)
        assert sd.admissible

    def test_scaled_parameters(self):
        sd = singular_data(ones_params(alpha=4.0, u_max=3.0))
        assert sd.r_s == pytest.approx(0.5, rel=1e-15)
        assert sd.psi_s == pytest.approx(-2.0, rel=1e-15)
        assert sd.u_s == pytest.approx(2.0, rel=1e-15)

    def test_inadmissible_when_bound_too_small(self):
        sd = singular_data(ones_params(u_max=0.5))
        assert not sd.admissible

    def test_identities_random_draws(self):
        rng = np.random.default_rng(10)
        for _ in range(1000):
            p = random_params(rng, "singular" if rng.random() < 0.5 else "nonsingular")
            sd = singular_data(p)
            assert sd.r_s * sd.psi_s == pytest.approx(-p.beta, rel=1e-14)
            assert sd.u_s * sd.r_s == pytest.approx(p.noise_rate, rel=1e-14)
            _, lc = h1_time_derivatives(sd.r_s, sd.psi_s, p)
            assert lc > 0.0


class TestNextEventBackward:
    def test_no_crossing_negative_discriminant(self):
        p = ones_params()
        assert next_event_backward(0.5, 0.0, 0.0, p) is None

    def test_continuity_near_curve(self):
        p = ones_params()
        prev = None
        for eps in (1e-2, 1e-4, 1e-6, 1e-8):
            r = 2.0
            psi = (-p.beta + eps) / r  # H1 = -eps, just above the curve
            dt = next_event_backward(r, psi, 0.0, p)
            assert dt is not None
            if prev is not None:
                assert dt < prev
            prev = dt
        assert prev < 1e-7

    def test_on_curve_raises(self):
        p = ones_params()
        with pytest.raises(AtSwitchingCurveError):
            next_event_backward(1.0, -1.0, 0.0, p)

    def test_rejects_interior_control(self):
        with pytest.raises(ValueError):
            next_event_backward(1.0, 0.0, 0.7, ones_params())

    def test_u0_matches_bisection(self):
        rng = np.random.default_rng(11)
        hits = 0
        for k in range(200):
            p = random_params(rng, "nonsingular")
            r = float(rng.uniform(0.1, 6.0))
            if k % 2 == 0:
                psi = float(rng.uniform(-2.0, 0.0))
            else:
                # just above the curve, where backward crossings are common
                psi = (-p.beta + float(rng.uniform(0.01, 0.5))) / r
            if switching_h1(r, psi, p) >= -1e-6:
                continue
            dt = next_event_backward(r, psi, 0.0, p)
            oracle = bisect_first_h1_zero(r, psi, 0.0, p, s_max=20.0)
            if dt is None:
                assert oracle is None or oracle > 19.0
            else:
                assert oracle is not None
                assert dt == pytest.approx(oracle, abs=1e-9)
                hits += 1
        assert hits > 30

    def test_umax_matches_bisection(self):
        rng = np.random.default_rng(12)
        hits = 0
        for _ in range(200):
            p = random_params(rng, "nonsingular")
            r = float(rng.uniform(0.1, 6.0))
            psi = float(rng.uniform(-3.0, 0.0))
            if switching_h1(r, psi, p) <= 1e-6:
                continue
            dt = next_event_backward(r, psi, p.u_max, p)
            oracle = bisect_first_h1_zero(r, psi, p.u_max, p, s_max=8.0)
            if dt is None or dt > 8.0:
                assert oracle is None
            else:
                assert oracle is not None
                assert dt == pytest.approx(oracle, abs=1e-9)
                hits += 1
        assert hits > 30


class TestBackwardOrbit:
    def test_single_arc_to_zero(self):
        orbit = backward_orbit(ones_params(), terminal_r=0.5, horizon=0.5)
        assert len(orbit.arcs) == 1
        assert orbit.arcs[0].u == 0.0
        assert orbit.r0 == pytest.approx(0.0, abs=1e-14)

    def test_transversality_always_holds(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            regime = "singular" if rng.random() < 0.5 else "nonsingular"
            p = random_params(rng, regime)
            sd = singular_data(p)
            r_t = float(rng.uniform(0.0, 6.0 * sd.r_s))
            horizon = float(rng.uniform(0.2, 4.0))
            orbit = backward_orbit(p, r_t, horizon)
            assert orbit.psi_at(horizon) == pytest.approx(0.0, abs=1e-10)
            assert orbit.arcs[0].t_start == 0.0
            assert orbit.arcs[-1].t_end == horizon
            assert orbit.arcs[-1].u == 0.0  # H1(T) = -beta < 0
            # arc chain continuous, boundaries on the switching curve
            for a, b in zip(orbit.arcs, orbit.arcs[1:]):
                assert a.r_at(a.t_end) == pytest.approx(b.r_start, rel=1e-9, abs=1e-12)
                assert a.psi_at(a.t_end) == pytest.approx(b.psi_start, rel=1e-9, abs=1e-12)
                assert abs(switching_h1(b.r_start, b.psi_start, p)) <= 1e-9 * max(1.0, p.beta)

    def test_hamiltonian_constant_along_orbit(self):
        rng = np.random.default_rng(14)
        for _ in range(20):
            regime = "singular" if rng.random() < 0.5 else "nonsingular"
            p = random_params(rng, regime)
            sd = singular_data(p)
            orbit = backward_orbit(
                p, float(rng.uniform(0.0, 5.0 * sd.r_s)), float(rng.uniform(0.3, 3.0))
            )
            hs = [
                orbit.hamiltonian_at(float(t))
                for t in np.linspace(0.0, orbit.horizon, 1000)
            ]
            spread = max(hs) - min(hs)
            assert spread <= 1e-9 * max(abs(h) for h in hs)

    def test_orbit_arc_invariants(self):
        rng = np.random.default_rng(15)
        for _ in range(30):
            p = random_params(rng, "nonsingular")
            sd = singular_data(p)
            orbit = backward_orbit(
                p, float(rng.uniform(2.0, 6.0) * sd.r_s), float(rng.uniform(0.5, 3.0))
            )
            for arc in orbit.arcs:
                ts = np.linspace(arc.t_start, arc.t_end, 50)
                if arc.u == 0.0:
                    c3 = [
                        arc.psi_at(float(t)) - (p.alpha / p.noise_rate) * arc.r_at(float(t))
                        for t in ts
                    ]
                    assert max(c3) - min(c3) <= 1e-12 * max(1.0, abs(c3[0]))
                else:
                    omega = [
                        abs(p.alpha + arc.psi_at(float(t)) * arc.u)
                        * abs(p.noise_rate - arc.u * arc.r_at(float(t)))
                        for t in ts
                    ]
                    scale = max(abs(w) for w in omega)
                    if scale > 1e-12:
                        assert max(omega) - min(omega) <= 1e-9 * scale
                    assert omega[0] == pytest.approx(arc.orbit_invariant, rel=1e-9, abs=1e-12)

    def test_tangency_is_the_singular_point(self):
        p = ones_params(u_max=2.0)
        sd = singular_data(p)
        # the free backward arc from terminal_r = 2 r_s grazes the singular point
        r_t = 2.0 * sd.r_s
        s_touch = sd.r_s / p.noise_rate
        r_g, psi_g = pmp._backward_state(r_t, 0.0, 0.0, s_touch, p)
        assert r_g == pytest.approx(sd.r_s, rel=1e-12)
        assert psi_g == pytest.approx(sd.psi_s, rel=1e-12)
        assert abs(switching_h1(r_g, psi_g, p)) < 1e-12
        h1_dot, _ = h1_time_derivatives(r_g, psi_g, p)
        assert abs(h1_dot) < 1e-12

    def test_singular_capture_with_dwell(self):
        p = ones_params(u_max=2.0)
        sd = singular_data(p)
        orbit = backward_orbit(
            p, 2.0 * sd.r_s, horizon=3.0, singular_dwell=0.8, incoming_u=0.0
        )
        kinds = [a.u for a in orbit.arcs]
        assert kinds == [0.0, sd.u_s, 0.0]
        dwell_arc = orbit.arcs[1]
        assert dwell_arc.duration == pytest.approx(0.8, rel=1e-12)
        for t in np.linspace(dwell_arc.t_start, dwell_arc.t_end, 20):
            assert orbit.r_at(float(t)) == pytest.approx(sd.r_s, abs=1e-12)
            assert abs(switching_h1(orbit.r_at(float(t)), orbit.psi_at(float(t)), p)) <= 1e-12

    def test_singular_capture_bang_incoming(self):
        p = ones_params(u_max=2.0)
        sd = singular_data(p)
        orbit = backward_orbit(
            p, 2.0 * sd.r_s, horizon=3.0, singular_dwell=0.8, incoming_u=p.u_max
        )
        assert [a.u for a in orbit.arcs] == [p.u_max, sd.u_s, 0.0]
        # the bang pre-arc approaches the singular level from above
        assert orbit.r0 > sd.r_s

    def test_dwell_without_capture_rejected(self):
        p = ones_params(u_max=2.0)
        with pytest.raises(ValueError):
            backward_orbit(p, 0.3, horizon=0.4, singular_dwell=0.5, incoming_u=0.0)

    def test_dwell_requires_incoming_branch(self):
        p = ones_params(u_max=2.0)
        sd = singular_data(p)
        with pytest.raises(ValueError, match="incoming"):
            backward_orbit(p, 2.0 * sd.r_s, horizon=3.0, singular_dwell=0.5)

    def test_grazing_without_dwell_continues_free_arc(self):
        # nonsingular: tangency is not a switch, the free arc continues
        p = ones_params(alpha=4.0, u_max=1.0)
        sd = singular_data(p)
        assert not sd.admissible
        orbit = backward_orbit(p, 2.0 * sd.r_s, horizon=2.0)
        assert [a.u for a in orbit.arcs] == [0.0]

    def test_umax_zero_single_arc(self):
        p = ones_params(u_max=0.0)
        orbit = backward_orbit(p, 3.0, horizon=1.0)
        assert [a.u for a in orbit.arcs] == [0.0]
        assert orbit.r0 == pytest.approx(2.0, rel=1e-14)

    def test_to_control_round_trip(self):
        p = ones_params(alpha=4.0, u_max=1.0)
        orbit = backward_orbit(p, 6.0, horizon=2.0)
        control = orbit.to_control()
        assert control.horizon == 2.0
        assert control.values == tuple(a.u for a in orbit.arcs)

    def test_samples_include_boundaries(self):
        p = ones_params(alpha=4.0, u_max=1.0)
        orbit = backward_orbit(p, 6.0, horizon=2.0)
        times = {s.t for s in orbit.samples(100)}
        for arc in orbit.arcs:
            assert arc.t_start in times
            assert arc.t_end in times

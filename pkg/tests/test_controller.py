import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hacsim.controller import (LIMITER_OFF, LimiterParams, angle_feedback_explicit,
                               angle_feedback_implicit, atan_rate, control_step,
                               dc_current_ref, disturbance_d, effective_mu,
                               feedforward_delta, feedforward_refs, hac_rate,
                               implicit_feedback_formula, limiter_delta_mu,
                               relative_angle_measurement, u_sw)
from hacsim.mathkit import DomainError, PreconditionError, psi
from hacsim.plant import current_magnitude_rhs, power_flows


def test_table1_controller(pp, hp):
    assert (hp.eta, hp.gamma, hp.kappa, hp.i_r, hp.theta_r) == (0.01, 1e4, 2.0, 0.0, 0.0)
    assert hp.v_dc_r == 3 * pp.v_r
    assert hp.mu_r == pytest.approx(2 / 3, rel=1e-15)
    assert hp.psi_theta_r == (1.0, 0.0)


def test_param_validation(hp):
    for bad in ({"eta": -1.0}, {"mu_r": 0.0}, {"mu_r": 1.5}, {"kappa": 0.0},
                {"feedback_mode": "pid"}, {"gamma": -1.0}):
        with pytest.raises(ValueError):
            hp.with_(**bad)
    with pytest.raises(ValueError):
        LimiterParams(d_min=1.0)
    with pytest.raises(ValueError):
        LimiterParams(beta=0.0)


def test_dc_current_ref(hp):
    assert dc_current_ref(hp.v_dc_r, hp) == hp.i_r
    assert dc_current_ref(hp.v_dc_r + 10, hp) == pytest.approx(-20.0)
    v = np.linspace(2000, 3000, 50)
    assert np.all(np.diff([dc_current_ref(x, hp) for x in v]) < 0)


def test_explicit_feedback_values():
    assert angle_feedback_explicit(0.7, 0.7) == 0.0
    assert abs(angle_feedback_explicit(0.7 + 2 * math.pi, 0.7)) < 1e-15
    assert angle_feedback_explicit(math.pi, 0.0) == 1.0


def test_relative_measurement(rng):
    assert relative_angle_measurement(psi(0.4), psi(0.4)) == pytest.approx((1.0, 0.0))
    assert relative_angle_measurement(psi(math.pi / 2), psi(0.0)) == pytest.approx((0.0, 1.0))
    for _ in range(1000):
        c, b = rng.uniform(-10, 10, 2)
        got = relative_angle_measurement(psi(c), psi(b))
        assert np.allclose(got, psi(c - b), atol=1e-13)
        assert abs(math.hypot(*got) - 1) < 1e-13
    with pytest.raises(PreconditionError):
        relative_angle_measurement((2.0, 0.0), psi(0.0))


def test_implicit_feedback_examples():
    r = psi(0.0)
    assert angle_feedback_implicit(r, psi(0.0)) == (0.0, False)
    u, _ = angle_feedback_implicit(r, psi(math.pi / 2))
    assert u == pytest.approx(math.sqrt(2) / 2, abs=1e-15)
    u, _ = angle_feedback_implicit(r, psi(3 * math.pi / 2))
    assert u == pytest.approx(-math.sqrt(2) / 2, abs=1e-15)


def test_implicit_feedback_on_surface():
    u, flag = angle_feedback_implicit((1.0, 0.0), (-1.0, 0.0))
    assert flag and abs(u) == 1.0
    with pytest.raises(DomainError):
        implicit_feedback_formula((1.0, 0.0), (-1.0, 0.0))


def test_implicit_matches_sine_inside_half_turn(rng):
    th_r = rng.uniform(-math.pi, math.pi, 10_000)
    d = rng.uniform(-(math.pi - 0.01), math.pi - 0.01, 10_000)
    err = max(abs(angle_feedback_implicit(psi(a), psi(a + b))[0] - math.sin(b / 2))
              for a, b in zip(th_r, d))
    assert err < 1e-12


def test_implicit_matches_switched_sine_elsewhere(rng):
    th_r = rng.uniform(-math.pi, math.pi, 10_000)
    d = rng.uniform(-2 * math.pi, 2 * math.pi, 10_000)
    keep = np.abs(np.abs(d) - math.pi) > 1e-6
    err = max(abs(angle_feedback_implicit(psi(a), psi(a + b))[0] - u_sw(b))
              for a, b in zip(th_r[keep], d[keep]))
    assert err < 1e-12


def test_textbook_form_agrees_away_from_surface(rng):
    for _ in range(500):
        a = rng.uniform(-3, 3)
        b = rng.uniform(-3, 3)
        assert implicit_feedback_formula(psi(a), psi(a + b)) == pytest.approx(
            angle_feedback_implicit(psi(a), psi(a + b))[0], abs=1e-9)


def test_hac_rate(pp, hp):
    assert hac_rate(hp.v_dc_r, 0.0, hp, pp.omega_0) == pp.omega_0
    assert hac_rate(hp.v_dc_r + 1, 1e-3, hp, pp.omega_0) == pytest.approx(
        pp.omega_0 + 0.01 - 10.0, rel=1e-15)
    h0 = hp.with_(eta=0.0)
    assert hac_rate(hp.v_dc_r + 50, 0.2, h0, pp.omega_0) == pp.omega_0 - h0.gamma * 0.2


def test_atan_rate(pp, hp):
    assert atan_rate(0.3, 0.3, hp.v_dc_r + 2, hp, pp.omega_0) == pytest.approx(
        pp.omega_0 + hp.eta * 2)
    far = atan_rate(1e12, 0.0, hp.v_dc_r, hp, pp.omega_0)
    assert far == pytest.approx(pp.omega_0 - hp.gamma * math.pi / 2)
    th = np.linspace(-20, 20, 4001)
    vals = np.array([atan_rate(t, 0.0, hp.v_dc_r, hp, pp.omega_0) - pp.omega_0 for t in th])
    assert np.count_nonzero(vals == 0.0) == 1


def test_disturbance_examples(pp, rng):
    x = np.zeros(9)
    x[2] = 2000.0
    x[3:5] = (30.0, 0.0)
    assert disturbance_d(x, pp, 0.5) == 0.0
    x[5:7] = (0.5 * 2000.0 / 2, 0.0)
    assert disturbance_d(x, pp, 0.5) == pytest.approx(0.5)
    for _ in range(200):
        y = rng.normal(size=9) * 100
        y[2] = 2000.0
        mu_r = 0.6
        pf = power_flows(y, pp, mu_r)
        try:
            d = disturbance_d(y, pp, mu_r)
        except DomainError:
            continue
        assert d == pytest.approx(pf.p_f / pf.p_s, rel=1e-10)
    with pytest.raises(DomainError):
        disturbance_d(np.zeros(9), pp, 0.5)


def test_limiter_boundary_values():
    lp = LimiterParams(enabled=True, beta=2.0, i_th=100.0, d_min=0.01)
    assert limiter_delta_mu(100.0, 0.5, lp) == pytest.approx(0.5)
    lp = LimiterParams(enabled=True, beta=0.25, i_th=500.0, d_min=0.01)
    for d in (0.1, 0.4, 0.9):
        assert limiter_delta_mu(500.0, d, lp) == pytest.approx(1 - d, rel=1e-14)
    # C -> 0 with the current just above threshold
    tiny = LimiterParams(enabled=True, beta=0.25, i_th=500.0, d_min=1e-6)
    assert limiter_delta_mu(500.0 + 1e-9, 1.0 - 1e-9, tiny) < 1e-8
    assert 0.0 <= limiter_delta_mu(1e9, 0.01, lp) < 1.0
    assert limiter_delta_mu(-1e9, 0.01, lp) == 0.0


@settings(max_examples=300)
@given(st.floats(0.0, 5000.0), st.floats(0.011, 0.98), st.floats(1e-3, 10.0))
def test_limiter_monotone(i_mag, d, step):
    lp = LimiterParams(enabled=True, beta=0.01, i_th=1000.0, d_min=0.01)
    a = limiter_delta_mu(i_mag, d, lp)
    assert limiter_delta_mu(i_mag + step, d, lp) >= a
    assert limiter_delta_mu(i_mag, max(d - 0.01, 0.01), lp) >= a
    if abs(lp.beta * (i_mag - lp.i_th)) < 20:
        assert limiter_delta_mu(i_mag + step, d, lp) > a


def test_effective_mu():
    assert effective_mu(2 / 3, 0.0) == 2 / 3
    assert effective_mu(2 / 3, 0.5) == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        effective_mu(0.5, 1.0)


def test_limiter_disabled_keeps_reference(pp, hp, rng):
    for _ in range(50):
        x = rng.normal(size=9) * 1e4
        assert control_step(x, pp, hp, LIMITER_OFF).mu == hp.mu_r


def test_limited_current_decreases(pp, hp, rng):
    lp = LimiterParams(enabled=True, beta=0.25, i_th=500.0, d_min=0.01, use_measured_d=True)
    checked = 0
    for _ in range(3000):
        x = rng.normal(size=9) * 600
        x[2] = rng.uniform(1500, 3000)
        i_mag, th_i = math.hypot(*x[3:5]), math.atan2(x[4], x[3])
        if i_mag <= lp.i_th or abs(math.remainder(x[0] - th_i, 2 * math.pi)) >= math.pi / 2:
            continue
        try:
            d = disturbance_d(x, pp, hp.mu_r)
        except DomainError:
            continue
        if not 0.0 < d < 1.0:
            continue
        out = control_step(x, pp, hp, lp)
        assert current_magnitude_rhs(x, pp, out.mu) < 0.0
        checked += 1
    assert checked > 50


def test_fault_state_drives_limiter(pp, hp):
    lp = LimiterParams(enabled=True, beta=0.25, i_th=500.0, d_min=0.01, use_measured_d=True)
    x = np.zeros(9)
    x[2] = 2449.2
    x[3:5] = (3000.0, 10.0)
    x[5:7] = (1e-3, 0.0)
    out = control_step(x, pp, hp, lp)
    assert out.d_value < 1e-5
    assert out.delta_mu > 0.99


def test_control_step_equilibrium(pp, eq_ib):
    out = control_step(eq_ib.x_stable, pp, eq_ib.hp)
    assert out.theta_dot == 0.0
    assert out.i_dc_ref == pytest.approx(eq_ib.x_stable[1], rel=1e-14)


def test_implicit_and_explicit_modes_agree(pp, hp, rng):
    hi = hp.with_(feedback_mode="implicit_usw", theta_r=0.3)
    he = hp.with_(theta_r=0.3)
    for _ in range(1000):
        x = rng.normal(size=9) * 100
        x[0] = 0.3 + rng.uniform(-(math.pi - 0.01), math.pi - 0.01)
        x[2] = 2400
        a, b = control_step(x, pp, hi).theta_dot, control_step(x, pp, he).theta_dot
        assert abs(a - b) <= 1e-12 * hp.gamma


def test_feedforward_delta(pp):
    assert feedforward_delta(pp) == pytest.approx(2 * math.atan(200e-6 * 100 * math.pi / 0.001))


def test_feedforward_at_equilibrium(pp, eq_ib):
    x = eq_ib.x_stable
    pf = power_flows(x, pp, eq_ib.hp.mu_r)
    ff = feedforward_refs(pf.p_g, pf.q_g, x[2], math.hypot(*x[5:7]), pp)
    assert np.allclose(ff.psi_theta_r, (1.0, 0.0), atol=1e-12)
    assert ff.mu_r == pytest.approx(2 / 3, rel=1e-12)


def test_feedforward_outputs_unit_vector(pp, rng):
    for method in ("exact", "rotation"):
        for _ in range(200):
            p, q = rng.uniform(-1e6, 1e6, 2)
            ff = feedforward_refs(p, q, 2449.2, rng.uniform(500, 900), pp, method=method)
            assert abs(math.hypot(*ff.psi_theta_r) - 1) < 1e-12
    with pytest.raises(DomainError):
        feedforward_refs(0.0, 0.0, 2449.2, 816.4, pp)

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hacsim.analysis import (EquilibriumError, LyapunovConfig, angle_error_to_set, audit_values,
                             coi_damping_bound, droop_slope, droop_slope_fd,
                             jacobian_sign_test, lyapunov_audit, lyapunov_value, lyapunov_values,
                             minimal_lambda_eta0, numerical_jacobian, relative_error, rocof,
                             settling_time, solve_equilibrium, stability_condition_coi,
                             stability_condition_ib, state_scales)
from hacsim.controller import closed_loop_rhs
from hacsim.mathkit import DomainError
from hacsim.plant import InfiniteBus, PlantParams
from hacsim.sim import Scenario, integrate


def test_equilibrium_residuals(eq_ib, eq_coi):
    for eq in (eq_ib, eq_coi):
        assert eq.residual_norm < 1e-9
        # sin(2*pi) is not zero in floating point
        assert eq.residual_unstable < 1e-8
        assert np.array_equal(eq.x_stable[1:], eq.x_unstable[1:])
        assert eq.x_unstable[0] == eq.x_stable[0] + 2 * math.pi


def test_equilibrium_against_independent_linear_solve(pp, hp, eq_ib):
    # oracle: assemble the steady-state equations as a complex phasor problem
    w = pp.omega_0
    zl = pp.r + 1j * pp.ell * w
    zg = pp.r_g + 1j * pp.ell_g * w
    ysh = pp.g + 1j * pp.c * w
    vs = hp.v_dc_r * hp.mu_r
    # i = (vs - v)/zl, ig = (v - vb)/zg, i - ysh v - ig = 0
    v = (vs / zl + pp.v_r / zg) / (1 / zl + ysh + 1 / zg)
    i = (vs - v) / zl
    ig = (v - pp.v_r) / zg
    # the real model writes q-axis components with the opposite rotation sign
    got = eq_ib.x_stable
    assert got[3] == pytest.approx(i.real, rel=1e-10)
    assert abs(got[4]) == pytest.approx(abs(i.imag), rel=1e-10)
    assert got[5] == pytest.approx(v.real, rel=1e-10)
    assert got[7] == pytest.approx(ig.real, rel=1e-10)
    assert eq_ib.required_i_r == pytest.approx(pp.g_dc * hp.v_dc_r + hp.mu_r * i.real,
                                               rel=1e-10)


def test_homogeneous_equilibrium_is_zero(pp, hp):
    # negligible bus voltage and dc reference: the network sources vanish
    pp0 = replace(pp, v_r=1e-300)
    eq0 = solve_equilibrium(pp0, hp.with_(eta=0.0, i_r=0.0, v_dc_r=1e-300), InfiniteBus(),
                            enforce_reference=False)
    assert np.allclose(eq0.x_stable[3:], 0.0, atol=1e-250)


def test_free_dc_voltage_requires_eta_zero(pp, hp):
    with pytest.raises(EquilibriumError):
        solve_equilibrium(pp, hp, enforce_reference=False)


def test_simulation_settles_onto_solved_point(pp, eq_ib):
    x0 = eq_ib.x_stable * (1 + 1e-3)
    tr = integrate(Scenario(pp, eq_ib.hp, tuple(x0), 5.0))
    assert relative_error(tr.final_raw_state, eq_ib) < 1e-6


def test_certificate_eta_zero(pp, hp, rng):
    for _ in range(20):
        h = hp.with_(eta=0.0, gamma=10 ** rng.uniform(-3, 5), kappa=10 ** rng.uniform(-2, 2))
        eq = solve_equilibrium(pp, h, enforce_reference=False)
        c = stability_condition_ib(pp, h, eq)
        assert c.lhs == 0.0 and c.satisfied


def test_certificate_table1_formula(pp, hp, eq_ib):
    c = stability_condition_ib(pp, hp, eq_ib)
    i_mag = math.hypot(*eq_ib.x_stable[3:5])
    lhs = hp.eta / pp.g_dc * (1 + (hp.mu_r * i_mag) ** 2) + hp.eta * (hp.mu_r * hp.v_dc_r) ** 2 / pp.r
    assert c.lhs == pytest.approx(lhs, rel=1e-14)
    assert c.satisfied == (c.lhs < c.gamma)


def test_certificate_monotone_in_gamma(pp, hp, eq_ib):
    for g in (1e2, 1e4, 1e8, 1e9):
        a = stability_condition_ib(pp, hp.with_(gamma=g), eq_ib)
        b = stability_condition_ib(pp, hp.with_(gamma=2 * g), eq_ib)
        assert not (a.satisfied and not b.satisfied)


def test_certificate_invariant_under_kappa_and_tau(pp, hp):
    ref = None
    for kappa in (0.1, 2.0, 100.0):
        for tau in (5e-3, 50e-3, 500e-3):
            p2 = replace(pp, tau_dc=tau)
            h2 = hp.with_(kappa=kappa)
            c = stability_condition_ib(p2, h2, solve_equilibrium(p2, h2))
            ref = ref or c
            assert (c.lhs, c.satisfied) == (ref.lhs, ref.satisfied)


def test_coi_certificate(pp, hp, cp, eq_coi):
    c = stability_condition_coi(pp, cp, hp, eq_coi)
    x = eq_coi.x_stable
    d_min = ((pp.ell * math.hypot(*x[4:6])) ** 2 / pp.r + (pp.c * math.hypot(*x[6:8])) ** 2 / pp.g
             + (pp.ell_g * math.hypot(*x[8:10])) ** 2 / pp.r_g)
    assert c.d_min_required == pytest.approx(d_min, rel=1e-14)
    assert cp.d < d_min and not c.satisfied and c.extra_term == math.inf


def test_coi_certificate_large_damping_limit(pp, hp, cp):
    h0 = hp.with_(eta=0.0)
    eq = solve_equilibrium(pp, h0, cp)
    ib = stability_condition_ib(pp, h0, eq)
    d_min = coi_damping_bound(pp, eq)
    big = replace(cp, d=1e6 * d_min)
    c = stability_condition_coi(pp, big, h0, solve_equilibrium(pp, h0, big))
    assert abs(c.margin - ib.margin) < 1e-9
    assert c.satisfied


def test_damping_bound_zero_point(pp):
    class Z:
        is_coi = True
        x_stable = np.zeros(10)

        def euclid_slices(self):
            return slice(4, 6), slice(6, 8), slice(8, 10)
    assert coi_damping_bound(pp, Z()) == 0.0


def test_lyapunov_examples(pp, hp, eq_ib):
    cfg = LyapunovConfig.build(pp, hp, eq_ib)
    assert cfg.lam == 2 / hp.eta
    assert lyapunov_value(eq_ib.x_stable, eq_ib, cfg) == 0.0
    assert lyapunov_value(eq_ib.x_unstable, eq_ib, cfg) == 4 * cfg.lam


def test_lyapunov_positive_definite(pp, hp, eq_ib, rng):
    cfg = LyapunovConfig.build(pp, hp, eq_ib)
    xs = eq_ib.x_stable + rng.normal(size=(5000, 9)) * np.abs(eq_ib.x_stable) * 0.1
    xs[:, 0] = rng.uniform(-2 * math.pi, 2 * math.pi, 5000)
    assert np.all(lyapunov_values(xs, eq_ib, cfg) > 0)


def test_lyapunov_saddle_at_unstable_point(pp, hp, eq_ib, rng):
    cfg = LyapunovConfig.build(pp, hp, eq_ib)
    xu = eq_ib.x_unstable
    v_u = lyapunov_value(xu, eq_ib, cfg)
    for _ in range(200):
        x_th = xu.copy()
        x_th[0] += rng.uniform(-0.5, 0.5)
        x_y = xu.copy()
        x_y[1:] += rng.normal(size=8)
        assert lyapunov_value(x_th, eq_ib, cfg) <= v_u <= lyapunov_value(x_y, eq_ib, cfg)


def test_lambda_eta_zero(pp, hp):
    h0 = hp.with_(eta=0.0)
    eq = solve_equilibrium(pp, h0)
    cfg = LyapunovConfig.build(pp, h0, eq)
    assert cfg.lam == pytest.approx(2 * minimal_lambda_eta0(pp, h0, eq))
    with pytest.raises(ValueError):
        LyapunovConfig(lam=0.0, weights=(1.0,))


def test_audit_self_checks():
    t = np.linspace(0, 1, 101)
    rep = audit_values(t, np.zeros(101))
    assert rep.passed and rep.max_positive_increment == 0.0
    v = np.exp(-t)
    v[50] += 0.1
    rep = audit_values(t, v)
    assert not rep.passed and rep.violation_times == [t[50]]


def test_audit_certified_trajectory(pp, hp):
    h0 = hp.with_(eta=0.0)
    eq = solve_equilibrium(pp, h0, enforce_reference=False)
    x0 = eq.x_stable * 1.2
    x0[0] = 2.0
    tr = integrate(Scenario(pp, eq.hp, tuple(x0), 2.0))
    rep = lyapunov_audit(tr, eq, LyapunovConfig.build(pp, eq.hp, eq))
    assert rep.passed, rep.violation_times[:5]


def test_numerical_jacobian_linear_oracle(rng):
    a = rng.normal(size=(5, 5))
    jac = numerical_jacobian(lambda x: a @ x, rng.normal(size=5), np.full(5, 1e-3))
    assert np.allclose(jac, a, atol=1e-10)


def test_jacobian_angle_row_matches_analytic(pp, hp, eq_ib):
    h = hp
    x = eq_ib.x_stable
    steps = 1e-6 * state_scales(eq_ib)
    jac = numerical_jacobian(lambda z: closed_loop_rhs(z, pp, eq_ib.hp), x, steps)
    row = np.zeros(9)
    row[0] = -0.5 * h.gamma * math.cos(0.0)
    row[2] = h.eta
    assert np.allclose(jac[0], row, rtol=1e-6, atol=1e-9)


def test_determinant_signs_certified(pp, hp):
    h0 = hp.with_(eta=0.0)
    eq = solve_equilibrium(pp, h0, enforce_reference=False)
    rep = jacobian_sign_test(pp, h0, eq)
    assert rep.det_at_unstable > 0 and rep.det_at_stable < 0 and rep.consistent
    # a coarser conditioning step keeps the signs
    rep2 = jacobian_sign_test(pp, h0, eq, rel_step=1e-5)
    assert np.sign(rep2.det_at_unstable) == np.sign(rep.det_at_unstable)
    assert np.sign(rep2.det_at_stable) == np.sign(rep.det_at_stable)


def test_droop_slope_against_finite_difference(pp, hp, cp, rng):
    for _ in range(20):
        w = rng.uniform(300, 330)
        th = rng.uniform(-2 * math.pi, 2 * math.pi)
        a = droop_slope(pp, cp, hp, w, th)
        assert a == pytest.approx(droop_slope_fd(pp, hp, w, th), rel=1e-6)


def test_droop_matching_control_reduction(pp, hp, cp):
    h = hp.with_(eta=pp.omega_0 / hp.v_dc_r)
    g = h.kappa + pp.g_dc
    i0 = h.i_r + h.kappa * h.v_dc_r
    assert pp.omega_0 - h.eta * h.v_dc_r == 0.0
    for w in (310.0, 314.0, 320.0):
        assert droop_slope(pp, cp, h, w, h.theta_r) == -(2 * g / h.eta ** 2) * w + i0 / h.eta


def test_droop_affine_and_domain(pp, hp, cp):
    s = [droop_slope(pp, cp, hp, w, 0.1) for w in (300.0, 310.0, 320.0)]
    assert s[0] - 2 * s[1] + s[2] == pytest.approx(0.0, abs=1e-6 * abs(s[1]))
    with pytest.raises(DomainError):
        droop_slope(pp, cp, hp.with_(eta=0.0), 314.0, 0.0)


class _Traj:
    def __init__(self, t, w):
        self.times = t
        self._w = w

    def column(self, name):
        assert name == "omega"
        return self._w


def test_rocof_examples():
    t = np.linspace(0, 2, 201)
    assert rocof(_Traj(t, np.full(201, 314.0)), 0.5, 0.5) == 0.0
    assert rocof(_Traj(t, 314.0 - 0.3 * t), 0.2, 1.0) == pytest.approx(0.3)
    with pytest.raises(DomainError):
        rocof(_Traj(t, t), 1.8, 0.5)


def test_angle_error_and_settling():
    assert angle_error_to_set(0.3 + 2 * math.pi, 0.3) == pytest.approx(0.0, abs=1e-15)
    assert angle_error_to_set(0.3 - 2 * math.pi + 0.01, 0.3) == pytest.approx(0.01)
    t = np.arange(5.0)
    assert settling_time(t, [1, 1, 0.1, 0.01, 0.001], 0.5) == 2.0
    assert math.isnan(settling_time(t, [1, 1, 1, 1, 1], 0.5))


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(1e2, 1e5))
def test_equilibrium_residual_property(kappa, gamma):
    pp = PlantParams.table1()
    from hacsim.controller import HacParams
    h = HacParams.table1(pp).with_(kappa=kappa, gamma=gamma)
    eq = solve_equilibrium(pp, h)
    assert eq.residual_norm < 1e-9

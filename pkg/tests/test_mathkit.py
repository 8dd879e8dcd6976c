import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hacsim.mathkit import (FOUR_PI, TWO_PI, DomainError, MobiusAngle, PreconditionError, Vec2,
                            clarke, from_polar, inverse_clarke, mobius_distance, psi, rotate,
                            to_polar, wrap_mobius, wrap_mobius_value)

finite = st.floats(-1e6, 1e6, allow_nan=False)
angles = st.floats(-50.0, 50.0, allow_nan=False)


def test_clarke_cosine_and_sine_phase_zero():
    assert clarke((1.0, -0.5, -0.5)) == pytest.approx((1.0, 0.0), abs=1e-15)
    s = math.sqrt(3) / 2
    assert clarke((0.0, s, -s)) == pytest.approx((0.0, 1.0), abs=1e-15)


def test_clarke_on_sine_convention_bus_voltage():
    # oracle: the 2x3 transform matrix applied with numpy
    v_r, th = 816.4, math.pi / 2
    abc = v_r * np.array([math.sin(th), math.sin(th - 2 * math.pi / 3),
                          math.sin(th + 2 * math.pi / 3)])
    m = (2 / 3) * np.array([[1, -0.5, -0.5], [0, math.sqrt(3) / 2, -math.sqrt(3) / 2]])
    expected = m @ abc
    assert np.allclose(clarke(abc), expected, rtol=0, atol=1e-12)
    assert np.allclose(expected, [816.4, 0.0], atol=1e-12)


def test_clarke_rejects_unbalanced():
    with pytest.raises(PreconditionError):
        clarke((1.0, 0.0, 0.0))


@given(finite, finite)
def test_clarke_inverse_round_trip(a, b):
    z = clarke(inverse_clarke((a, b)), tol=1e-9)
    assert z == pytest.approx((a, b), rel=1e-12, abs=1e-9)


def test_rotate_examples():
    assert rotate(0.0, (1.0, 2.0)) == (1.0, 2.0)
    assert rotate(math.pi / 2, (1.0, 0.0)) == pytest.approx((0.0, 1.0), abs=1e-16)


@given(angles, finite, finite)
def test_rotate_inverse_and_norm(th, a, b):
    z = rotate(-th, rotate(th, (a, b)))
    assert z == pytest.approx((a, b), rel=1e-12, abs=1e-9)
    n0 = math.hypot(a, b)
    assert abs(Vec2(*rotate(th, (a, b))).norm() - n0) <= 1e-14 * max(n0, 1e-300) + 1e-300


def test_psi_examples():
    assert psi(0.0) == (1.0, 0.0)
    assert psi(math.pi / 2) == pytest.approx((0.0, 1.0), abs=1e-16)


@given(angles)
def test_psi_unit_norm(th):
    assert abs(psi(th).norm() - 1.0) <= 1e-15


def test_chord_identity_on_many_pairs(rng):
    a = rng.uniform(-10, 10, 10_000)
    b = rng.uniform(-10, 10, 10_000)
    lhs = (np.cos(a) - np.cos(b)) ** 2 + (np.sin(a) - np.sin(b)) ** 2
    rhs = 4 * np.sin((a - b) / 2) ** 2
    assert np.max(np.abs(lhs - rhs)) < 1e-13


# identities used by the stability arguments, checked numerically

def binomial_bound_holds(a, b, eps):
    dot = a @ b
    bound = eps ** 2 * (a @ a) + (b @ b) / (4 * eps ** 2)
    return dot <= bound * (1 + 1e-12) and -dot <= bound * (1 + 1e-12)


def test_trig_and_binomial_identities(rng):
    for _ in range(2000):
        a, b = rng.normal(size=2), rng.normal(size=2)
        assert binomial_bound_holds(a, b, rng.uniform(0.01, 10))
    p, q = rng.uniform(-7, 7, 5000), rng.uniform(-7, 7, 5000)
    assert np.allclose(np.sin(p / 2) ** 2, (1 - np.cos(p)) / 2, atol=1e-15)
    assert np.allclose(np.cos(p / 2) ** 2, (1 + np.cos(p)) / 2, atol=1e-15)
    for sgn in (1, -1):
        assert np.allclose(np.sin(p + sgn * q), np.sin(p) * np.cos(q) + sgn * np.cos(p) * np.sin(q),
                           atol=1e-14)
        assert np.allclose(np.cos(p + sgn * q), np.cos(p) * np.cos(q) - sgn * np.sin(p) * np.sin(q),
                           atol=1e-14)


def test_to_polar_examples():
    assert to_polar((1.0, 0.0)) == (1.0, 0.0)
    assert to_polar((0.0, -2.0)) == pytest.approx((2.0, -math.pi / 2))
    with pytest.raises(DomainError):
        to_polar((0.0, 0.0))


def test_polar_round_trip_random(rng):
    for _ in range(1000):
        z = rng.normal(size=2) * 10 ** rng.uniform(-5, 5)
        back = from_polar(*to_polar(z))
        assert np.linalg.norm(np.subtract(back, z)) <= 1e-12 * np.linalg.norm(z)


def test_wrap_examples():
    assert float(wrap_mobius(0.0)) == 0.0
    assert float(wrap_mobius(5 * math.pi)) == pytest.approx(math.pi)
    assert MobiusAngle(-TWO_PI) == MobiusAngle(TWO_PI)
    assert wrap_mobius(TWO_PI) == MobiusAngle(TWO_PI)


@given(st.floats(-1e4, 1e4, allow_nan=False))
def test_wrap_range_and_congruence(raw):
    w = wrap_mobius_value(raw)
    assert -TWO_PI <= w < TWO_PI
    k = round((raw - w) / FOUR_PI)
    assert abs(raw - w - k * FOUR_PI) <= 1e-12 * max(1.0, abs(raw))


@given(angles, angles)
def test_mobius_distance_symmetric_and_bounded(a, b):
    d = mobius_distance(a, b)
    assert 0.0 <= d <= TWO_PI + 1e-12
    assert d == pytest.approx(mobius_distance(b, a), abs=1e-12)


def test_mobius_angle_validation_and_hash():
    with pytest.raises(DomainError):
        MobiusAngle(7.0)
    with pytest.raises(TypeError):
        hash(MobiusAngle(0.0))
    assert MobiusAngle(0.1) != MobiusAngle(0.2)
    assert MobiusAngle(1.0).isclose(1.0 + FOUR_PI - FOUR_PI)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roeguide.astro import (
    EARTH,
    CartesianState,
    ElementError,
    Flavor,
    OrbitalElements,
    RoeState,
    cartesian_to_oe,
    j2_acceleration,
    mean_to_osc,
    oe_to_cartesian,
    oe_to_roe,
    osc_to_mean,
    roe_to_oe,
    rtn_rotation,
    wrap_pi,
)

leo_a = st.floats(6800e3, 7500e3)
angle = st.floats(0.0, 2.0 * math.pi)
small_e = st.floats(-5e-3, 5e-3)
incl = st.floats(0.2, 2.9)


def _elements(a, u, ex, ey, i, raan, flavor=Flavor.OSCULATING):
    return OrbitalElements(a, u, ex, ey, i, raan, flavor)


def _angle_diff(a, b):
    return abs(wrap_pi(a - b))


@given(leo_a, angle, small_e, small_e, incl, angle)
@settings(max_examples=60, deadline=None)
def test_cartesian_round_trip(a, u, ex, ey, i, raan):
    oe = _elements(a, u, ex, ey, i, raan)
    back = cartesian_to_oe(oe_to_cartesian(oe))
    assert back.a == pytest.approx(a, rel=1e-11)
    assert back.ex == pytest.approx(ex, abs=1e-11)
    assert back.ey == pytest.approx(ey, abs=1e-11)
    assert back.i == pytest.approx(i, abs=1e-11)
    assert _angle_diff(back.u, u) < 1e-10
    assert _angle_diff(back.raan, raan) < 1e-10


def test_circular_state_matches_hand_values():
    oe = _elements(7000e3, 0.0, 0.0, 0.0, 0.0, 0.0)
    x = oe_to_cartesian(oe)
    np.testing.assert_allclose(x.r, [7000e3, 0.0, 0.0])
    np.testing.assert_allclose(x.v, [0.0, math.sqrt(EARTH.mu / 7000e3), 0.0], atol=1e-9)
    assert oe.period() == pytest.approx(2 * math.pi * math.sqrt(7000e3**3 / EARTH.mu))


def test_unbound_state_is_rejected():
    x = CartesianState(np.array([7000e3, 0.0, 0.0]), np.array([0.0, 11e3, 0.0]))
    with pytest.raises(ElementError):
        cartesian_to_oe(x)


def test_invalid_elements_rejected():
    with pytest.raises(ElementError):
        _elements(-7000e3, 0.0, 0.0, 0.0, 0.5, 0.0)
    with pytest.raises(ElementError):
        _elements(7000e3, 0.0, 0.9, 0.5, 0.5, 0.0)


@given(st.floats(-50.0, 50.0))
def test_wrap_pi_range(x):
    w = wrap_pi(x)
    assert -math.pi <= w < math.pi
    assert math.isclose(math.cos(w), math.cos(x), abs_tol=1e-9)


def test_rtn_frame_is_orthonormal_and_aligned():
    x = oe_to_cartesian(_elements(7100e3, 0.7, 1e-3, 0.0, 1.0, 0.4))
    frame = rtn_rotation(x)
    rot = frame.rotation
    np.testing.assert_allclose(rot.T @ rot, np.eye(3), atol=1e-14)
    assert np.linalg.det(rot) == pytest.approx(1.0)
    np.testing.assert_allclose(frame.to_inertial([1.0, 0.0, 0.0]), x.r / np.linalg.norm(x.r))
    h = np.cross(x.r, x.v)
    np.testing.assert_allclose(frame.to_inertial([0.0, 0.0, 1.0]), h / np.linalg.norm(h))
    v = np.array([0.3, -1.0, 2.0])
    np.testing.assert_allclose(frame.to_rtn(frame.to_inertial(v)), v)


def _j2_potential(r):
    rm = np.linalg.norm(r)
    s2 = (r[2] / rm) ** 2
    return EARTH.mu * EARTH.j2 * EARTH.radius**2 / (2 * rm**3) * (3 * s2 - 1)


def test_j2_acceleration_is_gradient_of_potential():
    # oracle: central differences of the J2 disturbing potential
    r = np.array([3000e3, -5000e3, 4200e3])
    h = 1.0
    grad = np.array([
        (_j2_potential(r + h * e) - _j2_potential(r - h * e)) / (2 * h) for e in np.eye(3)
    ])
    np.testing.assert_allclose(j2_acceleration(r), -grad, rtol=1e-6)


@given(leo_a, angle, small_e, small_e, st.floats(0.3, 2.8), angle)
@settings(max_examples=25, deadline=None)
def test_mean_osc_inverse(a, u, ex, ey, i, raan):
    mean = _elements(a, u, ex, ey, i, raan, Flavor.MEAN)
    back = osc_to_mean(mean_to_osc(mean))
    assert back.flavor is Flavor.MEAN
    assert back.a == pytest.approx(a, rel=1e-12)
    assert back.ex == pytest.approx(ex, abs=1e-11)
    assert back.ey == pytest.approx(ey, abs=1e-11)
    assert back.i == pytest.approx(i, abs=1e-11)
    assert _angle_diff(back.u, u) < 1e-11


def test_short_periodic_amplitude_scale(chief_osc):
    # first-order J2 oscillation of a is about 1.5 J2 R^2 / a at this altitude (a few km)
    mean = osc_to_mean(chief_osc)
    diff = abs(chief_osc.a - mean.a)
    bound = 1.5 * EARTH.j2 * EARTH.radius**2 / chief_osc.a
    assert 0.1 * bound < diff < 1.5 * bound


def test_roe_of_pure_semimajor_offset():
    chief = _elements(7000e3, 0.3, 0.0, 0.0, 0.9, 0.2, Flavor.MEAN)
    deputy = _elements(7000e3 + 50.0, 0.3, 0.0, 0.0, 0.9, 0.2, Flavor.MEAN)
    np.testing.assert_allclose(oe_to_roe(chief, deputy).as_array(), [50.0, 0, 0, 0, 0, 0], atol=1e-9)


def test_roe_of_node_offset_splits_into_lambda_and_iy():
    chief = _elements(7000e3, 0.3, 0.0, 0.0, 0.9, 0.2, Flavor.MEAN)
    d_raan = 1e-5
    deputy = _elements(7000e3, 0.3, 0.0, 0.0, 0.9, 0.2 + d_raan, Flavor.MEAN)
    y = oe_to_roe(chief, deputy).as_array()
    assert y[1] == pytest.approx(7000e3 * d_raan * math.cos(0.9), rel=1e-9)
    assert y[5] == pytest.approx(7000e3 * d_raan * math.sin(0.9), rel=1e-9)


@given(st.lists(st.floats(-2000.0, 2000.0), min_size=6, max_size=6))
@settings(max_examples=50, deadline=None)
def test_roe_round_trip(values):
    chief = _elements(7121e3, 1.1, 1e-4, -2e-4, 0.8, 0.5, Flavor.MEAN)
    y = RoeState.from_array(values)
    back = oe_to_roe(chief, roe_to_oe(chief, y))
    np.testing.assert_allclose(back.as_array(), values, atol=1e-6)

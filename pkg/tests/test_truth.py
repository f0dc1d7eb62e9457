import math

import numpy as np
import pytest

from roeguide.astro import (
    EARTH,
    CartesianState,
    Flavor,
    OrbitalElements,
    cartesian_to_oe,
    oe_to_cartesian,
    osc_to_mean,
)
from roeguide.truth import PropagationConfig, PropagationError, propagate, propagate_states


def test_two_body_orbit_closes_after_one_period():
    oe = OrbitalElements(7000e3, 0.0, 1e-3, 0.0, 0.5, 0.3)
    x0 = oe_to_cartesian(oe)
    x1 = propagate(x0, np.zeros(3), 200.0, oe.period(), PropagationConfig(j2=False))
    assert np.linalg.norm(x1.r - x0.r) < 1e-2
    assert np.linalg.norm(x1.v - x0.v) < 1e-5


def test_energy_conserved_with_j2(chief_osc):
    cfg = PropagationConfig()
    x0 = oe_to_cartesian(chief_osc)
    x1 = propagate(x0, np.zeros(3), 200.0, 3 * chief_osc.period(), cfg)

    def energy(x):
        rm = np.linalg.norm(x.r)
        s2 = (x.r[2] / rm) ** 2
        pot = -EARTH.mu / rm + EARTH.mu * EARTH.j2 * EARTH.radius**2 / (2 * rm**3) * (3 * s2 - 1)
        return 0.5 * x.v @ x.v + pot

    assert abs(energy(x1) / energy(x0) - 1.0) < 1e-11


def test_short_burn_matches_kinematics_in_free_fall():
    # oracle: a thrust-on minus thrust-off difference over a short arc is 0.5 a t^2
    oe = OrbitalElements(7000e3, 0.2, 0.0, 0.0, 0.7, 0.0)
    x0 = oe_to_cartesian(oe)
    f = np.array([7e-3, -3e-3, 2e-3])
    dt = 20.0
    cfg = PropagationConfig(j2=False, step=1.0)
    on = propagate(x0, f, 200.0, dt, cfg)
    off = propagate(x0, np.zeros(3), 200.0, dt, cfg)
    dr = on.r - off.r
    expected = 0.5 * f / 200.0 * dt**2
    # gravity gradient correction is O(n^2 dt^2) relative
    np.testing.assert_allclose(dr, expected, rtol=2e-4, atol=1e-10)
    np.testing.assert_allclose(on.v - off.v, f / 200.0 * dt, rtol=5e-4)


def test_stacked_propagation_matches_individual(chief_osc):
    x0 = oe_to_cartesian(chief_osc).as_array()
    x1 = x0 + np.array([100.0, -50.0, 20.0, 0.1, 0.0, -0.05])
    acc = np.array([[0.0, 0.0, 0.0], [1e-5, 2e-5, -1e-5]])
    both = propagate_states(np.stack([x0, x1]), acc, 600.0)
    one = propagate_states(x1[None], acc[1:], 600.0)
    np.testing.assert_allclose(both[1], one[0], rtol=1e-14)


def test_zero_dt_is_identity(chief_osc):
    x0 = oe_to_cartesian(chief_osc).as_array()[None]
    np.testing.assert_array_equal(propagate_states(x0, np.zeros((1, 3)), 0.0), x0)
    with pytest.raises(ValueError):
        propagate_states(x0, np.zeros((1, 3)), -1.0)


def test_impact_raises():
    x = CartesianState(np.array([6500e3, 0.0, 0.0]), np.array([0.0, 1000.0, 0.0]))
    with pytest.raises(PropagationError, match="Earth"):
        propagate(x, np.zeros(3), 200.0, 3000.0)


def test_escape_raises():
    x = CartesianState(np.array([7000e3, 0.0, 0.0]), np.array([0.0, 10.6e3, 0.0]))
    with pytest.raises(PropagationError):
        propagate(x, np.array([0.0, 2e3, 0.0]), 1.0, 100.0)


def test_coarse_step_trips_energy_guard(chief_osc):
    with pytest.raises(PropagationError, match="energy drift"):
        propagate(oe_to_cartesian(chief_osc), np.zeros(3), 200.0, chief_osc.period(),
                  PropagationConfig(step=900.0, energy_tol=1e-9))


def test_nodal_regression_matches_secular_rate():
    # oracle: first-order secular node rate using the J2-perturbed mean motion
    osc = OrbitalElements(7121e3, 0.0, 1e-5, 0.0, math.radians(45.0), 0.0, Flavor.OSCULATING)
    mean0 = osc_to_mean(osc)
    period = mean0.period()
    n_samples = 41
    dt = 10 * period / (n_samples - 1)
    x = oe_to_cartesian(osc).as_array()[None]
    raan, times = [], []
    for k in range(n_samples):
        m = osc_to_mean(cartesian_to_oe(CartesianState.from_array(x[0])))
        raan.append(m.raan)
        times.append(k * dt)
        x = propagate_states(x, np.zeros((1, 3)), dt)
    slope = np.polyfit(times, np.unwrap(raan), 1)[0]

    a, e, i = mean0.a, mean0.e, mean0.i
    p = a * (1 - e * e)
    n = math.sqrt(EARTH.mu / a**3)
    eps = EARTH.j2 * (EARTH.radius / p) ** 2
    n_bar = n * (1 + 0.75 * eps * math.sqrt(1 - e * e) * (2 - 3 * math.sin(i) ** 2))
    expected = -1.5 * n_bar * eps * math.cos(i)
    assert abs(slope / expected - 1.0) < 1e-3

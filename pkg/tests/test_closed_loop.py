import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from roeguide.astro import RoeState, oe_to_cartesian, oe_to_roe, osc_to_mean
from roeguide.closed_loop import (
    InfeasibleAtStart,
    LoopConfig,
    NoiseModel,
    initial_deputy,
    make_rng,
    perturb_absolute,
    perturb_relative,
    pointing_error,
    run_loop,
    run_monte_carlo,
    saturate,
)
from roeguide.dynamics import build_grid
from roeguide.guidance import GuidanceSpec, solve_guidance

ARCSEC = math.pi / (180 * 3600)
Y0 = RoeState.from_array([10.0, 300.0, -20.0, 15.0, 5.0, -8.0])
YF = RoeState.from_array(np.zeros(6))


@pytest.fixture(scope="module")
def short_config(chief_mean):
    period = chief_mean.period()
    grid = build_grid(0.0, 1.5 * period, 0.2 * period, 100.0, chief_mean)
    return LoopConfig(grid, YF, 5.0, 7e-3, 200.0)


vec3 = st.lists(st.floats(-10.0, 10.0), min_size=3, max_size=3).map(np.array)


@given(vec3, st.floats(0.0, math.pi), st.integers(0, 2**32 - 1))
@settings(max_examples=200)
def test_pointing_error_preserves_norm(f, zeta, seed):
    out = pointing_error(f, zeta, make_rng(seed))
    assert abs(np.linalg.norm(out) - np.linalg.norm(f)) <= 1e-12 * max(1.0, np.linalg.norm(f))


@given(vec3, st.floats(0.0, 1.0), vec3)
def test_pointing_error_matches_rotation_vector(f, zeta, axis):
    # oracle: scipy rotation from the same axis-angle
    if np.linalg.norm(axis) < 1e-3:
        return
    axis = axis / np.linalg.norm(axis)
    expected = Rotation.from_rotvec(zeta * axis).apply(f)
    np.testing.assert_allclose(pointing_error(f, zeta, None, axis), expected, atol=1e-12)


def test_pointing_error_angle_for_perpendicular_axis():
    f = np.array([0.0, 5e-3, 0.0])
    out = pointing_error(f, 25 * ARCSEC, None, np.array([0.0, 0.0, 1.0]))
    angle = math.acos(np.clip(out @ f / (f @ f), -1, 1))
    assert angle == pytest.approx(25 * ARCSEC, rel=1e-6)


def test_saturate():
    np.testing.assert_array_equal(saturate([3e-3, 0, 0], 7e-3), [3e-3, 0, 0])
    out = saturate([6e-3, 8e-3, 0.0], 7e-3)
    assert np.linalg.norm(out) == pytest.approx(7e-3)
    np.testing.assert_allclose(out / np.linalg.norm(out), [0.6, 0.8, 0.0])


def test_rng_is_reproducible():
    a = make_rng(7).standard_normal(5)
    b = make_rng(7).standard_normal(5)
    np.testing.assert_array_equal(a, b)
    assert isinstance(make_rng(7).bit_generator, np.random.Philox)


def test_zero_noise_draws_are_exact(chief_mean):
    x, oe, rej = perturb_absolute(chief_mean, 0.0, 0.0, make_rng(0))
    np.testing.assert_array_equal(x.as_array(), oe_to_cartesian(chief_mean).as_array())
    assert oe == chief_mean and rej == 0
    y = perturb_relative(chief_mean, chief_mean, 0.0, make_rng(0))
    np.testing.assert_array_equal(y.as_array(), np.zeros(6))


def test_absolute_noise_has_requested_spread(chief_mean):
    rng = make_rng(3)
    x0 = oe_to_cartesian(chief_mean).as_array()
    draws = np.array([perturb_absolute(chief_mean, 10.0, 0.5, rng)[0].as_array() - x0
                      for _ in range(4000)])
    np.testing.assert_allclose(draws[:, :3].std(axis=0), 10.0, rtol=0.06)
    np.testing.assert_allclose(draws[:, 3:].std(axis=0), 0.5, rtol=0.06)


def test_initial_deputy_reproduces_roe(chief_osc, chief_mean):
    deputy = initial_deputy(chief_osc, Y0)
    y = oe_to_roe(chief_mean, osc_to_mean(deputy)).as_array()
    np.testing.assert_allclose(y, Y0.as_array(), atol=1e-4)


def test_noise_and_config_validation(short_config):
    with pytest.raises(ValueError):
        NoiseModel(sigma_y=-1.0)
    with pytest.raises(ValueError):
        LoopConfig(short_config.grid, YF, 0.0, 7e-3, 200.0)


def test_zero_noise_loop_follows_open_loop_plan(chief_osc, short_config):
    spec = GuidanceSpec(short_config.grid, Y0, YF, 7e-3, 200.0)
    plan = solve_guidance(spec)
    cfg = replace(short_config, epsilon=1e9)
    trace = run_loop(cfg, NoiseModel.zero(), chief_osc, initial_deputy(chief_osc, Y0))
    assert trace.resolve_steps == [0]
    cmd = np.array([s.f_cmd for s in trace.steps])
    np.testing.assert_allclose(cmd, plan.thrust, atol=1e-9)
    np.testing.assert_array_equal(cmd, np.array([s.f_applied for s in trace.steps]))
    assert trace.delta_v_total == pytest.approx(plan.delta_v_total, rel=1e-6)


def test_loop_is_deterministic_and_resolves_only_on_even_steps(chief_osc, short_config):
    noise = NoiseModel(10.0, 0.5, 10.0, 0.5, 1.0, 25 * ARCSEC, rng_seed=4)
    deputy = initial_deputy(chief_osc, Y0)
    a = run_loop(short_config, noise, chief_osc, deputy)
    b = run_loop(short_config, noise, chief_osc, deputy)
    np.testing.assert_array_equal(a.final_roe, b.final_roe)
    assert set(a.resolve_steps) <= set(a.even_steps)
    assert 0 in a.resolve_steps
    for s in a.steps:
        assert (s.y_est is None) == (s.k % 2 == 1)
        assert np.linalg.norm(s.f_applied) <= 7e-3 * (1 + 1e-12)
    assert len(a.steps) == short_config.grid.n_arcs
    assert a.final_time == pytest.approx(short_config.grid.tf)
    np.testing.assert_allclose(a.terminal_error, a.final_roe - YF.as_array())


def test_infeasible_first_solve_raises(chief_osc, short_config):
    far = RoeState.from_array([0.0, 3e5, 0.0, 0.0, 0.0, 0.0])
    with pytest.raises(InfeasibleAtStart):
        run_loop(short_config, NoiseModel.zero(), chief_osc, initial_deputy(chief_osc, far))


def test_monte_carlo_collects_runs(chief_osc, short_config):
    noise = NoiseModel(10.0, 0.5, 10.0, 0.5, 1.0, 25 * ARCSEC)
    summary, traces = run_monte_carlo(short_config, noise, chief_osc,
                                      initial_deputy(chief_osc, Y0), [1, 2], keep_traces=True)
    assert summary.seeds == [1, 2]
    assert summary.terminal_errors.shape == (2, 6)
    assert summary.delta_v[0] == pytest.approx(traces[1].delta_v_total)
    assert not summary.failures

"""MPC-like execution loop with navigation, pointing and saturation surrogates.

The loop walks the guidance grid arc by arc. At the start of every forced
arc it estimates the ROE, compares them with the prediction of the current
profile and re-solves the guidance only when they differ by at least
``epsilon``. Thrust is perturbed by a random misalignment, saturated, rotated
to inertial axes with the estimated chief state and applied, held constant in
inertial axes, by the nonlinear propagator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .astro import (
    EARTH,
    CartesianState,
    ElementError,
    Flavor,
    OrbitalElements,
    RoeState,
    cartesian_to_oe,
    mean_to_osc,
    oe_to_cartesian,
    oe_to_roe,
    osc_to_mean,
    roe_to_oe,
    rtn_rotation,
)
from .dynamics import TimeGrid, stm_pairs
from .guidance import GuidanceError, GuidancePlan, GuidanceSpec, solve_guidance
from .qp import SolverSettings
from .truth import PropagationConfig, PropagationError, propagate_states

_MAX_RESAMPLES = 100


class InfeasibleAtStart(GuidanceError):
    """The initial guidance problem has no solution on the given grid."""


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator used for every noise draw."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class NoiseModel:
    """One-sigma navigation and actuation errors.

    Positions in m, velocities in m/s, ``sigma_y`` in m, ``zeta_pe`` in rad.
    """

    sigma_r_c: float = 0.0
    sigma_v_c: float = 0.0
    sigma_r_d: float = 0.0
    sigma_v_d: float = 0.0
    sigma_y: float = 0.0
    zeta_pe: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        vals = (self.sigma_r_c, self.sigma_v_c, self.sigma_r_d, self.sigma_v_d,
                self.sigma_y, self.zeta_pe)
        if any(v < 0.0 or not math.isfinite(v) for v in vals):
            raise ValueError("noise standard deviations must be finite and non-negative")

    @classmethod
    def zero(cls, seed: int = 0) -> "NoiseModel":
        return cls(rng_seed=seed)


@dataclass(frozen=True)
class LoopConfig:
    grid: TimeGrid
    yf: RoeState
    epsilon: float
    f_max: float
    mass: float
    n_dir: int = 12
    gamma_first: float = 0.0
    solver: SolverSettings = SolverSettings()
    propagation: PropagationConfig = PropagationConfig()

    def __post_init__(self):
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be positive")


@dataclass
class StepRecord:
    k: int
    time: float
    y_true: np.ndarray
    y_est: np.ndarray | None
    y_pred: np.ndarray | None
    f_cmd: np.ndarray
    f_applied: np.ndarray
    resolved: bool = False
    solve_status: str = ""
    n_vars: int = 0
    solve_time: float = 0.0


@dataclass
class LoopTrace:
    steps: list[StepRecord] = field(default_factory=list)
    final_time: float = 0.0
    final_roe: np.ndarray | None = None
    terminal_error: np.ndarray | None = None
    delta_v_total: float = 0.0
    resample_count: int = 0
    deputy_estimates: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def resolve_steps(self) -> list[int]:
        return [s.k for s in self.steps if s.resolved]

    @property
    def even_steps(self) -> list[int]:
        return [s.k for s in self.steps if s.k % 2 == 0]


def _draw_state(x: np.ndarray, sigma_r: float, sigma_v: float, rng) -> np.ndarray:
    return x + np.concatenate([sigma_r * rng.standard_normal(3), sigma_v * rng.standard_normal(3)])


def perturb_absolute(oe_mean: OrbitalElements, sigma_r: float, sigma_v: float, rng,
                     mu: float = EARTH.mu) -> tuple[CartesianState, OrbitalElements, int]:
    """Noisy Cartesian state and elements around ``oe_mean``.

    Returns the noisy state, the noisy elements (mean flavor, as the estimate
    stands in for the mean state) and the number of rejected unbound draws.
    """
    x = oe_to_cartesian(oe_mean, mu).as_array()
    if sigma_r == 0.0 and sigma_v == 0.0:
        return CartesianState.from_array(x), oe_mean, 0
    for rejected in range(_MAX_RESAMPLES):
        xn = CartesianState.from_array(_draw_state(x, sigma_r, sigma_v, rng))
        try:
            oe = cartesian_to_oe(xn, mu).with_flavor(Flavor.MEAN)
        except ElementError:
            continue
        return xn, oe, rejected
    raise ElementError("noise draws keep producing unbound orbits")


def perturb_relative(chief_mean: OrbitalElements, deputy_mean: OrbitalElements,
                     sigma_y: float, rng) -> RoeState:
    """True dimensional ROE plus i.i.d. Gaussian noise of std ``sigma_y`` [m]."""
    y = oe_to_roe(chief_mean, deputy_mean).as_array()
    return RoeState.from_array(y + sigma_y * rng.standard_normal(6))


def _quat_mul(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    w1, v1 = p[0], p[1:]
    w2, v2 = q[0], q[1:]
    return np.concatenate([[w1 * w2 - v1 @ v2], w1 * v2 + w2 * v1 + np.cross(v1, v2)])


def random_unit_vector(rng) -> np.ndarray:
    while True:
        v = rng.standard_normal(3)
        n = np.linalg.norm(v)
        if n > 1e-12:
            return v / n


def pointing_error(f_rtn, zeta_pe: float, rng, axis: np.ndarray | None = None) -> np.ndarray:
    """Rotate ``f_rtn`` by ``zeta_pe`` about a random unit axis (quaternion conjugation).

    The axis is drawn from ``rng`` unless given explicitly.
    """
    f = np.asarray(f_rtn, dtype=float)
    axis = random_unit_vector(rng) if axis is None else np.asarray(axis, dtype=float)
    if zeta_pe == 0.0:
        return f.copy()
    q = np.concatenate([[math.cos(zeta_pe / 2.0)], math.sin(zeta_pe / 2.0) * axis])
    q_conj = q * np.array([1.0, -1.0, -1.0, -1.0])
    out = _quat_mul(_quat_mul(q, np.concatenate([[0.0], f])), q_conj)[1:]
    # conjugation by a unit quaternion is norm preserving; remove round-off drift
    nf, no = np.linalg.norm(f), np.linalg.norm(out)
    return out * (nf / no) if no > 0.0 else out


def saturate(f, f_max: float) -> np.ndarray:
    """Clip the thrust magnitude to ``f_max`` keeping its direction."""
    f = np.asarray(f, dtype=float)
    mag = np.linalg.norm(f)
    return f * (f_max / mag) if mag > f_max else f.copy()


def initial_deputy(chief_osc: OrbitalElements, y0: RoeState,
                   body=EARTH) -> OrbitalElements:
    """Osculating deputy elements whose mean ROE w.r.t. ``chief_osc`` equal ``y0``."""
    chief_mean = osc_to_mean(chief_osc, body)
    return mean_to_osc(roe_to_oe(chief_mean, y0), body)


def _mean_elements(x: np.ndarray, body) -> OrbitalElements:
    return osc_to_mean(cartesian_to_oe(CartesianState.from_array(x), body.mu), body)


def run_loop(config: LoopConfig, noise: NoiseModel, chief_osc: OrbitalElements,
             deputy_osc: OrbitalElements) -> LoopTrace:
    """Execute the closed loop over ``config.grid`` and return the trace.

    Raises:
        InfeasibleAtStart: the guidance fails at the first step.
        PropagationError: the truth propagation fails (message names the step).
    """
    rng = make_rng(noise.rng_seed)
    body = config.propagation.body
    t = config.grid.instants
    m = config.grid.m
    states = np.stack([oe_to_cartesian(chief_osc, body.mu).as_array(),
                       oe_to_cartesian(deputy_osc, body.mu).as_array()])
    trace = LoopTrace()
    plan: GuidancePlan | None = None
    y_pred = None
    x_chief_est = None

    for k in range(m + 1):
        y_est = None
        f_cmd = np.zeros(3)
        record_kw = {}
        chief_mean = _mean_elements(states[0], body)
        deputy_mean = _mean_elements(states[1], body)
        y_true = oe_to_roe(chief_mean, deputy_mean).as_array()
        if k % 2 == 0:
            x_chief_est, chief_est, rej = perturb_absolute(
                chief_mean, noise.sigma_r_c, noise.sigma_v_c, rng, body.mu)
            _, deputy_est, rej_d = perturb_absolute(
                deputy_mean, noise.sigma_r_d, noise.sigma_v_d, rng, body.mu)
            trace.resample_count += rej + rej_d
            trace.deputy_estimates.append(deputy_est.as_array())
            y_est = perturb_relative(chief_mean, deputy_mean, noise.sigma_y, rng).as_array()
            resolved = k == 0 or np.linalg.norm(y_est - y_pred) >= config.epsilon
            status = "skipped"
            n_vars = 0
            solve_time = 0.0
            if resolved:
                grid_k = config.grid.tail(k, chief_est)
                spec = GuidanceSpec(grid_k, RoeState.from_array(y_est), config.yf, config.f_max,
                                    config.mass, config.n_dir, config.gamma_first)
                try:
                    new_plan = solve_guidance(spec, stm_pairs(grid_k, chief_est, body),
                                              config.solver, diagnose=k == 0)
                    status = new_plan.solver_status.value
                    n_vars = new_plan.n_vars
                    solve_time = new_plan.solve_time
                except GuidanceError as exc:
                    if k == 0:
                        raise InfeasibleAtStart(f"guidance failed at the first step: {exc}",
                                                exc.result) from exc
                    new_plan = None
                    status = type(exc).__name__
                    res = getattr(exc, "result", None)
                    solve_time = res.solve_time if res is not None else 0.0
                plan = new_plan if new_plan is not None else plan.shifted(2)
            else:
                plan = plan.shifted(2)
            f_cmd = plan.thrust[0].copy()
            y_pred = plan.nodes[2].copy()
            record_kw = dict(resolved=resolved, solve_status=status, n_vars=n_vars,
                             solve_time=solve_time)
        f_applied = saturate(pointing_error(f_cmd, noise.zeta_pe, rng), config.f_max)
        f_inertial = rtn_rotation(x_chief_est).to_inertial(f_applied)
        accel = np.stack([np.zeros(3), f_inertial / config.mass])
        try:
            states = propagate_states(states, accel, t[k + 1] - t[k], config.propagation)
        except PropagationError as exc:
            raise PropagationError(f"step {k}: {exc}") from exc
        trace.delta_v_total += float(np.linalg.norm(f_applied)) / config.mass * (t[k + 1] - t[k])
        trace.steps.append(StepRecord(k, float(t[k]), y_true, y_est,
                                      None if y_pred is None else y_pred.copy(),
                                      f_cmd, f_applied, **record_kw))

    chief_mean = _mean_elements(states[0], body)
    deputy_mean = _mean_elements(states[1], body)
    trace.final_time = float(t[-1])
    trace.final_roe = oe_to_roe(chief_mean, deputy_mean).as_array()
    trace.terminal_error = trace.final_roe - config.yf.as_array()
    return trace


@dataclass
class MonteCarloSummary:
    seeds: list[int]
    delta_v: np.ndarray
    terminal_errors: np.ndarray
    resolve_counts: np.ndarray
    failures: dict[int, str] = field(default_factory=dict)

    @property
    def median_delta_v(self) -> float:
        return float(np.median(self.delta_v))

    @property
    def median_terminal_error(self) -> np.ndarray:
        return np.median(self.terminal_errors, axis=0)

    @property
    def median_abs_terminal_error(self) -> np.ndarray:
        return np.median(np.abs(self.terminal_errors), axis=0)


def run_monte_carlo(config: LoopConfig, noise: NoiseModel, chief_osc: OrbitalElements,
                    deputy_osc: OrbitalElements, seeds, keep_traces: bool = False):
    """Run the loop once per seed; failed runs are recorded, not raised.

    Returns the summary and, when ``keep_traces`` is set, the traces by seed.
    """
    from dataclasses import replace

    dvs, errs, counts, used = [], [], [], []
    failures = {}
    traces = {}
    for seed in seeds:
        try:
            tr = run_loop(config, replace(noise, rng_seed=int(seed)), chief_osc, deputy_osc)
        except (GuidanceError, RuntimeError, ElementError) as exc:
            failures[int(seed)] = f"{type(exc).__name__}: {exc}"
            continue
        used.append(int(seed))
        dvs.append(tr.delta_v_total)
        errs.append(tr.terminal_error)
        counts.append(len(tr.resolve_steps))
        if keep_traces:
            traces[int(seed)] = tr
    summary = MonteCarloSummary(used, np.array(dvs), np.array(errs).reshape(-1, 6),
                                np.array(counts), failures)
    return (summary, traces) if keep_traces else summary

"""Guidance QP: multiple shooting over forced/coast arcs with polygonal thrust bounds.

Node states are carried in kilometers and thrusts in millinewtons inside the
QP; the plan returned to callers is in meters and newtons.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .astro import RoeState
from .dynamics import StmPair, TimeGrid, stm_pairs
from .qp import QpProblem, SolverResult, SolverSettings, SolverStatus, solve

N_DIR_BAR = 4
GAMMA_BAR_FIRST = math.pi / 4.0
_KM = 1e-3  # m -> km
_MN = 1e3  # N -> mN


class GuidanceError(RuntimeError):
    """Base class of guidance failures."""

    def __init__(self, message: str, result: SolverResult | None = None):
        super().__init__(message)
        self.result = result


class Infeasible(GuidanceError):
    """The grid cannot reach the target under the thrust bounds.

    ``boundary_residual`` is the smallest achievable terminal miss [m] when the
    terminal condition is relaxed, or ``None`` when not diagnosed.
    """

    def __init__(self, message, result=None, boundary_residual: float | None = None):
        super().__init__(message, result)
        self.boundary_residual = boundary_residual


class SolverMaxIters(GuidanceError):
    """The solver hit its iteration limit without a certificate."""


class IllConditioned(GuidanceError):
    """The solver returned a non-finite or internally inconsistent solution."""


def polygon_halfplanes(d: float, n: int, gamma_first: float = 0.0) -> list[tuple[np.ndarray, float]]:
    """Half-planes ``normal @ b <= offset`` whose intersection is a regular n-gon.

    The polygon is inscribed in the circle of radius ``d``; normals point at
    ``gamma_first + 2*pi*j/n``.
    """
    if n < 3:
        raise ValueError("a polygon needs at least 3 sides")
    if d <= 0.0:
        raise ValueError("radius must be positive")
    offset = d * math.cos(math.pi / n)
    return [(np.array([math.cos(g), math.sin(g)]), offset)
            for g in (2.0 * j * math.pi / n + gamma_first for j in range(n))]


def polygon_area_ratio(n: int) -> float:
    """Area of the inscribed regular n-gon over the circle area."""
    if n < 3:
        raise ValueError("a polygon needs at least 3 sides")
    return n * math.sin(2.0 * math.pi / n) / (2.0 * math.pi)


def polygon_vertices(d: float, n: int, gamma_first: float = 0.0) -> np.ndarray:
    """Vertices of the polygon of :func:`polygon_halfplanes` (counter-clockwise)."""
    ang = gamma_first + (2.0 * np.arange(n) + 1.0) * math.pi / n
    return d * np.column_stack([np.cos(ang), np.sin(ang)])


@dataclass(frozen=True)
class GuidanceSpec:
    """Data of one guidance problem. Thrust in newtons, mass in kilograms."""

    grid: TimeGrid
    y0: RoeState
    yf: RoeState
    f_max: float
    mass: float
    n_dir: int = 12
    gamma_first: float = 0.0

    def __post_init__(self):
        if self.n_dir < 3:
            raise ValueError("n_dir must be at least 3")
        if self.f_max <= 0.0 or self.mass <= 0.0:
            raise ValueError("f_max and mass must be positive")

    @property
    def n_dir_bar(self) -> int:
        return N_DIR_BAR

    @property
    def gamma_bar_first(self) -> float:
        return GAMMA_BAR_FIRST

    @property
    def n_forced(self) -> int:
        return len(self.grid.forced_arcs)

    @property
    def n_nodes(self) -> int:
        return self.grid.m + 2

    @property
    def n_vars(self) -> int:
        return 6 * self.n_nodes + 3 * self.n_forced


def _thrust_rows(spec: GuidanceSpec):
    """Inequality block for one forced arc acting on (f_R, f_T, f_N) in mN."""
    fmax = spec.f_max * _MN
    rows, rhs = [], []
    for nrm, off in polygon_halfplanes(fmax, spec.n_dir, spec.gamma_first):
        rows.append([0.0, nrm[0], nrm[1]])
        rhs.append(off)
    for plane in ((0, 1), (0, 2)):
        for nrm, off in polygon_halfplanes(fmax, N_DIR_BAR, GAMMA_BAR_FIRST):
            r = [0.0, 0.0, 0.0]
            r[plane[0]], r[plane[1]] = nrm[0], nrm[1]
            rows.append(r)
            rhs.append(off)
    return np.array(rows), np.array(rhs)


def _dynamics_blocks(spec: GuidanceSpec, stms: list[StmPair]):
    """Chaining equalities ``Y_{k+1} - Phi Y_k - B F = 0`` (scaled units)."""
    grid = spec.grid
    if len(stms) != grid.n_arcs:
        raise ValueError(f"{len(stms)} STM pairs supplied for a grid of {grid.n_arcs} arcs")
    n_y = 6 * spec.n_nodes
    blocks = []
    for k, pair in enumerate(stms):
        row = sp.lil_matrix((6, spec.n_vars))
        row[:, 6 * (k + 1):6 * (k + 2)] = np.eye(6)
        row[:, 6 * k:6 * (k + 1)] = -pair.phi
        if k % 2 == 0:
            j = k // 2
            b = pair.psi / spec.mass / _MN * _KM
            row[:, n_y + 3 * j:n_y + 3 * (j + 1)] = -b
        blocks.append(row.tocsr())
    return sp.vstack(blocks, format="csc")


def build_problem(spec: GuidanceSpec, stms: list[StmPair]) -> QpProblem:
    """Assemble the guidance QP over node states Y [km] and forced thrusts F [mN]."""
    n_y = 6 * spec.n_nodes
    nf = spec.n_forced
    p = sp.diags(np.concatenate([np.zeros(n_y), np.full(3 * nf, 2.0)]), format="csc")
    q = np.zeros(spec.n_vars)

    bc = sp.lil_matrix((12, spec.n_vars))
    bc[:6, :6] = np.eye(6)
    bc[6:, n_y - 6:n_y] = np.eye(6)
    a_eq = sp.vstack([bc.tocsr(), _dynamics_blocks(spec, stms)], format="csc")
    b_eq = np.concatenate([spec.y0.as_array() * _KM, spec.yf.as_array() * _KM,
                           np.zeros(6 * spec.grid.n_arcs)])

    rows, rhs = _thrust_rows(spec)
    a_in = sp.hstack([sp.csc_matrix((rows.shape[0] * nf, n_y)),
                      sp.kron(sp.identity(nf), rows)], format="csc")
    b_in = np.tile(rhs, nf)
    return QpProblem.create(p, q, a_eq, b_eq, a_in, b_in)


def _arc_gains(spec: GuidanceSpec, stms: list[StmPair]):
    """Terminal sensitivity of every forced thrust and the free-drift STM (scaled units)."""
    nf = spec.n_forced
    gains = np.zeros((6, 3 * nf))
    phi_after = np.eye(6)
    for k in reversed(range(len(stms))):
        if k % 2 == 0:
            j = k // 2
            gains[:, 3 * j:3 * j + 3] = phi_after @ stms[k].psi / spec.mass / _MN * _KM
        phi_after = phi_after @ stms[k].phi
    return gains, phi_after


def build_condensed_problem(spec: GuidanceSpec, stms: list[StmPair]) -> QpProblem:
    """Guidance QP with the node states eliminated: variables are the forced thrusts [mN].

    Same optimum as :func:`build_problem`; the chaining equalities collapse into
    six terminal rows. Long horizons converge far faster in this form.
    """
    if len(stms) != spec.grid.n_arcs:
        raise ValueError(f"{len(stms)} STM pairs supplied for a grid of {spec.grid.n_arcs} arcs")
    nf = spec.n_forced
    gains, phi_total = _arc_gains(spec, stms)
    b = (spec.yf.as_array() - phi_total @ spec.y0.as_array()) * _KM
    rows, rhs = _thrust_rows(spec)
    return QpProblem.create(sp.identity(3 * nf, format="csc") * 2.0, np.zeros(3 * nf),
                            gains, b, sp.kron(sp.identity(nf), rows, format="csc"),
                            np.tile(rhs, nf))


def expand_solution(spec: GuidanceSpec, stms: list[StmPair], thrust_mn: np.ndarray,
                    terminal_dual: np.ndarray, ineq_dual: np.ndarray):
    """Primal and dual of :func:`build_problem` from a condensed solution.

    Nodes follow by forward chaining; the chaining multipliers follow from the
    terminal multiplier by the adjoint recursion.
    """
    n_arcs = spec.grid.n_arcs
    nodes = np.zeros((spec.n_nodes, 6))
    nodes[0] = spec.y0.as_array() * _KM
    for k, pair in enumerate(stms):
        nodes[k + 1] = pair.phi @ nodes[k]
        if k % 2 == 0:
            j = k // 2
            nodes[k + 1] += pair.psi @ thrust_mn[3 * j:3 * j + 3] / spec.mass / _MN * _KM
    chain = np.zeros((n_arcs, 6))
    chain[-1] = -terminal_dual
    for k in range(n_arcs - 1, 0, -1):
        chain[k - 1] = stms[k].phi.T @ chain[k]
    mu_0 = stms[0].phi.T @ chain[0]
    primal = np.concatenate([nodes.ravel(), thrust_mn])
    dual = np.concatenate([mu_0, terminal_dual, chain.ravel(), ineq_dual])
    return primal, dual


def _relaxed_condensed(spec: GuidanceSpec, stms: list[StmPair]) -> QpProblem:
    """min ||s||^2 (+ tiny thrust weight) with G F - s = b: the smallest terminal miss."""
    base = build_condensed_problem(spec, stms)
    nf3 = base.n_vars
    p = sp.diags(np.concatenate([np.full(nf3, 2e-9), np.full(6, 2.0)]), format="csc")
    a_eq = sp.hstack([base.A_eq, -sp.identity(6)], format="csc")
    a_in = sp.hstack([base.A_ineq, sp.csc_matrix((base.n_ineq, 6))], format="csc")
    return QpProblem.create(p, np.zeros(nf3 + 6), a_eq, base.b_eq, a_in, base.b_ineq)


@dataclass(frozen=True)
class GuidancePlan:
    """Solved guidance profile in physical units.

    ``nodes`` (m+2, 6) holds the ROE at every grid instant [m]; ``thrust``
    (m+1, 3) the RTN thrust per arc [N], exactly zero on coast arcs.
    """

    grid: TimeGrid
    nodes: np.ndarray = field(repr=False)
    thrust: np.ndarray = field(repr=False)
    mass: float
    cost: float
    solver_status: SolverStatus = SolverStatus.SOLVED
    iterations: int = 0
    solve_time: float = 0.0
    n_vars: int = 0
    qp_primal: np.ndarray | None = field(default=None, repr=False)
    qp_dual: np.ndarray | None = field(default=None, repr=False)

    @property
    def delta_v_total(self) -> float:
        return delta_v(self, self.mass)

    @property
    def node_states(self) -> list[RoeState]:
        return [RoeState.from_array(y) for y in self.nodes]

    def shifted(self, arcs: int = 2) -> "GuidancePlan":
        """Profile with the first ``arcs`` arcs dropped (reuse of a stale plan)."""
        if arcs % 2 or arcs >= self.grid.n_arcs:
            raise ValueError("can only drop an even number of arcs, leaving at least one pair")
        return replace(self, grid=self.grid.tail(arcs),
                       nodes=self.nodes[arcs:], thrust=self.thrust[arcs:],
                       qp_primal=None, qp_dual=None)


def decode(spec: GuidanceSpec, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a QP primal into node states [m] and per-arc thrust [N]."""
    n_y = 6 * spec.n_nodes
    nodes = x[:n_y].reshape(-1, 6) / _KM
    thrust = np.zeros((spec.grid.n_arcs, 3))
    thrust[0::2] = x[n_y:].reshape(-1, 3) / _MN
    return nodes, thrust


def solve_guidance(spec: GuidanceSpec, stms: list[StmPair] | None = None,
                   settings: SolverSettings = SolverSettings(), diagnose: bool = True,
                   formulation: str = "condensed") -> GuidancePlan:
    """Solve the guidance QP for ``spec`` and decode the plan.

    ``formulation`` selects which equivalent QP the solver sees: ``"condensed"``
    (thrusts only) or ``"shooting"`` (node states and thrusts, as built by
    :func:`build_problem`). Either way the plan carries primal and dual
    vectors of the shooting problem for KKT checks.

    Raises:
        Infeasible: the solver certified the problem infeasible.
        SolverMaxIters: no convergence within the iteration budget.
        IllConditioned: non-finite output.
    """
    if stms is None:
        stms = stm_pairs(spec.grid)
    if formulation == "condensed":
        problem = build_condensed_problem(spec, stms)
    elif formulation == "shooting":
        problem = build_problem(spec, stms)
    else:
        raise ValueError(f"unknown formulation {formulation!r}")
    result = solve(problem, settings)
    if result.status is SolverStatus.PRIMAL_INFEASIBLE:
        residual = boundary_residual(spec, stms, settings) if diagnose else None
        msg = "guidance problem infeasible for this grid"
        if residual is not None:
            msg += f" (minimal terminal miss {residual:.3f} m)"
        raise Infeasible(msg, result, residual)
    if result.status is SolverStatus.MAX_ITERATIONS:
        raise SolverMaxIters(f"solver stopped after {result.iterations} iterations", result)
    if result.status is not SolverStatus.SOLVED or not np.all(np.isfinite(result.primal)):
        raise IllConditioned(f"solver returned status {result.status.value}", result)
    if formulation == "condensed":
        primal, dual = expand_solution(spec, stms, result.primal, result.dual[:6], result.dual[6:])
    else:
        primal, dual = result.primal, result.dual
    nodes, thrust = decode(spec, primal)
    return GuidancePlan(spec.grid, nodes, thrust, spec.mass, result.objective, result.status,
                        result.iterations, result.solve_time, problem.n_vars, primal, dual)


def boundary_residual(spec: GuidanceSpec, stms: list[StmPair],
                      settings: SolverSettings = SolverSettings()) -> float | None:
    """Smallest reachable ``||y(t_f) - y_f||`` [m] under the thrust bounds."""
    res = solve(_relaxed_condensed(spec, stms), settings)
    if res.status not in (SolverStatus.SOLVED, SolverStatus.MAX_ITERATIONS):
        return None
    return float(np.linalg.norm(res.primal[-6:]) / _KM)


def delta_v(plan: GuidancePlan, mass: float | None = None) -> float:
    """Total velocity increment [m/s] of the plan's thrust profile."""
    mass = plan.mass if mass is None else mass
    mags = np.linalg.norm(plan.thrust, axis=1)
    return float(np.sum(mags / mass * plan.grid.durations))


def mean_slew_rates(plan: GuidancePlan, tn_per_gap=None, tol: float = 1e-9) -> np.ndarray:
    """Mean attitude rates [rad/s] between consecutive nonzero thrust directions.

    Each rate is the angle between two successive firing directions divided
    by the time the thruster is off in between (from the grid unless
    ``tn_per_gap`` overrides it).
    """
    t = plan.grid.instants
    firing = [k for k in range(0, plan.grid.n_arcs, 2) if np.linalg.norm(plan.thrust[k]) > tol]
    rates = []
    for idx, (a, b) in enumerate(zip(firing, firing[1:])):
        u = plan.thrust[a] / np.linalg.norm(plan.thrust[a])
        v = plan.thrust[b] / np.linalg.norm(plan.thrust[b])
        angle = math.atan2(np.linalg.norm(np.cross(u, v)), float(u @ v))
        gap = tn_per_gap[idx] if tn_per_gap is not None else t[b] - t[a + 1]
        rates.append(angle / gap)
    return np.array(rates)

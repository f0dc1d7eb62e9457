"""Linear ROE dynamics over thrust/coast arcs.

The state transition matrix keeps the Keplerian along-track drift and the
J2 secular terms of a near-circular chief. The convolution matrix integrates
``STM @ Gamma`` with Gauss-Legendre quadrature, where ``Gamma`` is the
near-circular Gauss variational influence of an RTN acceleration on the
dimensional ROE.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .astro import EARTH, EarthModel, OrbitalElements, RoeState, wrap_2pi

FORCED = "forced"
COAST = "coast"

NEAR_CIRCULAR_LIMIT = 0.05
GAUSS_NODES = 16


class GridError(ValueError):
    """Raised when a requested time grid cannot be built."""


def coast_time_for_slew(omega_max_deg_s: float, t_safety: float) -> float:
    """Shortest coast arc that fits a worst-case (180 deg) attitude slew."""
    if omega_max_deg_s <= 0.0:
        raise ValueError("maximum slew rate must be positive")
    if t_safety < 0.0:
        raise ValueError("safety margin must be non-negative")
    return 180.0 / omega_max_deg_s + t_safety


@dataclass(frozen=True)
class TimeGrid:
    """Switch instants of alternating forced and coast arcs.

    ``instants[k]`` to ``instants[k+1]`` is arc ``k``; even arcs are forced,
    odd arcs coast. ``chief`` holds the chief mean elements at ``instants[0]``.
    """

    instants: np.ndarray
    chief: OrbitalElements | None = None
    tn_min: float = 0.0

    def __post_init__(self):
        t = np.asarray(self.instants, dtype=float).copy()
        t.setflags(write=False)
        object.__setattr__(self, "instants", t)
        if t.ndim != 1 or len(t) < 3:
            raise GridError("a grid needs at least one forced and one coast arc")
        if np.any(np.diff(t) <= 0.0):
            raise GridError("grid instants must be strictly increasing")
        if (len(t) - 1) % 2:
            raise GridError("grid must end with a coast arc (even number of arcs)")
        coast = np.diff(t)[1::2]
        if self.tn_min > 0.0 and np.any(coast < self.tn_min * (1.0 - 1e-12)):
            raise GridError(f"coast arc shorter than the minimum slew time {self.tn_min} s")

    @property
    def m(self) -> int:
        """Index of the last arc; the grid has ``m + 1`` arcs and ``m + 2`` instants."""
        return len(self.instants) - 2

    @property
    def n_arcs(self) -> int:
        return len(self.instants) - 1

    @property
    def durations(self) -> np.ndarray:
        return np.diff(self.instants)

    @property
    def arc_kinds(self) -> tuple[str, ...]:
        return tuple(FORCED if k % 2 == 0 else COAST for k in range(self.n_arcs))

    @property
    def forced_arcs(self) -> list[int]:
        return list(range(0, self.n_arcs, 2))

    @property
    def coast_arcs(self) -> list[int]:
        return list(range(1, self.n_arcs, 2))

    @property
    def t0(self) -> float:
        return float(self.instants[0])

    @property
    def tf(self) -> float:
        return float(self.instants[-1])

    def with_chief(self, chief: OrbitalElements) -> "TimeGrid":
        return TimeGrid(self.instants, chief, self.tn_min)

    def tail(self, k: int, chief: OrbitalElements | None = None) -> "TimeGrid":
        """Grid from instant ``k`` (must start a forced arc) to the end.

        Without ``chief`` the stored chief is advanced secularly to the new start.
        """
        if k % 2:
            raise GridError("a grid tail must start on a forced arc")
        if chief is None and self.chief is not None:
            chief = advance_mean(self.chief, self.instants[k] - self.instants[0])
        return TimeGrid(self.instants[k:], chief, self.tn_min)


def _tile(start: float, end: float, tf_arc: float, tn: float, final: bool) -> list[float]:
    """Instants tiling ``[start, end]`` with forced/coast pairs.

    The returned list starts at ``start`` and always ends with a coast arc.
    For a final segment the trailing partial arc is absorbed into the last
    coast. Otherwise a leftover longer than ``tn`` becomes a shorter forced
    arc followed by a coast of length ``tn``.
    """
    pair = tf_arc + tn
    span = end - start
    n_pairs = int(math.floor(span / pair + 1e-9))
    if n_pairs < 1:
        raise GridError("horizon shorter than one forced + coast pair")
    out = [start]
    for j in range(n_pairs):
        out.append(start + j * pair + tf_arc)
        out.append(start + (j + 1) * pair)
    leftover = end - out[-1]
    if not final and leftover > tn * (1.0 + 1e-9):
        out.append(end - tn)
        out.append(end)
    else:
        out[-1] = end
    return out


def build_grid(t0: float, tf: float, tf_arc: float, tn: float,
               chief: OrbitalElements | None = None) -> TimeGrid:
    """Uniform grid of forced arcs ``tf_arc`` and coast arcs ``tn``."""
    if tf_arc <= 0.0 or tn <= 0.0:
        raise GridError("arc lengths must be positive")
    if tf - t0 < (tf_arc + tn) * (1.0 - 1e-12):
        raise GridError("horizon shorter than one forced + coast pair")
    return TimeGrid(np.array(_tile(t0, tf, tf_arc, tn, final=True)), chief, tn)


def build_grid_segments(t0: float, segments: Sequence[tuple[float, float]], tn: float,
                        chief: OrbitalElements | None = None) -> TimeGrid:
    """Grid whose forced-arc length changes per segment.

    ``segments`` is a list of ``(segment_end, tf_arc)``; the last segment end
    is the maneuver end time.
    """
    instants = [t0]
    start = t0
    for idx, (end, tf_arc) in enumerate(segments):
        final = idx == len(segments) - 1
        part = _tile(start, end, tf_arc, tn, final)
        instants.extend(part[1:])
        start = end
    return TimeGrid(np.array(instants), chief, tn)


def build_grid_with_windows(t0: float, tf: float, tf_arc: float,
                            windows: Sequence[tuple[float, float]], tn_min: float,
                            chief: OrbitalElements | None = None) -> TimeGrid:
    """Grid honoring known no-thrust windows.

    Forced arcs no longer than ``tf_arc`` tile the time outside the windows,
    separated by coasts of ``tn_min``; each window becomes part of a coast.
    """
    if not windows:
        return build_grid(t0, tf, tf_arc, tn_min, chief)
    wins = sorted((float(a), float(b)) for a, b in windows)
    for (a, b), nxt in zip(wins, wins[1:] + [(math.inf, math.inf)]):
        if a < t0 or b > tf or b <= a:
            raise GridError(f"window [{a}, {b}] outside the horizon or empty")
        if b - a < tn_min * (1.0 - 1e-12):
            raise GridError(f"window [{a}, {b}] shorter than the minimum coast {tn_min} s")
        if nxt[0] < b:
            raise GridError("no-thrust windows overlap")
    if wins[0][0] <= t0:
        raise GridError("the maneuver must start with a forced arc")

    instants = [t0]
    pos = t0
    for a, b in wins:
        # free interval [pos, a] followed by the window coast
        while True:
            forced = min(tf_arc, a - pos)
            instants.append(pos + forced)
            pos += forced
            if a - pos > tn_min * (1.0 + 1e-9):
                pos += tn_min
                instants.append(pos)
            else:
                break
        instants.append(b)
        pos = b
    if tf - pos > 1e-9:
        if tf - pos < tf_arc + tn_min:
            # too short for a forced arc and its trailing coast
            instants[-1] = tf
        else:
            instants.extend(_tile(pos, tf, tf_arc, tn_min, final=True)[1:])
    return TimeGrid(np.array(instants), chief, tn_min)


# ---------------------------------------------------------------------------
# Linear model


def _check_near_circular(chief: OrbitalElements):
    if chief.e > NEAR_CIRCULAR_LIMIT:
        warnings.warn(
            f"chief eccentricity {chief.e:.3g} exceeds the near-circular validity bound "
            f"{NEAR_CIRCULAR_LIMIT}", RuntimeWarning, stacklevel=3)


def _j2_terms(chief: OrbitalElements, body: EarthModel):
    n = chief.mean_motion(body)
    kappa = 0.75 * n * body.j2 * (body.radius / chief.a) ** 2
    ci, si = math.cos(chief.i), math.sin(chief.i)
    return n, kappa, ci, si


def plant_matrix(chief: OrbitalElements, body: EarthModel = EARTH) -> np.ndarray:
    """Constant system matrix of the unforced ROE dynamics."""
    n, kappa, ci, si = _j2_terms(chief, body)
    p = 3.0 * ci * ci - 1.0
    q = 5.0 * ci * ci - 1.0
    s = 2.0 * si * ci
    a = np.zeros((6, 6))
    a[1, 0] = -1.5 * n - 7.0 * kappa * p
    a[1, 4] = -7.0 * kappa * s
    a[2, 3] = -kappa * q
    a[3, 2] = kappa * q
    a[5, 0] = 3.5 * kappa * s
    a[5, 4] = 2.0 * kappa * si * si
    return a


def argument_of_latitude_rate(chief: OrbitalElements, body: EarthModel = EARTH) -> float:
    n, kappa, ci, _ = _j2_terms(chief, body)
    return n + kappa * (8.0 * ci * ci - 2.0)


def advance_mean(chief: OrbitalElements, dt: float, body: EarthModel = EARTH) -> OrbitalElements:
    """Chief mean elements after ``dt`` seconds of secular J2 drift."""
    _, kappa, ci, _ = _j2_terms(chief, body)
    w = kappa * (5.0 * ci * ci - 1.0) * dt
    c, s = math.cos(w), math.sin(w)
    return OrbitalElements(chief.a, wrap_2pi(chief.u + argument_of_latitude_rate(chief, body) * dt),
                           c * chief.ex - s * chief.ey, s * chief.ex + c * chief.ey, chief.i,
                           wrap_2pi(chief.raan - 2.0 * kappa * ci * dt), chief.flavor)


def stm(chief: OrbitalElements, t_start: float, t_end: float,
        body: EarthModel = EARTH) -> np.ndarray:
    """State transition matrix of the dimensional mean ROE from t_start to t_end."""
    if t_end < t_start:
        raise ValueError("t_end must not precede t_start")
    _check_near_circular(chief)
    return _stm_tau(chief, t_end - t_start, body)


def _stm_tau(chief: OrbitalElements, tau, body: EarthModel) -> np.ndarray:
    """STM for elapsed time(s) ``tau``; returns (..., 6, 6)."""
    tau = np.asarray(tau, dtype=float)
    a = plant_matrix(chief, body)
    phi = np.broadcast_to(np.eye(6), tau.shape + (6, 6)).copy()
    for i, j in ((1, 0), (1, 4), (5, 0), (5, 4)):
        phi[..., i, j] = a[i, j] * tau
    wt = a[3, 2] * tau
    c, s = np.cos(wt), np.sin(wt)
    phi[..., 2, 2] = c
    phi[..., 2, 3] = -s
    phi[..., 3, 2] = s
    phi[..., 3, 3] = c
    return phi


def _influence_at(chief: OrbitalElements, t, epoch: float, body: EarthModel) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    n = chief.mean_motion(body)
    u = chief.u + argument_of_latitude_rate(chief, body) * (t - epoch)
    cu, su = np.cos(u), np.sin(u)
    g = np.zeros(t.shape + (6, 3))
    g[..., 0, 1] = 2.0
    g[..., 1, 0] = -2.0
    g[..., 2, 0] = su
    g[..., 2, 1] = 2.0 * cu
    g[..., 3, 0] = -cu
    g[..., 3, 1] = 2.0 * su
    g[..., 4, 2] = cu
    g[..., 5, 2] = su
    return g / n


def control_influence(chief: OrbitalElements, t: float, epoch: float = 0.0,
                      body: EarthModel = EARTH) -> np.ndarray:
    """6x3 map from RTN acceleration [m/s^2] to dimensional ROE rate [m/s].

    ``chief`` holds the mean elements at time ``epoch``.
    """
    return _influence_at(chief, float(t), epoch, body)


def convolution(chief: OrbitalElements, t_start: float, t_end: float, epoch: float = 0.0,
                body: EarthModel = EARTH, nodes: int = GAUSS_NODES) -> np.ndarray:
    """6x3 convolution matrix: ROE change [m] per unit constant RTN acceleration.

    Arcs longer than half a chief orbit are split into panels, each integrated
    with ``nodes`` Gauss-Legendre points.
    """
    if t_end < t_start:
        raise ValueError("t_end must not precede t_start")
    if t_end == t_start:
        return np.zeros((6, 3))
    _check_near_circular(chief)
    half_orbit = 0.5 * chief.period(body)
    panels = max(1, math.ceil((t_end - t_start) / half_orbit))
    x, w = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(t_start, t_end, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    tau = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    phi = _stm_tau(chief, t_end - tau, body)
    gam = _influence_at(chief, tau, epoch, body)
    return np.einsum("k,kij,kjl->il", weights, phi, gam)


@dataclass(frozen=True)
class StmPair:
    phi: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)


def stm_pairs(grid: TimeGrid, chief: OrbitalElements | None = None,
              body: EarthModel = EARTH) -> list[StmPair]:
    """One (phi, psi) pair per arc of ``grid``; coast arcs get a zero psi."""
    chief = chief or grid.chief
    if chief is None:
        raise ValueError("grid has no chief elements; pass them explicitly")
    epoch = grid.t0
    pairs = []
    for k, (a, b) in enumerate(zip(grid.instants[:-1], grid.instants[1:])):
        phi = stm(chief, a, b, body)
        psi = convolution(chief, a, b, epoch, body) if k % 2 == 0 else np.zeros((6, 3))
        pairs.append(StmPair(phi, psi))
    return pairs


def propagate_segment(y, chief: OrbitalElements, t_start: float, t_end: float, f_rtn,
                      mass: float, epoch: float = 0.0, body: EarthModel = EARTH) -> RoeState:
    """Advance dimensional mean ROE across one arc with constant RTN thrust [N]."""
    y = y.as_array() if isinstance(y, RoeState) else np.asarray(y, dtype=float)
    f = np.asarray(f_rtn, dtype=float)
    out = stm(chief, t_start, t_end, body) @ y
    if np.any(f != 0.0):
        out = out + convolution(chief, t_start, t_end, epoch, body) @ (f / mass)
    return RoeState.from_array(out)

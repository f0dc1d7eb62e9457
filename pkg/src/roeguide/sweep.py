"""Forced/coast arc length sensitivity campaign.

Every (Tf, Tn) cell solves the guidance problem for the same set of random
initial ROE (common random numbers), so differences between cells reflect
the grid and not the draw.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from .astro import OrbitalElements, RoeState, osc_to_mean
from .closed_loop import make_rng
from .dynamics import GridError, build_grid, stm_pairs
from .guidance import GuidanceError, GuidanceSpec, solve_guidance
from .qp import SolverSettings

DEFAULT_TF_ORBITS = (0.025, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.6, 0.7)
DEFAULT_TN_S = (60.0, 90.0, 120.0, 150.0, 180.0, 210.0, 240.0)
DEFAULT_Y0_RANGES_M = ((-1e3, 1e3), (-1e5, 1e5), (-1e3, 1e3), (-1e3, 1e3), (-1e3, 1e3), (-1e3, 1e3))


@dataclass(frozen=True)
class SweepConfig:
    chief_osc: OrbitalElements
    tf_values: tuple[float, ...] = DEFAULT_TF_ORBITS  # orbits
    tn_values: tuple[float, ...] = DEFAULT_TN_S  # s
    samples_per_cell: int = 100
    y0_ranges: tuple[tuple[float, float], ...] = DEFAULT_Y0_RANGES_M  # m
    yf: tuple[float, ...] = (0.0,) * 6  # m
    horizon_orbits: float = 15.0
    mass: float = 200.0
    f_max: float = 7e-3
    n_dir: int = 12
    gamma_first: float = 0.0
    rng_seed: int = 0
    solver: SolverSettings = SolverSettings()

    def __post_init__(self):
        if not self.tf_values or not self.tn_values:
            raise ValueError("Tf and Tn grids must be nonempty")
        if self.samples_per_cell < 1:
            raise ValueError("samples_per_cell must be at least 1")
        if len(self.y0_ranges) != 6 or any(
                not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi) for lo, hi in self.y0_ranges):
            raise ValueError("y0_ranges needs six finite (low, high) pairs")

    def draw_samples(self) -> np.ndarray:
        rng = make_rng(self.rng_seed)
        lo = np.array([r[0] for r in self.y0_ranges])
        hi = np.array([r[1] for r in self.y0_ranges])
        return lo + (hi - lo) * rng.random((self.samples_per_cell, 6))


@dataclass
class CellResult:
    tf_orbits: float
    tn_s: float
    statuses: list[str]
    costs: np.ndarray
    n_vars: int = 0
    diagnostics: list[str] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return all(s == "Solved" for s in self.statuses)

    @property
    def mean_cost(self) -> float:
        return float(np.mean(self.costs)) if self.success else math.nan

    @property
    def fitness(self) -> float:
        c = self.mean_cost
        if not self.success:
            return math.nan
        return math.inf if c == 0.0 else 1.0 / c


@dataclass
class SweepResult:
    tf_values: tuple[float, ...]
    tn_values: tuple[float, ...]
    cells: list[CellResult]
    samples: np.ndarray = field(repr=False)

    def cell(self, tf: float, tn: float) -> CellResult:
        for c in self.cells:
            if math.isclose(c.tf_orbits, tf) and math.isclose(c.tn_s, tn):
                return c
        raise KeyError((tf, tn))

    def success_map(self) -> np.ndarray:
        """Boolean grid indexed [Tf, Tn]."""
        return np.array([[self.cell(tf, tn).success for tn in self.tn_values]
                         for tf in self.tf_values])


def run_cell(config: SweepConfig, tf_orbits: float, tn_s: float, samples: np.ndarray,
             chief_mean: OrbitalElements | None = None) -> CellResult:
    """Solve every sample on one grid; solver failures are recorded, not raised."""
    chief = chief_mean or osc_to_mean(config.chief_osc)
    period = chief.period()
    yf = RoeState.from_array(config.yf)
    try:
        grid = build_grid(0.0, config.horizon_orbits * period, tf_orbits * period, tn_s, chief)
    except GridError as exc:
        n = len(samples)
        return CellResult(tf_orbits, tn_s, ["GridError"] * n, np.full(n, np.nan), 0, [str(exc)] * n)
    stms = stm_pairs(grid)
    statuses, costs, diags = [], [], []
    n_vars = 0
    for y0 in samples:
        spec = GuidanceSpec(grid, RoeState.from_array(y0), yf, config.f_max, config.mass,
                            config.n_dir, config.gamma_first)
        try:
            plan = solve_guidance(spec, stms, config.solver, diagnose=False)
        except GuidanceError as exc:
            statuses.append(type(exc).__name__)
            costs.append(math.nan)
            diags.append(str(exc))
            continue
        n_vars = plan.n_vars
        statuses.append("Solved")
        costs.append(plan.cost)
        diags.append("")
    return CellResult(tf_orbits, tn_s, statuses, np.array(costs), n_vars, diags)


def run_sweep(config: SweepConfig, progress=None) -> SweepResult:
    """Run every (Tf, Tn) cell in a fixed order; ``progress(cell)`` is called after each."""
    samples = config.draw_samples()
    chief = osc_to_mean(config.chief_osc)
    cells = []
    for tf in config.tf_values:
        for tn in config.tn_values:
            cell = run_cell(config, tf, tn, samples, chief)
            cells.append(cell)
            if progress is not None:
                progress(cell)
    return SweepResult(tuple(config.tf_values), tuple(config.tn_values), cells, samples)


def fitness_map(result: SweepResult) -> np.ndarray:
    """Reciprocal mean cost on success cells, NaN elsewhere; indexed [Tf, Tn]."""
    return np.array([[result.cell(tf, tn).fitness for tn in result.tn_values]
                     for tf in result.tf_values])


def trend_correlations(result: SweepResult) -> tuple[dict[float, float], dict[float, float]]:
    """Spearman correlation of fitness with Tf (per Tn) and with Tn (per Tf).

    Only success cells enter; lines with fewer than three of them are skipped.
    """
    fit = fitness_map(result)
    tf = np.array(result.tf_values)
    tn = np.array(result.tn_values)
    with_tf, with_tn = {}, {}
    for j, tn_val in enumerate(tn):
        ok = np.isfinite(fit[:, j])
        if ok.sum() >= 3:
            with_tf[float(tn_val)] = float(spearmanr(tf[ok], fit[ok, j]).statistic)
    for i, tf_val in enumerate(tf):
        ok = np.isfinite(fit[i, :])
        if ok.sum() >= 3:
            rho = spearmanr(tn[ok], fit[i, ok]).statistic
            with_tn[float(tf_val)] = float(rho)
    return with_tf, with_tn

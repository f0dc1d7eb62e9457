"""Convex QP solver of the operator-splitting (ADMM) family.

Problems have the canonical form::

    minimize    0.5 x'Px + q'x
    subject to  A_eq x = b_eq
                A_ineq x <= b_ineq

Internally the constraints are stacked as ``l <= A x <= u`` and solved with
the OSQP iteration: Ruiz equilibration, relaxed ADMM steps on a quasi-definite
KKT system, adaptive penalty, infeasibility certificates and an active-set
polish. Matrices are stored sparse; the guidance problems of long horizons
reach several thousand variables.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

INF = np.inf
_RHO_MIN = 1e-6
_RHO_MAX = 1e6
_RHO_EQ_FACTOR = 1e3
_SCALE_MIN = 1e-4
_SCALE_MAX = 1e4


class SolverStatus(str, Enum):
    SOLVED = "Solved"
    MAX_ITERATIONS = "MaxIterations"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    DUAL_INFEASIBLE = "DualInfeasible"


class QpError(ValueError):
    """Malformed problem data (dimensions, non-PSD cost)."""


def _as_csc(m, shape) -> sp.csc_matrix:
    if m is None:
        return sp.csc_matrix(shape)
    out = sp.csc_matrix(m, dtype=float)
    if out.shape != shape:
        raise QpError(f"matrix shape {out.shape} does not match expected {shape}")
    return out


@dataclass(frozen=True)
class QpProblem:
    """Convex QP ``min 0.5 x'Px + q'x`` s.t. ``A_eq x = b_eq``, ``A_ineq x <= b_ineq``."""

    P: sp.csc_matrix
    q: np.ndarray
    A_eq: sp.csc_matrix
    b_eq: np.ndarray
    A_ineq: sp.csc_matrix
    b_ineq: np.ndarray

    @classmethod
    def create(cls, P, q, A_eq=None, b_eq=None, A_ineq=None, b_ineq=None) -> "QpProblem":
        q = np.asarray(q, dtype=float).ravel()
        n = q.size
        b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
        b_ineq = np.zeros(0) if b_ineq is None else np.asarray(b_ineq, dtype=float).ravel()
        P = _as_csc(P, (n, n))
        asym = abs(P - P.T).max() if P.nnz else 0.0
        if asym > 1e-12 * max(1.0, abs(P).max() if P.nnz else 0.0):
            raise QpError("cost matrix is not symmetric")
        return cls(P, q, _as_csc(A_eq, (b_eq.size, n)), b_eq,
                   _as_csc(A_ineq, (b_ineq.size, n)), b_ineq)

    @property
    def n_vars(self) -> int:
        return self.q.size

    @property
    def n_eq(self) -> int:
        return self.b_eq.size

    @property
    def n_ineq(self) -> int:
        return self.b_ineq.size

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ (self.P @ x) + self.q @ x)

    def stacked(self):
        """Constraints as ``l <= A x <= u`` (equalities first)."""
        a = sp.vstack([self.A_eq, self.A_ineq], format="csc")
        lo = np.concatenate([self.b_eq, np.full(self.n_ineq, -INF)])
        hi = np.concatenate([self.b_eq, self.b_ineq])
        return a, lo, hi


@dataclass(frozen=True)
class SolverSettings:
    max_iterations: int = 20000
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    eps_prim_inf: float = 1e-5
    eps_dual_inf: float = 1e-5
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    adaptive_rho: bool = True
    adaptive_rho_interval: int = 50
    check_interval: int = 10
    scaling_iterations: int = 10
    polish: bool = True
    polish_delta: float = 1e-9
    polish_refine_iterations: int = 5
    polish_interval: int = 100  # also try the active-set polish during the iteration

    def __post_init__(self):
        if self.eps_abs <= 0.0 or self.eps_rel <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.rho <= 0.0 or self.sigma <= 0.0 or not 0.0 < self.alpha < 2.0:
            raise ValueError("rho, sigma must be positive and alpha in (0, 2)")


@dataclass
class SolverResult:
    """Solution or certificate.

    ``dual`` stacks equality multipliers then inequality multipliers (the
    latter non-negative at optimality). For infeasible problems ``certificate``
    carries the Farkas vector (primal) or the unbounded direction (dual).
    """

    status: SolverStatus
    primal: np.ndarray
    dual: np.ndarray
    objective: float
    iterations: int
    solve_time: float
    polished: bool = False
    certificate: np.ndarray | None = field(default=None, repr=False)

    @property
    def solved(self) -> bool:
        return self.status is SolverStatus.SOLVED


def kkt_residuals(problem: QpProblem, primal, dual) -> tuple[float, float, float]:
    """Infinity-norm KKT residuals (primal feasibility, dual, complementarity).

    ``r_dual`` covers both stationarity and the sign of the inequality
    multipliers.
    """
    x = np.asarray(primal, dtype=float)
    y = np.asarray(dual, dtype=float)
    y_eq, y_in = y[:problem.n_eq], y[problem.n_eq:]
    r_eq = problem.A_eq @ x - problem.b_eq
    slack = problem.b_ineq - problem.A_ineq @ x
    r_prim = max(np.max(np.abs(r_eq), initial=0.0), np.max(-slack, initial=0.0))
    grad = problem.P @ x + problem.q + problem.A_eq.T @ y_eq + problem.A_ineq.T @ y_in
    r_dual = max(np.max(np.abs(grad), initial=0.0), np.max(-y_in, initial=0.0))
    r_gap = np.max(np.abs(y_in * slack), initial=0.0)
    return float(r_prim), float(r_dual), float(r_gap)


def _check_psd(p: sp.csc_matrix):
    diag_only = p.nnz == np.count_nonzero(p.diagonal())
    if diag_only:
        bad = np.min(p.diagonal(), initial=0.0) < 0.0
    else:
        eig = np.linalg.eigvalsh(p.toarray())
        bad = eig.min(initial=0.0) < -1e-10 * max(1.0, np.abs(eig).max(initial=0.0))
    if bad:
        raise QpError("cost matrix is not positive semidefinite")


def _norm_inf(v) -> float:
    return float(np.max(np.abs(v), initial=0.0))


def _col_norms(m: sp.csc_matrix) -> np.ndarray:
    return np.asarray(abs(m).max(axis=0).toarray()).ravel() if m.shape[0] else np.zeros(m.shape[1])


def _row_norms(m: sp.csc_matrix) -> np.ndarray:
    return np.asarray(abs(m).max(axis=1).toarray()).ravel() if m.shape[1] else np.zeros(m.shape[0])


class _Scaling:
    """Ruiz equilibration of the KKT matrix plus a cost scale."""

    def __init__(self, p, q, a, iterations):
        n, m = p.shape[0], a.shape[0]
        d = np.ones(n)
        e = np.ones(m)
        c = 1.0
        ps, qs, as_ = p.copy(), q.copy(), a.copy()
        for _ in range(iterations):
            col = np.maximum(_col_norms(ps), _col_norms(as_))
            row = _row_norms(as_)
            dd = 1.0 / np.sqrt(np.clip(col, _SCALE_MIN, _SCALE_MAX))
            ee = 1.0 / np.sqrt(np.clip(row, _SCALE_MIN, _SCALE_MAX))
            dd[col == 0.0] = 1.0
            ee[row == 0.0] = 1.0
            dm, em = sp.diags(dd), sp.diags(ee)
            ps = (dm @ ps @ dm).tocsc()
            as_ = (em @ as_ @ dm).tocsc()
            qs = dd * qs
            d *= dd
            e *= ee
        # one bounded cost scale; compounding it per pass lets it run away
        mean_col = np.mean(_col_norms(ps)) if n else 0.0
        gamma = max(mean_col, _norm_inf(qs))
        if gamma > 0.0:
            c = 1.0 / float(np.clip(gamma, _SCALE_MIN, _SCALE_MAX))
            ps = ps * c
            qs = qs * c
        self.d, self.e, self.c = d, e, c
        self.p, self.q, self.a = ps.tocsc(), qs, as_.tocsc()


class _KktSolver:
    def __init__(self, p, a, sigma, rho_vec):
        n = p.shape[0]
        kkt = sp.bmat([[p + sigma * sp.identity(n), a.T],
                       [a, -sp.diags(1.0 / rho_vec)]], format="csc")
        self._lu = spla.splu(kkt)
        self.n = n

    def solve(self, rhs):
        return self._lu.solve(rhs)


def _rho_vector(lo, hi, rho):
    out = np.full(lo.size, rho)
    eq = np.isclose(lo, hi, rtol=0.0, atol=1e-12) & np.isfinite(lo)
    free = ~np.isfinite(lo) & ~np.isfinite(hi)
    out[eq] = rho * _RHO_EQ_FACTOR
    out[free] = _RHO_MIN
    return out


def solve(problem: QpProblem, settings: SolverSettings = SolverSettings()) -> SolverResult:
    """Solve ``problem`` with ADMM; see module docstring for the iteration."""
    start = time.perf_counter()
    _check_psd(problem.P)
    n = problem.n_vars
    a_raw, lo_raw, hi_raw = problem.stacked()
    m = lo_raw.size
    sc = _Scaling(problem.P, problem.q, a_raw, settings.scaling_iterations)
    d, e, c = sc.d, sc.e, sc.c
    p, q, a = sc.p, sc.q, sc.a
    lo = np.where(np.isfinite(lo_raw), e * lo_raw, -INF)
    hi = np.where(np.isfinite(hi_raw), e * hi_raw, INF)

    rho = settings.rho
    rho_vec = _rho_vector(lo, hi, rho)
    kkt = _KktSolver(p, a, settings.sigma, rho_vec)
    sigma, alpha = settings.sigma, settings.alpha

    x = np.zeros(n)
    z = np.zeros(m)
    y = np.zeros(m)
    status = SolverStatus.MAX_ITERATIONS
    certificate = None
    it = 0
    polished = False
    early_polish = settings.polish and settings.polish_interval > 0 and m > 0

    def residuals(x, z, y):
        ax = a @ x
        px = p @ x
        aty = a.T @ y
        r_prim = _norm_inf((ax - z) / e) if m else 0.0
        r_dual = _norm_inf((px + q + aty) / d) / c
        eps_prim = settings.eps_abs + settings.eps_rel * max(
            _norm_inf(ax / e) if m else 0.0, _norm_inf(z / e) if m else 0.0)
        eps_dual = settings.eps_abs + settings.eps_rel / c * max(
            _norm_inf(px / d), _norm_inf(aty / d), _norm_inf(q / d))
        return r_prim, r_dual, eps_prim, eps_dual, ax, px, aty

    for it in range(1, settings.max_iterations + 1):
        x_prev, y_prev = x, y
        rhs = np.concatenate([sigma * x - q, z - y / rho_vec])
        sol = kkt.solve(rhs)
        x_t = sol[:n]
        z_t = z + (sol[n:] - y) / rho_vec
        x = alpha * x_t + (1.0 - alpha) * x_prev
        z_relax = alpha * z_t + (1.0 - alpha) * z
        z = np.clip(z_relax + y / rho_vec, lo, hi)
        y = y + rho_vec * (z_relax - z)

        check = it % settings.check_interval == 0 or it == settings.max_iterations
        adapt = settings.adaptive_rho and it % settings.adaptive_rho_interval == 0
        if not (check or adapt):
            continue
        r_prim, r_dual, eps_prim, eps_dual, ax, px, aty = residuals(x, z, y)
        if early_polish and it % settings.polish_interval == 0:
            pol = _polish(p, q, a, lo, hi, x, z, y, settings)
            if pol is not None:
                rp = residuals(*pol)
                if rp[0] <= rp[2] and rp[1] <= rp[3]:
                    x, z, y = pol
                    status = SolverStatus.SOLVED
                    polished = True
                    break
        if check:
            if r_prim <= eps_prim and r_dual <= eps_dual:
                status = SolverStatus.SOLVED
                break
            cert = _primal_infeasibility(y - y_prev, a, lo, hi, d, e, settings.eps_prim_inf)
            if cert is not None:
                status = SolverStatus.PRIMAL_INFEASIBLE
                certificate = cert
                break
            cert = _dual_infeasibility(x - x_prev, p, q, a, lo, hi, d, e, c, settings.eps_dual_inf)
            if cert is not None:
                status = SolverStatus.DUAL_INFEASIBLE
                certificate = cert
                break
        if adapt and m:
            s_prim = _norm_inf(ax - z) / max(_norm_inf(ax), _norm_inf(z), 1e-30)
            s_dual = _norm_inf(px + q + aty) / max(_norm_inf(px), _norm_inf(aty), _norm_inf(q), 1e-30)
            rho_new = float(np.clip(rho * np.sqrt(s_prim / max(s_dual, 1e-30)), _RHO_MIN, _RHO_MAX))
            if rho_new > 5.0 * rho or rho_new < 0.2 * rho:
                rho = rho_new
                rho_vec = _rho_vector(lo, hi, rho)
                kkt = _KktSolver(p, a, sigma, rho_vec)

    if status is SolverStatus.SOLVED and settings.polish and m and not polished:
        pol = _polish(p, q, a, lo, hi, x, z, y, settings)
        if pol is not None:
            xp, zp, yp = pol
            r0 = residuals(x, z, y)
            r1 = residuals(xp, zp, yp)
            if max(r1[0], r1[1]) <= max(r0[0], r0[1], 1e-15) or (r1[0] <= r1[2] and r1[1] <= r1[3]):
                x, z, y = xp, zp, yp
                polished = True

    if status in (SolverStatus.SOLVED, SolverStatus.MAX_ITERATIONS):
        x_out = d * x
        y_out = e * y / c
        obj = problem.objective(x_out)
    else:
        x_out = np.full(n, np.nan)
        y_out = np.full(m, np.nan)
        obj = np.inf if status is SolverStatus.PRIMAL_INFEASIBLE else -np.inf
    return SolverResult(status, x_out, y_out, obj, it, time.perf_counter() - start,
                        polished, certificate)


def _primal_infeasibility(dy, a, lo, hi, d, e, eps):
    if not dy.size:
        return None
    norm = _norm_inf(e * dy)
    if norm <= 1e-30:
        return None
    aty = _norm_inf((a.T @ dy) / d)
    up = np.where(np.isfinite(hi), hi, 0.0) @ np.maximum(dy, 0.0)
    down = np.where(np.isfinite(lo), lo, 0.0) @ np.minimum(dy, 0.0)
    # a positive multiplier on an infinite bound invalidates the certificate
    if np.any((dy > eps * norm) & ~np.isfinite(hi)) or np.any((dy < -eps * norm) & ~np.isfinite(lo)):
        return None
    if aty <= eps * norm and up + down < -eps * norm:
        return e * dy / norm
    return None


def _dual_infeasibility(dx, p, q, a, lo, hi, d, e, c, eps):
    norm = _norm_inf(d * dx)
    if norm <= 1e-30:
        return None
    if _norm_inf((p @ dx) / d) > eps * c * norm or q @ dx > -eps * c * norm:
        return None
    adx = (a @ dx) / e
    tol = eps * norm
    ok_hi = np.where(np.isfinite(hi), adx <= tol, True)
    ok_lo = np.where(np.isfinite(lo), adx >= -tol, True)
    if np.all(ok_hi & ok_lo):
        return d * dx / norm
    return None


def _polish(p, q, a, lo, hi, x, z, y, settings):
    """Solve the equality-constrained QP on the guessed active set."""
    lower = (z - lo < -y) | (np.isclose(lo, hi) & np.isfinite(lo))
    upper = (hi - z < y) & ~lower
    active = np.flatnonzero(lower | upper)
    n = p.shape[0]
    a_act = a[active]
    bound = np.where(lower[active], lo[active], hi[active])
    delta = settings.polish_delta
    k = len(active)
    kkt = sp.bmat([[p + delta * sp.identity(n), a_act.T],
                   [a_act, -delta * sp.identity(k)]], format="csc")
    exact = sp.bmat([[p, a_act.T], [a_act, None]], format="csc")
    try:
        lu = spla.splu(kkt)
    except RuntimeError:
        return None
    rhs = np.concatenate([-q, bound])
    sol = lu.solve(rhs)
    for _ in range(settings.polish_refine_iterations):
        sol = sol + lu.solve(rhs - exact @ sol)
    if not np.all(np.isfinite(sol)):
        return None
    xp = sol[:n]
    yp = np.zeros_like(y)
    yp[active] = sol[n:]
    # wrong-signed multipliers mean the active set guess is wrong
    ineq = ~(np.isclose(lo, hi) & np.isfinite(lo))
    tol = 1e-9 * max(1.0, _norm_inf(yp))
    if np.any(ineq & lower & (yp > tol)) or np.any(ineq & upper & (yp < -tol)):
        return None
    zp = a @ xp
    return xp, np.clip(zp, lo, hi), yp

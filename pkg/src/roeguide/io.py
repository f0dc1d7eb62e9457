"""CSV profiles, trace tables and JSON summaries."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from .closed_loop import LoopTrace
from .dynamics import COAST, FORCED
from .guidance import GuidancePlan
from .sweep import SweepResult

PROFILE_HEADER = "# roeguide-profile v1"
TRACE_HEADER = "# roeguide-trace v1"
SWEEP_HEADER = "# roeguide-sweep v1"

ROE_COLUMNS = ("da_m", "dlambda_m", "dex_m", "dey_m", "dix_m", "diy_m")
PROFILE_COLUMNS = ("time_s", "time_orbits", *ROE_COLUMNS, "f_r_mN", "f_t_mN", "f_n_mN",
                   "arc_kind", "delta_v_cum_m_s")


def _fmt(v) -> str:
    return repr(float(v))


def plan_rows(plan: GuidancePlan, period: float) -> list[dict[str, Any]]:
    """One row per grid instant; thrust and arc kind describe the arc that starts there."""
    t = plan.grid.instants
    dv = 0.0
    rows = []
    for k in range(len(t)):
        if k < plan.grid.n_arcs:
            f = plan.thrust[k]
            kind = FORCED if k % 2 == 0 else COAST
        else:
            f = np.zeros(3)
            kind = "end"
        rows.append({"time_s": t[k], "time_orbits": t[k] / period,
                     **dict(zip(ROE_COLUMNS, plan.nodes[k])),
                     "f_r_mN": f[0] * 1e3, "f_t_mN": f[1] * 1e3, "f_n_mN": f[2] * 1e3,
                     "arc_kind": kind, "delta_v_cum_m_s": dv})
        if k < plan.grid.n_arcs:
            dv += float(np.linalg.norm(f)) / plan.mass * (t[k + 1] - t[k])
    return rows


def _write_table(path: Path, header: str, columns, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(header + "\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([r[c] if isinstance(r[c], str) else _fmt(r[c]) for c in columns])


def _read_table(path: Path, header: str) -> list[dict[str, Any]]:
    with Path(path).open(newline="") as fh:
        first = fh.readline().rstrip("\n")
        if first != header:
            raise ValueError(f"{path}: expected header {header!r}, found {first!r}")
        out = []
        for row in csv.DictReader(fh):
            parsed = {}
            for k, v in row.items():
                try:
                    parsed[k] = float(v)
                except ValueError:
                    parsed[k] = v
            out.append(parsed)
        return out


def write_profile(path, plan: GuidancePlan, period: float):
    _write_table(path, PROFILE_HEADER, PROFILE_COLUMNS, plan_rows(plan, period))


def read_profile(path) -> list[dict[str, Any]]:
    return _read_table(path, PROFILE_HEADER)


def trace_columns():
    cols = ["k", "time_s", "time_orbits"]
    cols += [f"true_{c}" for c in ROE_COLUMNS]
    cols += [f"est_{c}" for c in ROE_COLUMNS]
    cols += [f"pred_{c}" for c in ROE_COLUMNS]
    cols += ["cmd_f_r_mN", "cmd_f_t_mN", "cmd_f_n_mN", "app_f_r_mN", "app_f_t_mN", "app_f_n_mN",
             "arc_kind", "resolved", "solve_status", "n_vars", "solve_time_s", "delta_v_cum_m_s"]
    return cols


def trace_rows(trace: LoopTrace, period: float, mass: float) -> list[dict[str, Any]]:
    rows = []
    dv = 0.0
    times = [s.time for s in trace.steps] + [trace.final_time]
    nan6 = np.full(6, math.nan)
    for idx, s in enumerate(trace.steps):
        r: dict[str, Any] = {"k": s.k, "time_s": s.time, "time_orbits": s.time / period}
        for pre, vec in (("true", s.y_true), ("est", s.y_est), ("pred", s.y_pred)):
            vec = nan6 if vec is None else vec
            r.update({f"{pre}_{c}": v for c, v in zip(ROE_COLUMNS, vec)})
        for pre, f in (("cmd", s.f_cmd), ("app", s.f_applied)):
            r.update({f"{pre}_f_r_mN": f[0] * 1e3, f"{pre}_f_t_mN": f[1] * 1e3,
                      f"{pre}_f_n_mN": f[2] * 1e3})
        r.update({"arc_kind": FORCED if s.k % 2 == 0 else COAST,
                  "resolved": "yes" if s.resolved else "no",
                  "solve_status": s.solve_status or "-", "n_vars": s.n_vars,
                  "solve_time_s": s.solve_time, "delta_v_cum_m_s": dv})
        dv += float(np.linalg.norm(s.f_applied)) / mass * (times[idx + 1] - times[idx])
        rows.append(r)
    end = {c: math.nan for c in trace_columns()}
    end.update({"k": len(trace.steps), "time_s": trace.final_time,
                "time_orbits": trace.final_time / period, "arc_kind": "end", "resolved": "no",
                "solve_status": "-", "n_vars": 0, "solve_time_s": 0.0, "delta_v_cum_m_s": dv})
    end.update({f"true_{c}": v for c, v in zip(ROE_COLUMNS, trace.final_roe)})
    for pre in ("cmd", "app"):
        end.update({f"{pre}_f_r_mN": 0.0, f"{pre}_f_t_mN": 0.0, f"{pre}_f_n_mN": 0.0})
    rows.append(end)
    return rows


def write_trace(path, trace: LoopTrace, period: float, mass: float):
    _write_table(path, TRACE_HEADER, trace_columns(), trace_rows(trace, period, mass))


def read_trace(path) -> list[dict[str, Any]]:
    return _read_table(path, TRACE_HEADER)


SWEEP_COLUMNS = ("tf_orbits", "tn_s", "success", "n_samples", "n_solved", "mean_cost_mN2",
                 "fitness_per_mN2", "n_vars", "statuses")


def sweep_rows(result: SweepResult) -> list[dict[str, Any]]:
    rows = []
    for c in result.cells:
        rows.append({"tf_orbits": c.tf_orbits, "tn_s": c.tn_s,
                     "success": "yes" if c.success else "no", "n_samples": len(c.statuses),
                     "n_solved": sum(s == "Solved" for s in c.statuses),
                     "mean_cost_mN2": c.mean_cost, "fitness_per_mN2": c.fitness,
                     "n_vars": c.n_vars, "statuses": ";".join(c.statuses)})
    return rows


def write_sweep(path, result: SweepResult):
    _write_table(path, SWEEP_HEADER, SWEEP_COLUMNS, sweep_rows(result))


def read_sweep(path) -> list[dict[str, Any]]:
    return _read_table(path, SWEEP_HEADER)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_summary(path, summary: dict[str, Any]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(summary), indent=2) + "\n")


def read_summary(path) -> dict[str, Any]:
    return json.loads(Path(path).read_text())

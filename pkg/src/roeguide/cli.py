"""Command-line front end: ``guide``, ``simulate``, ``sweep``, ``benchmark``."""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .astro import ElementError
from .closed_loop import InfeasibleAtStart, run_loop, run_monte_carlo
from .dynamics import GridError
from .guidance import (
    GuidanceError,
    Infeasible,
    delta_v,
    mean_slew_rates,
    solve_guidance,
)
from .io import write_profile, write_summary, write_sweep, write_trace
from .scenario import ScenarioError, load_scenario, load_sweep
from .sweep import fitness_map, run_sweep, trend_correlations
from .truth import PropagationError

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4
EXIT_PROPAGATION = 5

PUBLISHED_PROPOSED = ([-0.6, -0.1, 0.7, 1.1, -0.3, 0.3], 0.65)
PUBLISHED_REFERENCE = ([3.6, -9.2, 1.4, -2.0, 2.9, -1.6], 0.5)


def _vec(v) -> str:
    return "[" + " ".join(f"{x:7.2f}" for x in v) + "]"


def cmd_guide(args) -> int:
    sc = load_scenario(args.scenario)
    spec = sc.guidance_spec()
    plan = solve_guidance(spec)
    period = sc.period()
    out = Path(args.out)
    write_profile(out / "profile.csv", plan, period)
    rates = mean_slew_rates(plan)
    summary = {
        "scenario": sc.name, "kind": "guide", "n_arcs": spec.grid.n_arcs,
        "delta_v_total_m_s": delta_v(plan), "cost_mN2": plan.cost,
        "terminal_node_m": plan.nodes[-1], "terminal_miss_m": float(
            np.linalg.norm(plan.nodes[-1] - spec.yf.as_array())),
        "max_mean_slew_rate_deg_s": math.degrees(rates.max()) if rates.size else 0.0,
        "solver_iterations": plan.iterations, "solve_time_s": plan.solve_time,
    }
    write_summary(out / "summary.json", summary)
    print(f"scenario {sc.name or args.scenario}: {spec.grid.n_arcs} arcs, "
          f"delta-V {summary['delta_v_total_m_s']:.4f} m/s, "
          f"terminal miss {summary['terminal_miss_m']:.3e} m")
    return EXIT_OK


def _seed_list(args, default_seed: int) -> list[int]:
    base = args.seed if args.seed is not None else default_seed
    return list(range(base, base + args.seeds)) if args.seeds else [base]


def cmd_simulate(args) -> int:
    sc = load_scenario(args.scenario)
    cfg = sc.loop_config()
    period = sc.period()
    chief, deputy = sc.chief_osc(), sc.deputy_osc()
    out = Path(args.out)
    seeds = _seed_list(args, sc.seed)
    runs = []
    for seed in seeds:
        trace = run_loop(cfg, sc.noise_model(seed), chief, deputy)
        write_trace(out / f"trace_seed{seed}.csv", trace, period, cfg.mass)
        runs.append({"seed": seed, "delta_v_total_m_s": trace.delta_v_total,
                     "terminal_error_m": trace.terminal_error,
                     "resolve_steps": trace.resolve_steps,
                     "resolve_count": len(trace.resolve_steps),
                     "solve_time_s": [s.solve_time for s in trace.steps if s.resolved]})
        print(f"seed {seed}: delta-V {trace.delta_v_total:.4f} m/s, terminal error "
              f"{_vec(trace.terminal_error)} m, re-solves {len(trace.resolve_steps)}")
    summary = {"scenario": sc.name, "kind": "simulate", "runs": runs}
    if len(runs) > 1:
        dv = np.array([r["delta_v_total_m_s"] for r in runs])
        err = np.array([r["terminal_error_m"] for r in runs])
        summary["aggregate"] = {
            "n_runs": len(runs), "median_delta_v_m_s": float(np.median(dv)),
            "mean_delta_v_m_s": float(np.mean(dv)),
            "median_terminal_error_m": np.median(err, axis=0),
            "median_abs_terminal_error_m": np.median(np.abs(err), axis=0),
        }
    write_summary(out / "summary.json", summary)
    return EXIT_OK


def cmd_sweep(args) -> int:
    sf = load_sweep(args.scenario or "sweep")
    cfg = sf.sweep_config(fast=args.fast)
    if args.seed is not None:
        from dataclasses import replace
        cfg = replace(cfg, rng_seed=args.seed)

    def progress(cell):
        if args.verbose:
            print(f"Tf {cell.tf_orbits:5.3f} orb  Tn {cell.tn_s:5.0f} s  "
                  f"{'success' if cell.success else 'failure'}", flush=True)

    result = run_sweep(cfg, progress)
    out = Path(args.out)
    write_sweep(out / "sweep.csv", result)
    with_tf, with_tn = trend_correlations(result)
    summary = {"kind": "sweep", "samples_per_cell": cfg.samples_per_cell,
               "n_cells": len(result.cells),
               "n_success": int(sum(c.success for c in result.cells)),
               "tf_orbits": result.tf_values, "tn_s": result.tn_values,
               "success_map": result.success_map().astype(int),
               "fitness_map_per_mN2": fitness_map(result),
               "spearman_fitness_vs_tf_per_tn": with_tf,
               "spearman_fitness_vs_tn_per_tf": with_tn}
    write_summary(out / "summary.json", summary)
    print(f"sweep: {summary['n_success']}/{summary['n_cells']} success cells, "
          f"{cfg.samples_per_cell} samples per cell")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    sc = load_scenario(args.scenario or "table2_benchmark")
    cfg = sc.loop_config()
    seeds = _seed_list(args, sc.seed) if (args.seeds or args.seed is not None) else \
        list(range(sc.seed, sc.seed + 20))
    summary = run_monte_carlo(cfg, sc.noise_model(), sc.chief_osc(), sc.deputy_osc(), seeds)
    if not summary.seeds:
        print("benchmark: every run failed", file=sys.stderr)
        return EXIT_SOLVER
    med = summary.median_terminal_error
    print(f"{'controller':<22} {'terminal y error [m]':<58} dV_tot [m/s]")
    print(f"{'this run (median)':<22} {_vec(med):<58} {summary.median_delta_v:.3f}")
    for label, (err, dv) in (("published: proposed", PUBLISHED_PROPOSED),
                             ("published: reference", PUBLISHED_REFERENCE)):
        print(f"{label:<22} {_vec(err):<58} {dv:.2f}")
    print(f"runs: {len(summary.seeds)} ok, {len(summary.failures)} failed; "
          f"median |error| {_vec(summary.median_abs_terminal_error)} m")
    if args.out:
        write_summary(Path(args.out) / "benchmark.json", {
            "seeds": summary.seeds, "delta_v_m_s": summary.delta_v,
            "terminal_errors_m": summary.terminal_errors,
            "resolve_counts": summary.resolve_counts, "failures": summary.failures,
            "median_delta_v_m_s": summary.median_delta_v,
            "median_terminal_error_m": med,
            "published_proposed": {"terminal_error_m": PUBLISHED_PROPOSED[0],
                                   "delta_v_m_s": PUBLISHED_PROPOSED[1]},
            "published_reference": {"terminal_error_m": PUBLISHED_REFERENCE[0],
                                    "delta_v_m_s": PUBLISHED_REFERENCE[1]}})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roeguide", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("guide", help="solve the open-loop guidance problem of a scenario")
    g.add_argument("--scenario", required=True, help="scenario file or bundled name")
    g.add_argument("--out", default="out", help="output directory")
    g.set_defaults(func=cmd_guide)

    s = sub.add_parser("simulate", help="run the closed loop on a scenario")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out", default="out")
    s.add_argument("--seed", type=int, default=None, help="first noise seed")
    s.add_argument("--seeds", type=int, default=None, help="number of consecutive seeds")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="run the Tf-Tn sensitivity sweep")
    w.add_argument("--scenario", default=None, help="sweep file (default: bundled)")
    w.add_argument("--out", default="out")
    w.add_argument("--fast", action="store_true", help="use the reduced samples per cell")
    w.add_argument("--seed", type=int, default=None)
    w.add_argument("--verbose", action="store_true")
    w.set_defaults(func=cmd_sweep)

    b = sub.add_parser("benchmark", help="closed-loop benchmark against the published rows")
    b.add_argument("--scenario", default=None)
    b.add_argument("--out", default=None)
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--seeds", type=int, default=None)
    b.set_defaults(func=cmd_benchmark)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "seeds", None) is not None and args.seeds < 1:
        print("error: --seeds must be at least 1", file=sys.stderr)
        return EXIT_PARSE
    try:
        return args.func(args)
    except (ScenarioError, GridError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (Infeasible, InfeasibleAtStart) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except GuidanceError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (PropagationError, ElementError) as exc:
        print(f"propagation failure: {exc}", file=sys.stderr)
        return EXIT_PROPAGATION


if __name__ == "__main__":
    sys.exit(main())

"""Command-line driver: solve, convergence, adapt, mesh-info.

Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import output, plotting
from .adaptivity import AdaptConfig, GoalFunctional, adapt_run, goal_error
from .config import ConfigError, RunConfig, load
from .errors import ErrorReport, reference_compare, space_time_error
from .linalg import SolverError
from .mesh import MeshError, MeshResourceError
from .mms import AuditError, residual_audit
from .solver import Discretization, FixedPointError, ModelViolation, TimeGrid, run

log = logging.getLogger("jouleheat")

EXIT_CONFIG = 2
EXIT_SOLVER = 3
SOLVER_FAILURES = (FixedPointError, SolverError, ModelViolation, MeshError, MeshResourceError,
                   RuntimeError, FloatingPointError)


def _config(args) -> RunConfig:
    cfg = load(args.config) if args.config else RunConfig()
    if args.preset:
        cfg.problem.preset = args.preset
    if args.k is not None:
        cfg.problem.k = args.k
    if args.l is not None:
        cfg.problem.l = args.l
    if args.out:
        cfg.output.dir = args.out
    if args.seed is not None:
        cfg.output.seed = args.seed
    return cfg.validate()


def _outdir(cfg) -> Path:
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_series(out: Path, sol, prefix="solution"):
    for n, (u, phi) in enumerate(zip(sol.u, sol.phi)):
        output.write_vtk(out / f"{prefix}_{n:04d}.vtk", sol.meshes[n],
                         point_data={"temperature": u, "potential": phi},
                         title=f"t={sol.times[n]:.12e}")


def cmd_solve(cfg: RunConfig) -> int:
    preset = cfg.build_preset()
    mesh = preset.mesh(cfg.problem.k)
    grid = preset.grid(cfg.problem.l)
    out = _outdir(cfg)
    t0 = time.perf_counter()
    sol = run(preset.data, mesh, grid, cfg.fixed_point())
    elapsed = time.perf_counter() - t0
    output.write_diagnostics(out / "diagnostics.csv", sol.diagnostics)
    if cfg.output.vtk:
        _write_series(out, sol)
    if cfg.output.plots and sol.diagnostics:
        plotting.plot_diagnostics(sol.diagnostics, out / "diagnostics.png")
    d = sol.diagnostics
    summary = {"command": "solve", "preset": preset.name, "k": cfg.problem.k, "l": cfg.problem.l,
               "T": grid.T, "tau": grid.tau, "vertices": mesh.num_vertices, "cells": mesh.num_cells,
               "steps": grid.num_steps, "clamp_a": sol.clamp.a, "clamp_b": sol.clamp.b,
               "max_fp_iters": max((x.fp_iters for x in d), default=0),
               "max_energy_residual": max((x.energy_residual for x in d), default=0.0),
               "status": "ok", "elapsed_s": round(elapsed, 3)}
    output.write_summary(out / "summary.txt", summary)
    log.info("solve finished: %d steps on %d vertices", grid.num_steps, mesh.num_vertices)
    return 0


def cmd_convergence(cfg: RunConfig) -> int:
    preset = cfg.build_preset()
    c = cfg.convergence
    out = _outdir(cfg)
    if preset.exact is None and not c.reference_k:
        raise ConfigError("[convergence] reference_k: required when no exact solution is known")
    if preset.exact is not None:
        residual_audit(preset.exact, seed=cfg.output.seed)

    def level(k):
        return k if c.l_rule == "l=k" else cfg.problem.l

    ref = None
    if c.reference_k:
        ref = run(preset.data, preset.mesh(c.reference_k), preset.grid(level(c.reference_k)),
                  cfg.fixed_point())
    report = ErrorReport()
    for k in range(c.k_min, c.k_max + 1):
        mesh = preset.mesh(k)
        grid = preset.grid(level(k))
        sol = run(preset.data, mesh, grid, cfg.fixed_point())
        if ref is not None:
            eu = reference_compare(sol, ref, "u")
            ep = reference_compare(sol, ref, "phi")
        else:
            ex = preset.exact
            eu = space_time_error(sol, ex.u, ex.grad_u, "u")
            ep = space_time_error(sol, lambda x, t: ex.phi(x), lambda x, t: ex.grad_phi(x), "phi")
        report.add(k, mesh.h_max(), grid.tau, mesh.num_vertices, eu, ep)
        log.info("level %d: err_u=%.4e err_phi=%.4e", k, eu, ep)
    report.write_csv(out / "convergence.csv")
    report.write_plot_data(out / "convergence.dat")
    if cfg.output.plots:
        plotting.plot_convergence(report, out / "convergence.png", title=preset.name)
    summary = {"command": "convergence", "preset": preset.name, "levels": len(report.k),
               "reference_k": c.reference_k, "status": "ok"}
    if len(report.k) >= 2:
        summary["finest_order_u"] = report.orders("u")[-1]
        summary["finest_order_phi"] = report.orders("phi")[-1]
    output.write_summary(out / "summary.txt", summary)
    return 0


def cmd_adapt(cfg: RunConfig) -> int:
    preset = cfg.build_preset()
    a = cfg.adapt
    out = _outdir(cfg)
    grid = preset.grid(cfg.problem.l)
    goal = GoalFunctional()
    acfg = AdaptConfig(theta=a.theta, max_vertices=a.max_vertices, tol=a.tol,
                       max_refinements_per_step=a.max_refinements_per_step, dual_weight=a.dual_weight)
    res = adapt_run(preset.data, preset.mesh(cfg.problem.k), grid, goal, acfg, cfg.fixed_point())
    rows = [{"n": r.n, "vertices": r.vertices, "estimate": r.estimate, "goal": r.goal,
             "refinements": r.refinements} for r in res.records]
    output.write_table(out / "adapt_steps.csv", rows, ["n", "vertices", "estimate", "goal", "refinements"])
    if cfg.output.vtk:
        _write_series(out, res.solution)
        for r, eta in zip(res.records, res.indicators):
            if eta is not None:
                output.write_vtk(out / f"indicators_{r.n:04d}.vtk", res.meshes[r.n], cell_data={"eta": eta})

    traces = {"adaptive": res.goal_trace}
    uniform = {}
    for k in sorted({a.baseline_k, a.reference_k} - {0}):
        mesh = preset.mesh(k)
        sol = run(preset.data, mesh, grid, cfg.fixed_point())
        disc = Discretization(mesh, preset.data)
        uniform[k] = (mesh.num_vertices, [goal(disc, u) for u in sol.u])
        traces[f"uniform k={k}"] = uniform[k][1]
    adaptive_vertices = max(m.num_vertices for m in res.meshes)
    summary = {"command": "adapt", "preset": preset.name, "max_vertices_used": adaptive_vertices,
               "cap_reached": res.cap_reached, "final_goal": res.goal_trace[-1], "status": "ok"}
    if a.reference_k:
        ref = uniform[a.reference_k][1]
        eff = [{"kind": "adaptive", "k": cfg.problem.k, "vertices": adaptive_vertices,
                "goal_error": goal_error(res.goal_trace, ref)}]
        if a.baseline_k:
            eff.append({"kind": "uniform", "k": a.baseline_k, "vertices": uniform[a.baseline_k][0],
                        "goal_error": goal_error(uniform[a.baseline_k][1], ref)})
        output.write_table(out / "efficiency.csv", eff, ["kind", "k", "vertices", "goal_error"])
        summary["adaptive_goal_error"] = eff[0]["goal_error"]
        if a.baseline_k:
            summary["baseline_goal_error"] = eff[1]["goal_error"]
            summary["baseline_vertices"] = eff[1]["vertices"]
        if cfg.output.plots:
            plotting.plot_efficiency(eff, out / "efficiency.png", title=preset.name)
    if cfg.output.plots:
        plotting.plot_goal_trace(res.solution.times, traces, out / "goal_trace.png")
    output.write_summary(out / "summary.txt", summary)
    return 0


def cmd_mesh_info(cfg: RunConfig) -> int:
    preset = cfg.build_preset()
    mesh = preset.mesh(cfg.problem.k)
    info = mesh.summary()
    for key, value in info.items():
        print(f"{key}={value}")
    if cfg.output.dir:
        out = _outdir(cfg)
        output.write_table(out / "mesh_info.csv", [info], list(info))
        if cfg.output.vtk:
            output.write_vtk(out / "mesh.vtk", mesh, cell_data={"volume": mesh.volumes()})
    return 0


COMMANDS = {"solve": cmd_solve, "convergence": cmd_convergence, "adapt": cmd_adapt,
            "mesh-info": cmd_mesh_info}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jouleheat", description="P1 finite elements for Joule heating")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML run configuration")
        p.add_argument("--out", help="output directory")
        p.add_argument("--preset", help="problem preset")
        p.add_argument("--k", type=int, help="mesh level")
        p.add_argument("--l", type=int, help="time level")
        p.add_argument("--seed", type=int, help="seed for randomized audits")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, KeyError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except AuditError as e:
        print(f"audit failure: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except SOLVER_FAILURES as e:
        print(f"solver failure ({type(e).__name__}): {e}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

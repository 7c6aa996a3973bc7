"""Command line entry point.

Exit status: 0 on success, 2 when a configuration is refused (CFL gate or an
invalid configuration), 1 when a solver fails or a check does not pass.
"""

from __future__ import annotations

import argparse
import copy
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from .. import control as control_mod
from ..coupler import flat_distance, one_pass, solve
from ..errors import CFLViolation, LevyMfgError
from ..mc_validate import SimConfig, jump_sampler_check, simulate
from .config import build_problem, dump_config, load_config, preset, with_resolution
from .invariants import run_suite
from .io import RunDirectory
from .study import ConvergenceStudy, convergence_study

logger = logging.getLogger("levy_mfg")

EXIT_OK, EXIT_FAILED, EXIT_REFUSED = 0, 1, 2
COMMANDS = ("solve-hjb", "solve-fpk", "solve-mfg", "mc-validate", "convergence-study",
            "check-invariants", "export-weights")


class Refused(Exception):
    """Configuration rejected before any solving."""


def _config(args) -> dict:
    if bool(args.preset) == bool(args.config):
        raise Refused("give exactly one of --preset and --config")
    try:
        cfg = preset(args.preset) if args.preset else load_config(args.config)
    except (KeyError, OSError, ValueError) as exc:
        raise Refused(str(exc)) from exc
    for key in ("domain", "horizon", "measure", "costs", "m0", "params"):
        if key not in cfg:
            raise Refused(f"configuration lacks {key!r}")
    if args.quick:
        cfg = quick(cfg)
    return cfg


def quick(cfg: dict, factor: float = 4.0) -> dict:
    """Same problem with ``h`` and ``rho`` coarsened by ``factor``."""
    p = cfg["params"]
    out = with_resolution(cfg, float(p["h"]) * factor, float(p.get("rho", p["h"])) * factor)
    out["name"] = f"{cfg.get('name', 'custom')}-quick"
    out.pop("stated", None)
    return out


def _problem(cfg, args):
    try:
        return build_problem(cfg, force=True if args.force else None)
    except CFLViolation:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise Refused(f"invalid configuration: {exc}") from exc


def _out(args, cfg, command) -> RunDirectory:
    root = Path(args.out) if args.out else Path("runs") / f"{cfg.get('name', 'custom')}-{command}"
    run = RunDirectory(root, cfg, command)
    run.save("config.yaml", lambda p: dump_config(cfg, p))
    return run


def _solver_opts(cfg, args) -> dict:
    s = cfg.get("solver", {})
    return {
        "tol": args.tol if args.tol is not None else float(s.get("tol", 1e-12)),
        "max_iter": args.max_iter if args.max_iter is not None else int(s.get("max_iter", 300)),
    }


def cmd_solve_hjb(args) -> int:
    cfg = _config(args)
    problem = _problem(cfg, args)
    run = _out(args, cfg, "solve-hjb")
    from ..hjb import solve_backward

    t0 = time.perf_counter()
    u = solve_backward(problem.frozen_flow(), problem)
    run.save("u.csv", u.to_csv)
    run.manifest(problem, timings={"hjb_seconds": time.perf_counter() - t0}, box_hits=u.box_hits,
                 note="value function against the frozen flow m(t) = m0")
    print(f"wrote {run.root}")
    return EXIT_OK


def cmd_solve_fpk(args) -> int:
    cfg = _config(args)
    problem = _problem(cfg, args)
    run = _out(args, cfg, "solve-fpk")
    t0 = time.perf_counter()
    u, m = one_pass(problem, problem.frozen_flow())
    fc = control_mod.build(u, problem.eps, problem.ham, problem.control_exterior)
    run.save("control.csv", fc.to_csv)
    run.save("m.csv", m.to_csv)
    run.manifest(problem, timings={"seconds": time.perf_counter() - t0},
                 final_mass=float(m.mass()[-1]), sink_mass=float(m.leak.sum()),
                 note="density under the feedback optimal against the frozen flow m(t) = m0")
    print(f"wrote {run.root}")
    return EXIT_OK


def _solve_mfg(cfg, args):
    problem = _problem(cfg, args)
    t0 = time.perf_counter()
    sol = solve(problem, **_solver_opts(cfg, args))
    return problem, sol, time.perf_counter() - t0


def _write_solution(run, problem, sol):
    fc = control_mod.build(sol.u, problem.eps, problem.ham, problem.control_exterior)
    run.save("u.csv", sol.u.to_csv)
    run.save("m.csv", sol.m.to_csv)
    run.save("control.csv", fc.to_csv)
    run.rows("trace.csv", sol.trace.rows(),
             ["iteration", "l1_change", "flat_change", "hjb_seconds", "fpk_seconds"])
    return fc


def cmd_solve_mfg(args) -> int:
    cfg = _config(args)
    problem, sol, secs = _solve_mfg(cfg, args)
    run = _out(args, cfg, "solve-mfg")
    _write_solution(run, problem, sol)
    run.manifest(problem, timings={"seconds": secs}, iterations=sol.trace.iterations,
                 converged=sol.trace.converged, final_change=sol.trace.l1_change[-1],
                 final_mass=float(sol.m.mass()[-1]), sink_mass=float(sol.m.leak.sum()))
    print(f"converged in {sol.trace.iterations} iterations; wrote {run.root}")
    return EXIT_OK


def cmd_mc_validate(args) -> int:
    cfg = _config(args)
    problem, sol, secs = _solve_mfg(cfg, args)
    run = _out(args, cfg, "mc-validate")
    fc = _write_solution(run, problem, sol)
    t0 = time.perf_counter()
    emp = simulate(SimConfig(args.paths, args.seed, fc, problem.disc), problem.m0)
    mc_secs = time.perf_counter() - t0
    run.save("mc.csv", emp.to_csv)
    dist = flat_distance(emp.m[-1], sol.m.m[-1], problem.grid.rho, mass_tol=args.threshold)
    sampler = jump_sampler_check(problem.disc, args.draws, args.seed) if problem.disc.lambda_r > 0 else 0.0
    ok = dist <= args.threshold and sampler <= args.sampler_threshold
    run.manifest(problem, timings={"solve_seconds": secs, "mc_seconds": mc_secs},
                 mc={"paths": args.paths, "seed": args.seed, "flat_distance": dist, "threshold": args.threshold,
                     "escaped_fraction": float(emp.escaped[-1]), "fpk_sink": float(sol.m.leak.sum()),
                     "sampler_defect": sampler, "sampler_draws": args.draws,
                     "sampler_threshold": args.sampler_threshold, "ok": ok})
    print(f"{'PASS' if dist <= args.threshold else 'FAIL'} flat distance {dist:.4g} (threshold {args.threshold})")
    print(f"{'PASS' if sampler <= args.sampler_threshold else 'FAIL'} jump sampler CDF defect {sampler:.4g} "
          f"(threshold {args.sampler_threshold})")
    return EXIT_OK if ok else EXIT_FAILED


def cmd_convergence_study(args) -> int:
    cfg = _config(args) if not args.quick else _config_no_quick(args)
    study = cfg.get("study", {})
    levels = args.levels or study.get("levels", [2, 3, 4, 5, 6])
    reference = args.reference or study.get("reference", 8)
    if args.quick:
        levels, reference = [lv for lv in levels if lv <= 4] or levels[:2], min(reference, 6)
    region = tuple(cfg.get("region", (cfg["domain"][0], cfg["domain"][1])))
    opts = _solver_opts(cfg, args)
    try:
        spec = ConvergenceStudy(cfg, list(levels), int(reference), region, opts["tol"], opts["max_iter"])
    except ValueError as exc:
        raise Refused(str(exc)) from exc
    run = _out(args, cfg, "convergence-study")
    res = convergence_study(spec)
    run.rows("study.csv", res.rows(), ["h", "err_u", "err_m"])
    band = {"order": [0.8, 1.3], "ratio": [1.4, 3.0]}
    in_band = (not res.degenerate and _within(res.order_u, band["order"]) and _within(res.order_m, band["order"])
               and all(_within(r, band["ratio"]) for r in res.ratios_u + res.ratios_m))
    run.manifest(None, timings=res.timings, levels=list(levels), reference=reference, region=list(region),
                 order_u=res.order_u, order_m=res.order_m, ratios_u=res.ratios_u, ratios_m=res.ratios_m,
                 degenerate=res.degenerate, band=band, in_band=in_band)
    print(f"{'h':>10} {'ERR_u':>10} {'ERR_m':>10}")
    for row in res.rows():
        print(f"{row['h']:>10.5g} {row['err_u']:>10.4g} {row['err_m']:>10.4g}")
    print(f"order: u {res.order_u:.3f}, m {res.order_m:.3f}; "
          f"ratios u {np.round(res.ratios_u, 2).tolist()}, m {np.round(res.ratios_m, 2).tolist()}")
    print(f"{'PASS' if in_band else 'FAIL'} orders in {band['order']} and ratios in {band['ratio']}")
    return EXIT_OK if in_band else EXIT_FAILED


def _config_no_quick(args) -> dict:
    a = copy.copy(args)
    a.quick = False
    return _config(a)


def _within(v, band) -> bool:
    return not math.isnan(v) and band[0] <= v <= band[1]


def cmd_check_invariants(args) -> int:
    cfg = _config(args)
    problem, sol, secs = _solve_mfg(cfg, args)
    run = _out(args, cfg, "check-invariants")
    checks = run_suite(problem, sol, n_fields=20 if args.quick else 100)
    for c in checks:
        print(c.line())
    run.rows("checks.csv", (c.as_dict() for c in checks), ["name", "value", "bound", "ok"])
    failed = [c.name for c in checks if not c.ok]
    run.manifest(problem, timings={"solve_seconds": secs}, failed=failed)
    return EXIT_OK if not failed else EXIT_FAILED


def cmd_export_weights(args) -> int:
    cfg = _config(args)
    problem = _problem(cfg, args)
    run = _out(args, cfg, "export-weights")
    run.save("weights.csv", problem.disc.to_csv)
    run.manifest(problem)
    print(f"{len(problem.disc.weights)} weights, lambda_r = {problem.disc.lambda_r:.6g}; wrote {run.root}")
    return EXIT_OK


HANDLERS = {
    "solve-hjb": cmd_solve_hjb,
    "solve-fpk": cmd_solve_fpk,
    "solve-mfg": cmd_solve_mfg,
    "mc-validate": cmd_mc_validate,
    "convergence-study": cmd_convergence_study,
    "check-invariants": cmd_check_invariants,
    "export-weights": cmd_export_weights,
}


def parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="levy-mfg", description="Semi-Lagrangian MFG solver with Levy jumps")
    top.add_argument("-v", "--verbose", action="count", default=0)
    sub = top.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--preset")
        p.add_argument("--config")
        p.add_argument("--out")
        p.add_argument("--force", action="store_true", help="run even if the CFL gate refuses")
        p.add_argument("--quick", action="store_true", help="coarser resolution / shorter ladder")
        p.add_argument("--tol", type=float)
        p.add_argument("--max-iter", type=int)
        if name == "mc-validate":
            p.add_argument("--paths", type=int, default=10**5)
            p.add_argument("--seed", type=int, default=20240601)
            p.add_argument("--threshold", type=float, default=0.05)
            p.add_argument("--draws", type=int, default=10**6)
            p.add_argument("--sampler-threshold", type=float, default=0.005)
        if name == "convergence-study":
            p.add_argument("--levels", type=int, nargs="+")
            p.add_argument("--reference", type=int)
    return top


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return HANDLERS[args.command](args)
    except CFLViolation as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except Refused as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except LevyMfgError as exc:
        print(f"solver error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())

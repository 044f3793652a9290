"""Batch front end: ``discount-mfg {solve,sweep,select,verify,bench,oracle}``.

Exit codes: 0 success, 1 convergence failure, 2 usage or config error,
3 verification failure.  Outputs go to ``--out`` or, by default, to
``$DMFG_OUTPUT_ROOT/<output.directory>/<subcommand>`` (root defaults to
the working directory).
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path


from . import acceptance
from .config import RunConfig, load_config
from .dual import solve_dual
from .ergodic import selection_functional, vanishing_discount_sweep
from .errors import ConvergenceError, MFGError, NumericError, SweepError, UsageError
from .example import (
    SELECTED_THETA,
    example_density,
    example_fields,
    example_potential,
    example_selection_value,
    example_u_theta,
    selection_study,
    theta_grid,
)
from .functionals import evaluate_A, evaluate_B
from .grid import Field
from .io import (
    read_solution,
    write_fields,
    write_json,
    write_manifest,
    write_mask,
    write_sweep_table,
    write_table,
)
from .primal import solve_primal
from .verification import uniqueness_set, weak_solution_residuals

OUTPUT_ENV = "DMFG_OUTPUT_ROOT"
EXIT_OK, EXIT_CONVERGENCE, EXIT_USAGE, EXIT_VERIFY = 0, 1, 2, 3

log = logging.getLogger("discount_mfg")


class VerificationFailed(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, solver=replace(cfg.solver, seed=args.seed))
    return cfg


def _out_dir(args, cfg, name) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        out = Path(os.environ.get(OUTPUT_ENV, ".")) / cfg.output.directory / name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _params(args, cfg):
    scale = getattr(args, "tol_scale", None)
    return cfg.solver if scale is None else cfg.solver.scaled(scale)


def _formats(cfg):
    return cfg.output.formats


def _finish(args, cfg, out, name, t0, files, extra=None):
    write_manifest(out, cfg, {"subcommand": name, "argv": sys.argv[1:]}, time.perf_counter() - t0,
                   files=files, extra=extra)
    print(f"{name}: wrote {len(files)} files to {out}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(args) -> int:
    cfg = _config(args)
    t0 = time.perf_counter()
    spec, grid, params = cfg.problem, cfg.grid, _params(args, cfg)
    eps = float(args.epsilon) if args.epsilon is not None else cfg.sweep.schedule[0]
    out = _out_dir(args, cfg, "solve")
    status = EXIT_OK
    try:
        dual = solve_dual(spec, grid, eps, params)
    except ConvergenceError as exc:
        if exc.result is None:
            raise
        log.error("%s", exc)
        dual, status = exc.result, EXIT_CONVERGENCE
    try:
        primal = solve_primal(spec, grid, eps, params, initial=dual.u)
    except ConvergenceError as exc:
        log.error("%s", exc)
        primal, status = exc.result, EXIT_CONVERGENCE
    A = evaluate_A(spec, grid, primal.phi, eps)
    B = evaluate_B(spec, grid, dual.m, dual.w)
    report = weak_solution_residuals(spec, grid, dual.u, dual.m, dual.w, epsilon=eps)
    files = write_fields(out, {"u": dual.u, "m": dual.m, "w": dual.w}, _formats(cfg))
    summary = {
        "epsilon": eps,
        "objective_A_primal": A,
        "objective_B": B,
        "gap": abs(A + B),
        "relative_gap": abs(A + B) / (1.0 + abs(B)),
        "converged": status == EXIT_OK,
        "iterations": dual.diagnostics.iterations,
        "dual": dual.summary(),
        "primal": primal.summary(),
        "residuals": report.to_dict(),
    }
    files.append(write_json(out / "summary.json", summary))
    _finish(args, cfg, out, "solve", t0, files)
    print(f"eps={eps:g} relative gap={summary['relative_gap']:.3e} iterations={summary['iterations']}")
    return status


def cmd_sweep(args) -> int:
    cfg = _config(args)
    t0 = time.perf_counter()
    out = _out_dir(args, cfg, "sweep")
    status = EXIT_OK
    try:
        erg = vanishing_discount_sweep(cfg.problem, cfg.grid, cfg.sweep.schedule, _params(args, cfg),
                                       warm_start=cfg.sweep.warm_start, keep_solutions=True,
                                       workers=cfg.sweep.workers)
    except SweepError as exc:
        log.error("%s", exc)
        if exc.partial is None:
            return EXIT_CONVERGENCE
        erg, status = exc.partial, EXIT_CONVERGENCE
    files = [write_sweep_table(out / "sweep.csv", erg)]
    for k, sol in enumerate(erg.solutions):
        files += write_fields(out / f"eps_{k:02d}", {"u": sol.u, "m": sol.m, "w": sol.w}, _formats(cfg))
    # top level: mean-zero limit potential, last density and the last discount's flux
    files += write_fields(out, {"u": erg.u, "m": erg.m, "w": erg.final.w}, _formats(cfg))
    files.append(write_json(out / "summary.json", {**erg.summary(), "converged": status == EXIT_OK}))
    _finish(args, cfg, out, "sweep", t0, files)
    print(f"lambda estimate {erg.lam:.6e} after {len(erg.sweep)} discounts")
    return status


def cmd_select(args) -> int:
    cfg = _config(args)
    t0 = time.perf_counter()
    out = _out_dir(args, cfg, "select")
    study = selection_study(args.theta_grid)
    files = [write_table(out / "selection.csv", ["theta", "value", "derivative_half"],
                         zip(study["theta"], study["value"], study["derivative_half"]))]
    oracle_min = example_selection_value(SELECTED_THETA)
    if args.solution:
        u, m, _, _ = read_solution(args.solution, cfg.problem.dimension)
    else:
        erg = vanishing_discount_sweep(cfg.problem, cfg.grid, cfg.sweep.schedule, _params(args, cfg),
                                       warm_start=cfg.sweep.warm_start, workers=cfg.sweep.workers)
        u, m = erg.u, erg.m
    value = selection_functional(u, m)
    summary = {
        "argmin_theta": study["argmin"],
        "theta_step": study["step"],
        "oracle_min_value": oracle_min,
        "solver_value": value,
        "difference": abs(value - oracle_min),
        "theta_grid": int(args.theta_grid),
    }
    files.append(write_json(out / "selection_summary.json", summary))
    _finish(args, cfg, out, "select", t0, files)
    print(f"argmin theta={study['argmin']:.6g} (step {study['step']:.3g}); solver value={value:.6e}, "
          f"oracle min={oracle_min:.6e}")
    return EXIT_OK


def _verify_mode(args, directory):
    if args.epsilon is not None:
        return "discount", float(args.epsilon), None
    if args.lam is not None:
        return "ergodic", None, float(args.lam)
    summary = Path(directory) / "summary.json"
    if summary.is_file():
        import json

        data = json.loads(summary.read_text())
        if data.get("mode") == "ergodic" or "lambda" in data:
            return "ergodic", None, float(data.get("lambda", 0.0))
        if "epsilon" in data:
            return "discount", float(data["epsilon"]), None
    raise UsageError(f"give --epsilon or --lam; {summary} does not say which problem {directory} solves")


def cmd_verify(args) -> int:
    cfg = _config(args)
    t0 = time.perf_counter()
    if not args.solution:
        raise UsageError("verify needs --solution DIR")
    directory = Path(args.solution)
    if not directory.is_dir():
        raise UsageError(f"solution directory not found: {directory}")
    u, m, w, du = read_solution(directory, cfg.problem.dimension)
    mode, eps, lam = _verify_mode(args, directory)
    spec, grid = cfg.problem, u.grid
    report = weak_solution_residuals(spec, grid, u, m, w, mode=mode, epsilon=eps, lam=lam, du=du)
    s = args.tol_scale or 1.0
    passed = report.passes(5e-3 * s, 1e-6 * s, 1e-6 * s, 1e-6 * s)
    out = _out_dir(args, cfg, "verify")
    data = {**report.to_dict(), "passed": passed, "solution": str(directory)}
    files = [write_json(out / "residuals.json", data)]
    if mode == "ergodic":
        files.append(write_mask(out / "uniqueness_mask.csv", grid, uniqueness_set(spec, grid, m, lam)))
    _finish(args, cfg, out, "verify", t0, files)
    print(report.to_json())
    if not passed:
        raise VerificationFailed(f"residuals exceed thresholds (mass_error={report.mass_error:.3e})")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _config(args)
    t0 = time.perf_counter()
    if args.suite not in acceptance.SUITES:
        raise UsageError(f"unknown suite {args.suite!r}; choose from {sorted(acceptance.SUITES)}")
    results = acceptance.run_suite(args.suite, tol_scale=args.tol_scale or 1.0, params=cfg.solver,
                                   report=print)
    print(acceptance.matrix(results))
    out = _out_dir(args, cfg, "bench")
    files = [write_json(out / "bench.json", {"suite": args.suite, "tol_scale": args.tol_scale or 1.0,
                                            "results": [r.to_dict() for r in results]})]
    _finish(args, cfg, out, "bench", t0, files)
    if not all(r.passed for r in results):
        raise VerificationFailed("acceptance suite has failing criteria")
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _config(args)
    t0 = time.perf_counter()
    if cfg.grid.d != 1:
        raise UsageError("the closed-form example is one-dimensional")
    grid = cfg.grid
    out = _out_dir(args, cfg, "oracle")
    x = grid.cell_centers()[:, 0]
    thetas = theta_grid(5)
    cols = [example_u_theta(t, x) for t in thetas]
    files = [write_table(out / "profiles.csv", ["x", "W", "m"] + [f"u_theta_{t:.5f}" for t in thetas],
                         zip(x, example_potential(x), example_density(x), *cols))]
    study = selection_study(args.theta_grid)
    files.append(write_table(out / "selection.csv", ["theta", "value", "derivative_half"],
                             zip(study["theta"], study["value"], study["derivative_half"])))
    theta = SELECTED_THETA if args.theta is None else float(args.theta)
    u, m, w, du = example_fields(grid, theta, reflected=args.reflected)
    files += write_fields(out / "solution", {"u": u, "m": m, "w": w, "du": Field("face_vector", du, grid)},
                          ("csv",))
    files.append(write_json(out / "solution" / "summary.json",
                            {"mode": "ergodic", "lambda": 0.0, "theta": theta, "reflected": args.reflected}))
    _finish(args, cfg, out, "oracle", t0, files)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "select": cmd_select, "verify": cmd_verify,
            "bench": cmd_bench, "oracle": cmd_oracle}


def _positive(kind):
    def parse(text):
        val = kind(text)
        if not (val > 0 and math.isfinite(val)):
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return val

    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="discount-mfg", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML run configuration (default: worked example)")
    common.add_argument("--out", metavar="DIR", help=f"output directory (default under ${OUTPUT_ENV})")
    common.add_argument("--seed", type=int, help="random initialisation seed for the dual solver")
    common.add_argument("--tol-scale", type=_positive(float), help="multiply tolerances/thresholds")

    p = sub.add_parser("solve", parents=[common], help="one discounted solve plus primal certificate")
    p.add_argument("--epsilon", type=_positive(float), help="discount (default: first of the schedule)")
    sub.add_parser("sweep", parents=[common], help="vanishing-discount sweep along the schedule")
    p = sub.add_parser("select", parents=[common], help="selection functional: oracle family and solver")
    p.add_argument("--theta-grid", type=int, default=65, metavar="N")
    p.add_argument("--solution", metavar="DIR", help="use u/m dumps instead of running a sweep")
    p = sub.add_parser("verify", parents=[common], help="weak-solution residuals of dumped fields")
    p.add_argument("--solution", metavar="DIR", required=True)
    p.add_argument("--epsilon", type=_positive(float), help="check the discounted system at this eps")
    p.add_argument("--lam", type=float, help="check the ergodic system with this constant")
    p = sub.add_parser("bench", parents=[common], help="acceptance suite with a pass/fail matrix")
    p.add_argument("--suite", default="acceptance", help=f"one of {sorted(acceptance.SUITES)}")
    p = sub.add_parser("oracle", parents=[common], help="closed-form example tables and fields")
    p.add_argument("--theta", type=float, help="member of the family to dump (default 1/4)")
    p.add_argument("--theta-grid", type=int, default=65, metavar="N")
    p.add_argument("--reflected", action="store_true", help="dump the reflected solution instead")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except VerificationFailed as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (ConvergenceError, SweepError, NumericError) as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (UsageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MFGError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

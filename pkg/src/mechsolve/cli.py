"""Command-line front end: ``mechsolve <command> [options]``.

Exit codes: 0 success, 1 usage or domain error, 2 validation failure.
"""
from __future__ import annotations

import argparse
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .dists import parse_density
from .errors import MechanismError
from .model import InterferenceModel, ProblemInstance
from .oracle import GridSpec, check_constraints, grid_solve
from .solver import (
    DEFAULT_EPS,
    MechanismSolution,
    allocation,
    classify,
    payment,
    phi_threshold,
    psi_threshold,
    run_mechanism,
    solve_mechanism,
)

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION = 0, 1, 2
OBJECTIVE_TOLERANCE = 2e-3
CONSTRAINT_TOLERANCE = 1e-6
CHECK_GRID = GridSpec(200, 200)
INSTANCE_FLAGS = ("model", "v", "K", "f", "g")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text):
    x = float(text)
    if not x > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return x


def _u_grid(text):
    try:
        lo, hi, step = (float(t) for t in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi:step, got {text!r}") from None
    if not step > 0 or hi < lo:
        raise argparse.ArgumentTypeError(f"need step > 0 and lo <= hi, got {text!r}")
    n = int(np.floor((hi - lo) / step + 1e-9))
    return [float(f"{lo + i * step:.12g}") for i in range(n + 1)]


def _values(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    inst = common.add_argument_group("instance")
    inst.add_argument("--model", choices=[m.value for m in InterferenceModel])
    inst.add_argument("--v", type=float)
    inst.add_argument("--K", type=float)
    inst.add_argument("--f", help="prior of alpha: uniform:lo,hi | gauss:lo,hi,mu,sigma | table:path")
    inst.add_argument("--g", help="prior of u, same syntax as --f")
    inst.add_argument("--config", help="JSON instance file (exclusive with the flags above)")
    common.add_argument("--solution", help="solution JSON written by 'solve'")
    common.add_argument("--eps", type=_positive, default=DEFAULT_EPS)
    common.add_argument("--out", help="write output here instead of standard output")
    common.add_argument("--format", choices=("json", "csv"))

    parser = _Parser(prog="mechsolve", description="Optimal allocation-and-inspection mechanisms.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("solve", parents=[common], help="compute the optimal cutoffs")

    p = sub.add_parser("classify", parents=[common], help="region of one report pair, or a raster")
    p.add_argument("--alpha", type=float)
    p.add_argument("--u", type=float)
    p.add_argument("--grid", type=int, default=400, help="raster cells per axis when no pair is given")

    p = sub.add_parser("gap", parents=[common], help="welfare gap against first best")
    p.add_argument("--u-grid", type=_u_grid, required=True, dest="u_grid")

    p = sub.add_parser("sweep", parents=[common], help="solve over a list of v or K values")
    p.add_argument("--param", choices=analysis.SWEEP_PARAMS, required=True)
    p.add_argument("--values", type=_values, required=True)

    p = sub.add_parser("validate", parents=[common], help="certify a solution against the grid oracle")
    p.add_argument("--grid", type=int, default=400)

    p = sub.add_parser("simulate", parents=[common], help="run the mechanism on one report triple")
    p.add_argument("--alpha", type=float, required=True, help="reported alpha")
    p.add_argument("--u", type=float, required=True, help="reported u")
    p.add_argument("--true-alpha", type=float, dest="true_alpha", help="defaults to the report")
    return parser


def _instance(args) -> ProblemInstance | None:
    given = [name for name in INSTANCE_FLAGS if getattr(args, name) is not None]
    if args.config is not None:
        if given:
            raise UsageError(f"--config conflicts with --{', --'.join(given)}")
        return ProblemInstance.from_json(args.config)
    if not given:
        return None
    missing = [name for name in INSTANCE_FLAGS if getattr(args, name) is None]
    if missing:
        raise UsageError(f"missing instance flags: --{', --'.join(missing)}")
    return ProblemInstance(
        InterferenceModel.parse(args.model), args.v, args.K, parse_density(args.f), parse_density(args.g)
    )


def _solution(args, *, required=True) -> tuple[ProblemInstance, MechanismSolution | None]:
    inst = _instance(args)
    if args.solution is not None:
        if inst is not None:
            raise UsageError("--solution carries its own instance; drop the instance flags")
        sol = MechanismSolution.from_json(args.solution)
        return sol.instance, sol
    if inst is None:
        raise UsageError("give an instance (--model --v --K --f --g or --config) or --solution")
    return inst, solve_mechanism(inst, args.eps) if required else None


def _emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def cmd_solve(args) -> int:
    inst, sol = _solution(args)
    if args.format == "csv":
        d = sol.to_dict()
        cols = ["u_bot", "u_top", "alpha_opt", "k_low", "objective", "budget_residual", "eps"]
        row = ["" if d.get(c) is None else f"{d[c]:.12g}" for c in cols]
        _emit(args, ",".join(cols) + "\n" + ",".join(row) + "\n")
    else:
        _emit(args, _json(sol.to_dict()))
    return EXIT_OK


def _pair_record(sol, alpha, u):
    a, c = allocation(sol, alpha, u)
    return {
        "alpha": alpha,
        "u": u,
        "region": classify(sol, alpha, u).value,
        "a": a,
        "c": c,
        "phi": float(f"{phi_threshold(sol, alpha, u):.12g}"),
        "psi": float(f"{psi_threshold(sol, alpha, u):.12g}"),
        "payment": float(f"{payment(sol, alpha, u):.12g}"),
    }


def cmd_classify(args) -> int:
    inst, sol = _solution(args)
    if (args.alpha is None) != (args.u is None):
        raise UsageError("--alpha and --u go together")
    if args.alpha is not None:
        for name, x, dist in (("alpha", args.alpha, inst.f), ("u", args.u, inst.g)):
            if not dist.contains(x):
                raise UsageError(f"--{name} {x} lies outside [{dist.support_lo}, {dist.support_hi}]")
        _emit(args, _json(_pair_record(sol, args.alpha, args.u)))
        return EXIT_OK
    if args.grid < 1:
        raise UsageError("--grid must be positive")
    raster = analysis.region_raster(inst, sol, args.grid, args.grid)
    buf = io.StringIO()
    analysis.write_raster_csv(raster, buf)
    _emit(args, buf.getvalue())
    return EXIT_OK


def cmd_gap(args) -> int:
    inst, sol = _solution(args)
    points = analysis.gap_curve(inst, sol, args.u_grid)
    if args.format == "json":
        _emit(args, _json([p.__dict__ for p in points]))
        return EXIT_OK
    buf = io.StringIO()
    analysis.write_gap_csv(points, buf)
    _emit(args, buf.getvalue())
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.solution is not None:
        raise UsageError("sweep needs an instance template, not a solution")
    inst = _instance(args)
    if inst is None:
        raise UsageError("give an instance (--model --v --K --f --g or --config)")
    rows = analysis.sweep(inst, args.param, args.values, args.eps)
    for r in rows:
        if r.error:
            print(f"{r.param_name}={r.param_value:.12g}: {r.error}", file=sys.stderr)
    if args.format == "json":
        _emit(args, _json([r.__dict__ for r in rows]))
    else:
        buf = io.StringIO()
        analysis.write_sweep_csv(rows, buf)
        _emit(args, buf.getvalue())
    return EXIT_OK


def validation_report(sol: MechanismSolution, grid: GridSpec) -> tuple[bool, dict]:
    """Oracle agreement plus constraint audit; returns ``(passed, report)``."""
    inst = sol.instance
    broken = sol.invariant_violations()
    report = {"solution": sol.to_dict(), "invariant_violations": broken}
    if broken:
        report["passed"] = False
        return False, report
    oracle = grid_solve(inst, grid)
    gap = abs(oracle.best_objective - sol.objective)
    constraints = check_constraints(inst, sol, CHECK_GRID)
    passed = gap <= OBJECTIVE_TOLERANCE and constraints.ok(CONSTRAINT_TOLERANCE)
    report.update(
        oracle={
            "u_bot": oracle.best_u_bot,
            "u_top": oracle.best_u_top,
            "alpha_opt": oracle.best_alpha_opt,
            "objective": oracle.best_objective,
            "feasible_pairs": oracle.feasible_count,
            "grid": {"n_alpha": grid.n_alpha, "n_u": grid.n_u},
            "objective_gap": gap,
            "objective_tolerance": OBJECTIVE_TOLERANCE,
        },
        constraints=constraints.to_dict(),
        passed=passed,
    )
    return passed, report


def cmd_validate(args) -> int:
    _, sol = _solution(args)
    passed, report = validation_report(sol, GridSpec(args.grid, args.grid))
    _emit(args, _json(report))
    if not passed:
        for line in report["invariant_violations"]:
            print(f"validation failed: {line}", file=sys.stderr)
        if not report["invariant_violations"]:
            print("validation failed: see report", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_simulate(args) -> int:
    inst, sol = _solution(args)
    true_alpha = args.alpha if args.true_alpha is None else args.true_alpha
    out = run_mechanism(sol, args.alpha, args.u, true_alpha)
    _emit(
        args,
        _json(
            {
                "reported_alpha": args.alpha,
                "reported_u": args.u,
                "true_alpha": true_alpha,
                "region": classify(sol, args.alpha, args.u).value,
                "inspected": out.inspected,
                "allocation": out.allocation,
                "payment": float(f"{out.payment:.12g}"),
            }
        ),
    )
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "classify": cmd_classify,
    "gap": cmd_gap,
    "sweep": cmd_sweep,
    "validate": cmd_validate,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mechsolve: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MechanismError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"mechsolve: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

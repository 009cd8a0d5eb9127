"""The ``fman`` command line.

Exit codes: 0 when every check passes, 1 when a check fails, 2 for usage,
manifest and engine errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .builtins import builtin, builtin_data, builtin_names
from .expr import ExprError
from .hydro import CFLViolation, SimulationBlowup
from .manifest import ManifestError, load_manifest
from .suites import SUITES, MissingObject, RunOptions, run_suite, simulate_manifest

EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


class UsageError(Exception):
    pass


def resolve_manifest(target: str):
    path = Path(target)
    if path.is_file():
        return load_manifest(path)
    if target in builtin_names():
        return builtin(target)
    raise UsageError(f"{target!r} is neither a manifest file nor a builtin "
                     f"(builtins: {', '.join(builtin_names())})")


def _positive_int(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fman", description="Numerical identity checks on F-manifold patches.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="run a verification suite")
    c.add_argument("target", help="manifest path or builtin name")
    c.add_argument("--suite", required=True, choices=[*SUITES, "all"])
    c.add_argument("--field")
    c.add_argument("--metric")
    c.add_argument("--eventual")
    c.add_argument("--hermitian")
    c.add_argument("--real-structure", dest="real_structure")
    c.add_argument("--points", type=_positive_int)
    c.add_argument("--seed", type=int)
    c.add_argument("--tol", type=_positive_float)
    c.add_argument("--json", dest="json_out", help="write the report as JSON")

    s = sub.add_parser("simulate", help="simulate one flow or the commutation of two flows")
    s.add_argument("target", help="manifest path or builtin name")
    s.add_argument("--flow", action="append", required=True)
    s.add_argument("--grid", action="append", type=_positive_int, required=True,
                   help="cells; repeat for a refinement study")
    s.add_argument("--dt", type=_positive_float, required=True)
    s.add_argument("--t-end", dest="t_end", type=_positive_float, required=True)
    s.add_argument("--tol", type=_positive_float)
    s.add_argument("--dump", help="write the finest-grid trajectory as CSV")
    s.add_argument("--json", dest="json_out")

    lb = sub.add_parser("list-builtins", help="list the built-in manifests")
    lb.add_argument("--json", action="store_true", help="print the manifests themselves")
    return p


def _emit(report, json_out) -> int:
    print(report.table())
    if json_out:
        Path(json_out).write_text(report.to_json() + "\n")
    return report.exit_code


def _cmd_check(args) -> int:
    m = resolve_manifest(args.target)
    opts = RunOptions(field=args.field, metric=args.metric, eventual=args.eventual, hermitian=args.hermitian,
                      real_structure=args.real_structure, points=args.points, seed=args.seed, tol=args.tol)
    return _emit(run_suite(m, args.suite, opts), args.json_out)


def _cmd_simulate(args) -> int:
    m = resolve_manifest(args.target)
    if len(args.flow) > 2:
        raise UsageError("at most two --flow arguments")
    for g in args.grid:
        if g < 8:
            raise UsageError("--grid needs at least 8 cells")
    report = simulate_manifest(m, args.flow, args.grid, args.dt, args.t_end, args.tol, args.dump)
    return _emit(report, args.json_out)


def _cmd_list(args) -> int:
    import json

    for name in builtin_names():
        data = builtin_data(name)
        if args.json:
            print(json.dumps(data, sort_keys=True))
        else:
            suites = ", ".join(data.get("suites", [])) or "-"
            print(f"{name:<16} n={data['dimension']} {data.get('flavor', 'real'):<7} suites: {suites}")
    return EXIT_PASS


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PASS if exc.code == 0 else EXIT_ERROR
    handlers = {"check": _cmd_check, "simulate": _cmd_simulate, "list-builtins": _cmd_list}
    try:
        return handlers[args.command](args)
    except (UsageError, MissingObject, KeyError, ValueError) as exc:
        if isinstance(exc, (ManifestError, ExprError)):
            print(f"fman: manifest error: {exc}", file=sys.stderr)
        else:
            print(f"fman: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (CFLViolation, SimulationBlowup) as exc:
        print(f"fman: simulation aborted: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"fman: I/O error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

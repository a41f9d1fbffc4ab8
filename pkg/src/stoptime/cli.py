"""Command line entry point: ``stoptime validate|run|explain``.

Exit status: 0 when everything passes, 1 when a check fails, 2 when the
fixture cannot be parsed or fails validation.
"""
from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

from .errors import ParseError, ValidationError
from .fixtures import build_fixture
from .harness import CHECKS, explain, run_suite

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 1, 2


def _load(args):
    path = Path(args.fixture)
    try:
        config = json.loads(path.read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if args.tol is not None:
        config = copy.deepcopy(config)
        config.setdefault("tolerance", {})["eq_tol"] = args.tol
    return build_fixture(config, seed=args.seed)


def _horizon(value):
    return None if value is None else float(value)


def cmd_validate(args) -> int:
    fx = _load(args)
    F, tau = fx.filtration, fx.tau
    print(f"fixture {fx.name} [{fx.fingerprint}]: valid")
    print(f"  ambient dimension {F.gns.algebra.ambient_dim}, GNS dimension {F.gns.dim}")
    for t, alg, q in zip(F.grid.points, F.algebras, tau.q):
        rank = int(round(q.trace().real))
        print(f"  t={t:g}: dim A_t = {alg.dim}, rank q_t = {rank}")
    return EXIT_OK


def cmd_run(args) -> int:
    fx = _load(args)
    checks = args.checks.split(",") if args.checks else None
    if checks:
        unknown = [c for c in checks if c not in CHECKS]
        if unknown:
            print(f"error: unknown checks: {', '.join(unknown)}", file=sys.stderr)
            return EXIT_INVALID
    try:
        report = run_suite(
            fx, checks, seeds=args.seeds, base_seed=args.seed or 0, horizon=_horizon(args.horizon)
        )
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(report.summary_table())
    if args.report:
        Path(args.report).write_text(report.to_json() + "\n")
    return report.exit_code


def cmd_explain(args) -> int:
    names = list(CHECKS) if args.check == "all" else [args.check]
    for name in names:
        if name not in CHECKS:
            print(f"error: unknown check {name!r}; known: {', '.join(CHECKS)}", file=sys.stderr)
            return EXIT_INVALID
        print(explain(name))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stoptime",
        description="Verify time projections of stopping times on finite-dimensional algebras.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("fixture", help="fixture JSON file")
        p.add_argument("--seed", type=int, default=None,
                       help="seed for random stopping times (overrides the fixture's)")
        p.add_argument("--tol", type=float, default=None, help="override eq_tol")

    p = sub.add_parser("validate", help="load a fixture and run the invariant gates only")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run the verification suite")
    common(p)
    p.add_argument("--seeds", type=int, default=0,
                   help="number of extra random adapted stopping times")
    p.add_argument("--horizon", default=None, help="restrict per-horizon checks to this grid point")
    p.add_argument("--checks", default=None, help="comma-separated subset of checks")
    p.add_argument("--report", default=None, help="write the JSON report here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("explain", help="describe a check ('all' lists every check)")
    p.add_argument("check")
    p.set_defaults(func=cmd_explain)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

"""Command line front end: ``expcolloc run|converge|energy|list-problems``.

Exit codes: 0 success, 2 configuration error (nothing written), 3 numerical
blowup (partial output is still written).
"""
from __future__ import annotations

import argparse
import json
import sys

from .harness import METHODS, ConfigError, converge, energy_study, load_config, run
from .problems import CATALOG

EXIT_CONFIG = 2
EXIT_BLOWUP = 3


def _param(text: str):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="expcolloc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file with [problem], [method] and [run] tables")
    common.add_argument("--problem")
    common.add_argument("--param", action="append", type=_param, default=[],
                        metavar="KEY=VALUE", help="problem parameter (JSON value), repeatable")
    common.add_argument("--method", help=f"one of {', '.join(METHODS)}")
    common.add_argument("--r", type=int)
    common.add_argument("--h", type=float, action="append", help="stepsize, repeatable")
    common.add_argument("--t-end", type=float, dest="t_end")
    common.add_argument("--out")
    common.add_argument("--seed", type=int)
    common.add_argument("--dense", action="store_true", default=None,
                        help="also write the continuous output at step midpoints (ecr only)")
    common.add_argument("--max-iter", type=int, dest="max_iter")
    sub.add_parser("run", parents=[common], help="integrate and write trajectory, energy, diagnostics")
    sub.add_parser("converge", parents=[common], help="endpoint errors over several stepsizes")
    sub.add_parser("energy", parents=[common], help="energy drift and Lyapunov monotonicity")
    sub.add_parser("list-problems", help="print the problem catalog")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list-problems":
        for name, factory in CATALOG.items():
            print(f"{name}\t{(factory.__doc__ or '').strip().splitlines()[0]}")
        return 0
    try:
        cfg = load_config(args.config, problem=args.problem, method=args.method, r=args.r, h=args.h,
                          t_end=args.t_end, out=args.out, seed=args.seed, dense=args.dense,
                          max_iter=args.max_iter, params=dict(args.param))
        cfg.validate()
        cfg.instance()
        if args.command == "run":
            summary = run(cfg)
            blowup = summary["blowup"]
            print(json.dumps(summary["runs"], indent=2))
        elif args.command == "converge":
            report = converge(cfg)
            blowup = any(e == float("inf") for e in report.errors)
            print(f"order {report.order}  R^2 {report.r_squared}  reference {report.reference}"
                  + (f"  ({report.note})" if report.note else ""))
        else:
            summary = energy_study(cfg)
            blowup = summary["blowup"]
            print(json.dumps({k: v for k, v in summary.items() if k != "params"}, indent=2))
    except (ConfigError, OSError) as exc:
        print(f"expcolloc: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if blowup:
        print("expcolloc: numerical blowup, partial output written", file=sys.stderr)
        return EXIT_BLOWUP
    return 0


if __name__ == "__main__":
    sys.exit(main())

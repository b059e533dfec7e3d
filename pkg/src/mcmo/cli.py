"""Command line entry point.

Exit codes: 0 on success, 1 on a runtime failure (infeasible start, solver
or baseline failure), 2 on an invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .errors import ConfigError, MCMOError
from .experiments import load_config, run_experiment, run_oracle, sweep_convergence, sweep_timing


def _ints(text):
    return [int(v) for v in text.split(",") if v]


def _floats(text):
    return [float(v) for v in text.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcmo", description="Monte-Carlo multilevel optimization experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, workers=False):
        p.add_argument("--config", required=True, help="run configuration (INI)")
        p.add_argument("--seed", type=int, default=None, help="override the configured seed")
        p.add_argument("--out", default="results", help="output directory")
        if workers:
            p.add_argument("--workers", type=int, default=1, help="parallel sweep cells")

    common(sub.add_parser("run", help="run one experiment"))
    p = sub.add_parser("sweep-timing", help="norm-chain timing over depth and sample count")
    common(p, workers=True)
    p.add_argument("--levels", type=_ints, default=[2, 3, 4, 5])
    p.add_argument("--N", type=_ints, default=[3, 4, 5], dest="Ns")
    p.add_argument("--repeats", type=int, default=1, help="runs per cell; the fastest is reported")
    p = sub.add_parser("sweep-convergence", help="leader value per iteration for several N or alpha")
    common(p, workers=True)
    p.add_argument("--vary", choices=("N", "alpha"), required=True)
    p.add_argument("--values", type=_floats, required=True)
    p.add_argument("--seeds", type=_ints, default=None)
    common(sub.add_parser("oracle", help="reference solution of the configured problem"))
    return parser


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        if args.command == "run":
            result = run_experiment(cfg, args.out)
            keys = ("problem", "method", "seed", "leader_value", "relative_error", "total_seconds")
            print(json.dumps({k: result.get(k) for k in keys}))
        elif args.command == "sweep-timing":
            rows = sweep_timing(cfg, args.levels, args.Ns, args.out, args.workers, args.repeats)
            for row in rows:
                print(f"levels={row['levels']} N={row['N']} seconds={row['seconds']} "
                      f"calls={row['solve_full_calls']} {row['error']}".rstrip())
        elif args.command == "sweep-convergence":
            values = [int(v) for v in args.values] if args.vary == "N" else args.values
            rows = sweep_convergence(cfg, args.vary, values, args.out, args.seeds, args.workers)
            for row in rows:
                print(f"{row[0]}={row[1]} seed={row[2]} final={row[-1]}")
        else:
            print(json.dumps(run_oracle(cfg, args.out)))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MCMOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

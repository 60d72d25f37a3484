"""Command-line entry point.

Subcommands:
  run         execute an experiment sweep from a config file
  summarize   aggregate a results CSV into per-cell mean/s.d.
  bound       evaluate the three generalization-gap terms
  noise-check compare empirical noise-norm statistics with the analytic ones

Exit codes: 0 success, 1 config error, 2 data error.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from .data import DataError
from .harness import (ConfigError, load_config, read_records, run_experiment,
                      summarize, write_summary)
from .pipelines import BoundParams, theorem3_bound
from .privacy import NoiseSpec, sample_noise


def _cmd_run(args) -> int:
    overrides = {}
    if args.output:
        overrides["output"] = args.output
    if args.workers:
        overrides["workers"] = args.workers
    if args.master_seed is not None:
        overrides["master_seed"] = args.master_seed
    config = load_config(args.config, overrides)
    records = run_experiment(config)
    print(f"wrote {len(records)} records to {config.output}")
    return 0


def _cmd_summarize(args) -> int:
    rows = summarize(read_records(args.input))
    write_summary(rows, args.output)
    print(f"wrote {len(rows)} summary rows to {args.output}")
    return 0


def _cmd_bound(args) -> int:
    params = BoundParams(d=args.d, c=args.c, lam=args.lam, M=args.M,
                         epsilon=args.epsilon, N=args.N, delta_p=args.delta_p,
                         delta_s=args.delta_s, w0_norm=args.w0_norm)
    noise, sample, reg = theorem3_bound(params)
    print(f"noise_term={noise!r}")
    print(f"sample_term={sample!r}")
    print(f"reg_term={reg!r}")
    print(f"total={noise + sample + reg!r}")
    return 0


def _cmd_noise_check(args) -> int:
    spec = NoiseSpec(beta=args.beta, d_total=args.d)
    rng = np.random.default_rng(args.seed)
    norms = np.array([np.linalg.norm(sample_noise(spec, rng))
                      for _ in range(args.draws)])
    analytic = args.d / args.beta
    print(f"draws={args.draws} d={args.d} beta={args.beta}")
    print(f"empirical_mean_norm={norms.mean()!r}")
    print(f"analytic_mean_norm={analytic!r}")
    print(f"relative_error={abs(norms.mean() - analytic) / analytic!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpens",
        description="Private multiparty ensemble learning experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment sweep")
    p.add_argument("config", help="path to the YAML config file")
    p.add_argument("--output", help="override the output CSV path")
    p.add_argument("--workers", type=int, help="parallel trial workers")
    p.add_argument("--master-seed", type=int, dest="master_seed")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("summarize", help="aggregate a results CSV")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(fn=_cmd_summarize)

    p = sub.add_parser("bound", help="generalization-gap terms")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--c", type=float, default=0.25)
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--delta-p", type=float, default=0.05, dest="delta_p")
    p.add_argument("--delta-s", type=float, default=0.05, dest="delta_s")
    p.add_argument("--w0-norm", type=float, default=1.0, dest="w0_norm")
    p.set_defaults(fn=_cmd_bound)

    p = sub.add_parser("noise-check", help="empirical vs analytic noise norms")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--draws", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_noise_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

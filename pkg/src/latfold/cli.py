"""Command-line interface: table1, sweep, demo2d, quantize-bench."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiments import (ExperimentConfig, emit_tables, emit_trajectory_demo,
                          quantize_bench, run_sweep, table3_config, table4_config)
from .moments import format_report_csv, format_report_text, table1_report


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, default=None, help="output file or directory")
    p.add_argument("--format", choices=("csv", "json", "text"), default="text")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="latfold",
        description="Lattice-modulo folding experiments and reports")
    sub = parser.add_subparsers(dest="command", required=True)

    p1 = sub.add_parser("table1", help="second-moment comparison table")
    _add_common(p1)
    p1.add_argument("--samples", type=int, default=10**6)
    p1.add_argument("--workers", type=int, default=1)

    p2 = sub.add_parser("sweep", help="Monte Carlo recovery-rate sweep")
    _add_common(p2)
    p2.add_argument("--config", type=str, default=None, help="JSON config file")
    p2.add_argument("--preset", choices=("additive", "quantization"),
                    default=None)
    p2.add_argument("--trials", type=int, default=None)
    p2.add_argument("--algorithm", choices=("b2r2", "lasso", "hod"), default=None)
    p2.add_argument("--order", type=int, default=None, help="difference order for hod")
    p2.add_argument("--mu", type=float, default=None, help="lasso regularization")
    p2.add_argument("--guard", type=float, default=None)
    p2.add_argument("--tol", type=float, default=None)
    p2.add_argument("--max-iters", type=int, default=None)
    p2.add_argument("--workers", type=int, default=1)
    p2.add_argument("--dump-config", type=str, default=None,
                    help="write the effective config JSON and exit")
    p2.add_argument("--strict", action="store_true",
                    help="exit nonzero when any cell reports an error")

    p3 = sub.add_parser("demo2d", help="square vs hexagon 2D trajectory demo")
    _add_common(p3)
    p3.add_argument("--lam", type=float, default=1.0)
    p3.add_argument("--power-trials", type=int, default=200)

    p4 = sub.add_parser("quantize-bench", help="matched/mismatched quantizer check")
    _add_common(p4)
    p4.add_argument("--samples", type=int, default=200000)
    p4.add_argument("--bits", type=str, default="2,4,6")

    args = parser.parse_args(argv)

    if args.command == "table1":
        rows = table1_report(n_samples=args.samples, seed=args.seed,
                             workers=args.workers)
        out = format_report_csv(rows) if args.format == "csv" else format_report_text(rows)
        if args.format == "json":
            out = json.dumps(rows, indent=2, sort_keys=True) + "\n"
        if args.out:
            Path(args.out).write_text(out)
        else:
            sys.stdout.write(out)
        return 0

    if args.command == "sweep":
        if args.config:
            cfg = ExperimentConfig.load(args.config)
        elif args.preset == "quantization":
            cfg = table4_config(master_seed=args.seed)
        else:
            cfg = table3_config(master_seed=args.seed)
        if args.trials is not None:
            cfg.n_trials = args.trials
        if args.algorithm is not None:
            cfg.algorithm = args.algorithm
        if args.order is not None:
            cfg.hod_order = args.order
        if args.mu is not None:
            cfg.lasso_mu = args.mu
        if args.guard is not None:
            cfg.guard = args.guard
        if args.tol is not None:
            cfg.tol = args.tol
        if args.max_iters is not None:
            cfg.max_iters = args.max_iters
        if args.dump_config:
            cfg.save(args.dump_config)
            return 0
        result = run_sweep(cfg, workers=args.workers)
        out = emit_tables(result, fmt=args.format, path=args.out)
        if not args.out:
            sys.stdout.write(out)
        bad = [c for c in result.cells if c.error]
        if bad:
            for c in bad:
                print(f"cell error: OF={c.of:g} {c.level_kind}={c.level} "
                      f"{c.architecture}: {c.error}", file=sys.stderr)
            if args.strict:
                return 1
        return 0

    if args.command == "demo2d":
        outdir = args.out or "demo2d_out"
        summary = emit_trajectory_demo(outdir, seed=args.seed, lam=args.lam,
                                       power_trials=args.power_trials)
        sys.stdout.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        return 0

    if args.command == "quantize-bench":
        bits = tuple(int(b) for b in args.bits.split(","))
        report = quantize_bench(n_samples=args.samples, seed=args.seed, bits=bits)
        out = json.dumps(report, indent=2, sort_keys=True) + "\n"
        if args.out:
            Path(args.out).write_text(out)
        else:
            sys.stdout.write(out)
        return 0

    return 2


if __name__ == "__main__":
    raise SystemExit(main())

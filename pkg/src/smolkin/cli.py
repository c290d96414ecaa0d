"""Command line interface: ``smolkin run | bench | verify``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

from . import io
from .config import ConfigError, ExperimentConfig, build_model, build_simulation, load_config
from .kernels import KernelError
from .simulator import run
from .verify import run_checks

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORTED = 3
EXIT_VERIFY = 4

log = logging.getLogger("smolkin")


def _outdir(args, cfg: ExperimentConfig) -> Path:
    if args.output:
        return Path(args.output)
    if cfg.output:
        return Path(cfg.output)
    return Path("smolkin-out")


def _load(args):
    if not args.config:
        raise ConfigError("--config is required")
    cfg = load_config(args.config)
    base = Path(args.config).resolve().parent
    try:
        model = build_model(cfg.model, base)
    except (KernelError, ValueError) as exc:
        raise ConfigError(f"{args.config}: model: {exc}") from None
    return cfg, base, model


def cmd_run(args) -> int:
    cfg, base, model = _load(args)
    if cfg.stepper is None:
        raise ConfigError(f"{args.config}: stepper: required for 'run'")
    sim = build_simulation(cfg, base=base, model=model, workers=args.threads)
    report = run(sim)
    outdir = _outdir(args, cfg)
    io.write_run(report, outdir)
    summary = io.summary_dict(report)
    if not args.quiet:
        print(json.dumps(summary, indent=2))
    if not report.completed:
        log.error("integration aborted: %s at t=%s", report.abort_reason, report.final_t)
        return EXIT_ABORTED
    return EXIT_OK


def _run_cell(cfg, base, model, stepper):
    sim = build_simulation(cfg, stepper, base=base, model=model)
    return run(sim)


def cmd_bench(args) -> int:
    cfg, base, model = _load(args)
    if cfg.bench is None:
        raise ConfigError(f"{args.config}: bench: required for 'bench'")
    cfg = cfg.model_copy(update={"record_every": 0.0, "snapshots": []})
    cells = cfg.bench.cells
    with ThreadPoolExecutor(max_workers=max(1, args.threads or 1)) as pool:
        futures = [pool.submit(_run_cell, cfg, base, model, c) for c in cells]
        reports = []
        for fut in futures:
            try:
                reports.append(fut.result())
            except Exception as exc:  # one broken cell must not sink the table
                reports.append(exc)

    outdir = _outdir(args, cfg)
    outdir.mkdir(parents=True, exist_ok=True)
    rows, cols, pretty, evals = [], [], {}, {}
    with open(outdir / "bench_cells.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scheme", "mode", "status", "rhs_evals", "accepted", "rejected",
                    "seconds", "final_N"])
        for cell, rep in zip(cells, reports):
            r, c = cell.scheme.value.upper(), cell.label
            rows += [r] if r not in rows else []
            cols += [c] if c not in cols else []
            if isinstance(rep, Exception):
                w.writerow([r, c, f"error: {rep}", "", "", "", "", ""])
                pretty[(r, c)] = "error"
                continue
            status = rep.termination.value
            w.writerow([r, c, status, rep.rhs_evals, rep.accepted, rep.rejected,
                        f"{rep.wall_seconds:.3f}", io.fmt(rep.final_state.sum())])
            evals[(r, c)] = str(rep.rhs_evals) if rep.completed else "aborted"
            pretty[(r, c)] = (f"{rep.wall_seconds:.3f} / {rep.rhs_evals}" if rep.completed
                              else f"aborted ({rep.abort_reason})")
    with open(outdir / "bench_table.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scheme"] + cols)
        for r in rows:
            w.writerow([r] + [evals.get((r, c), "") for c in cols])
    table = io.format_table(rows, cols, pretty)
    (outdir / "bench.txt").write_text("seconds / rhs evaluations\n" + table)
    if not args.quiet:
        print("seconds / rhs evaluations")
        print(table, end="")
    return EXIT_OK


def cmd_verify(args) -> int:
    echo = (lambda s: None) if args.quiet else print
    return EXIT_OK if run_checks(echo) else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smolkin", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (YAML)")
    common.add_argument("--output", help="output directory (overrides config 'output')")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads: FFT workers for run, concurrent cells for bench")
    common.add_argument("--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="integrate one configuration").set_defaults(func=cmd_run)
    sub.add_parser("bench", parents=[common], help="benchmark a set of stepper cells").set_defaults(func=cmd_bench)
    sub.add_parser("verify", parents=[common], help="run the self-check battery").set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Command line front end.

Subcommands:

* run <config.toml> --out DIR     single experiment; trace.csv, summary.json, figures
* sweep <config.toml> --out DIR   grid or spiral-probe sweep; combined artifacts
* stages [config.toml]            device/stage table as CSV on stdout
* verify                          self-check suite; nonzero exit on any failure

Exit codes: 0 success, 1 verification failure, 2 config or I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import load_run_config, load_stages_config, load_sweep_config
from .harness import (
    ConfigError,
    probes_csv_text,
    run_experiment,
    run_grid_sweep,
    spiral_slowdown_sweep,
    spiral_summary_json_text,
    sweep_csv_text,
    write_atomic,
    write_run_artifacts,
)
from .pipemodel import emit_stage_table, llama_reference_table

__all__ = ["main", "cli_main"]


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="delaylab", description=__doc__.strip().splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one experiment from a TOML config")
    run.add_argument("config", help="path to the run config")
    run.add_argument("--out", default="out", help="output directory (default: ./out)")
    run.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    sweep = sub.add_parser("sweep", help="execute a grid or spiral-probe sweep")
    sweep.add_argument("config", help="path to the sweep config")
    sweep.add_argument("--out", default="out", help="output directory (default: ./out)")
    sweep.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    sweep.add_argument("--workers", type=int, default=None, help="max concurrent cells")

    stages = sub.add_parser("stages", help="print the device/stage CSV table")
    stages.add_argument("config", nargs="?", default=None,
                        help="stages config (default: the packaged reference models and devices)")

    sub.add_parser("verify", help="run the self-check suite")
    return p


def _cmd_run(args) -> int:
    cfg = load_run_config(args.config)
    record = run_experiment(cfg)
    trace, summary = write_run_artifacts(record, args.out)
    written = [trace, summary]
    if not args.no_figures:
        from .figures import render_run_figures

        written += [str(p) for p in render_run_figures(cfg, record, args.out)]
    for path in written:
        print(path)
    print(f"terminated={record.summary.terminated} final_loss={record.summary.final_loss:.6g}")
    return 0


def _cmd_sweep(args) -> int:
    sweep = load_sweep_config(args.config)
    out = args.out
    if sweep.kind == "grid":
        cells = run_grid_sweep(sweep.base, dict(sweep.grid), max_workers=args.workers)
        written = [write_atomic(os.path.join(out, "sweep.csv"), sweep_csv_text(cells))]
        if not args.no_figures:
            from .figures import render_grid_figure

            written += [str(p) for p in render_grid_figure(cells, out)]
    else:
        pr = sweep.probes
        result = spiral_slowdown_sweep(
            sweep.base,
            n_probes=pr.n_probes,
            traversal_deg=pr.traversal_deg,
            fork_max_steps=pr.fork_max_steps,
            fd_step=pr.fd_step,
            aligned_max=pr.aligned_max,
            misaligned_min=pr.misaligned_min,
        )
        written = [
            write_atomic(os.path.join(out, "probes.csv"), probes_csv_text(result)),
            write_atomic(os.path.join(out, "probes_summary.json"), spiral_summary_json_text(result)),
        ]
        if not args.no_figures:
            from .figures import render_spiral_figure

            written += [str(p) for p in render_spiral_figure(result, out)]
        stats = json.loads(spiral_summary_json_text(result))
        print(f"labels={stats['label_counts']} aligned_mean={stats['aligned_mean']} "
              f"misaligned_mean={stats['misaligned_mean']}")
    for path in written:
        print(path)
    return 0


def _cmd_stages(args) -> int:
    if args.config is None:
        sys.stdout.write(llama_reference_table())
        return 0
    cfg = load_stages_config(args.config)
    sys.stdout.write(emit_stage_table(cfg.models, cfg.devices))
    return 0


def _cmd_verify() -> int:
    from .verify import run_verify

    return 1 if run_verify() else 0


def cli_main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "stages":
            return _cmd_stages(args)
        return _cmd_verify()
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())

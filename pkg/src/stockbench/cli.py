"""``bench`` command-line interface.

Subcommands:
    run       train/evaluate a grid from a config file (resumable)
    eval      re-evaluate a saved cell checkpoint against its test split
    table     render a finished run as markdown or CSV
    dump      re-emit the prediction trace for one cell
    selftest  quick gradient and oracle suites
    synth     write a synthetic series as canonical CSV

Exit codes: 0 success, 1 config error, 2 data error, 3 one or more grid
cells failed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .data import load_csv, prepare_cell_data, synth_series, write_csv
from .errors import ConfigError, DataError, StockBenchError
from .grid import (
    cell_id,
    emit_predictions,
    emit_table,
    load_grid,
    parse_config,
    run_grid,
)
from .checkpoint import load_model
from .metrics import evaluate

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_CELL_FAILURES = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are config errors (exit 1)
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bench", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a (partial) experiment grid")
    p_run.add_argument("--config", required=True, help="flat key=value config file")

    p_eval = sub.add_parser("eval", help="evaluate a saved cell checkpoint")
    p_eval.add_argument("--checkpoint", required=True, help="cell directory under <run>/cells/")

    p_table = sub.add_parser("table", help="render results for a run directory")
    p_table.add_argument("--runs", required=True, help="run directory (out_dir of a run)")
    p_table.add_argument("--format", choices=("md", "markdown", "csv"), default="md")
    p_table.add_argument("--out", help="write to file instead of stdout")

    p_dump = sub.add_parser("dump", help="re-emit a cell's prediction trace")
    p_dump.add_argument("--runs", required=True, help="run directory")
    p_dump.add_argument("--cell", required=True, help="model,window,horizon (e.g. decoder_only,10,1)")
    p_dump.add_argument("--out", required=True, help="output CSV path")

    sub.add_parser("selftest", help="run quick gradient and oracle checks")

    p_synth = sub.add_parser("synth", help="write a synthetic series CSV")
    p_synth.add_argument("--kind", choices=("sine_trend", "random_walk", "constant"), required=True)
    p_synth.add_argument("--n", type=int, required=True)
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--seed", type=int, default=0)

    return parser


def _cmd_run(args) -> int:
    cfg = parse_config(args.config)
    result = run_grid(cfg)
    done = len(result.reports)
    print(f"grid complete: {done} cells ({result.skipped} restored), {len(result.failures)} failed")
    if result.failures:
        for cid, err in sorted(result.failures.items()):
            print(f"  failed {cid}: {err}", file=sys.stderr)
        return EXIT_CELL_FAILURES
    return EXIT_OK


def _cmd_eval(args) -> int:
    cell_dir = Path(args.checkpoint)
    checkpoint = cell_dir / "checkpoint" if cell_dir.is_dir() else cell_dir
    if not checkpoint.exists():
        raise ConfigError(f"no checkpoint at {checkpoint}")
    run_dir = checkpoint.parent.parent.parent
    _, cfg = load_grid(run_dir)
    model_id, window, horizon = _split_cell_id(checkpoint.parent.name)
    series = load_csv(cfg.data)
    _, test_ds, norm = prepare_cell_data(series, window, horizon, cfg.train_fraction)
    model = load_model(checkpoint)
    report = evaluate(model, test_ds, norm, model_id=model_id)
    for key, value in report.as_dict().items():
        print(f"{key}: {value}")
    return EXIT_OK


def _split_cell_id(name: str):
    parts = name.rsplit("_", 2)
    if len(parts) != 3:
        raise ConfigError(f"cell directory name {name!r} is not <model>_<window>_<horizon>")
    return parts[0], int(parts[1]), int(parts[2])


def _cmd_table(args) -> int:
    result, cfg = load_grid(args.runs)
    fmt = "markdown" if args.format in ("md", "markdown") else "csv"
    text = emit_table(result, cfg, fmt)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return EXIT_OK


def _cmd_dump(args) -> int:
    parts = [p.strip() for p in args.cell.split(",")]
    if len(parts) != 3:
        raise ConfigError("--cell must be model,window,horizon")
    model_id, window, horizon = parts[0], int(parts[1]), int(parts[2])
    run_dir = Path(args.runs)
    _, cfg = load_grid(run_dir)
    cell_dir = run_dir / "cells" / cell_id(model_id, window, horizon)
    if not (cell_dir / "checkpoint").exists():
        raise ConfigError(f"cell {cell_dir.name} has no checkpoint in {run_dir}")
    series = load_csv(cfg.data)
    _, test_ds, norm = prepare_cell_data(series, window, horizon, cfg.train_fraction)
    model = load_model(cell_dir / "checkpoint")
    emit_predictions(model, test_ds, norm, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_selftest(args) -> int:
    from . import selftest

    return EXIT_OK if selftest.run(print) else EXIT_CONFIG


def _cmd_synth(args) -> int:
    series = synth_series(args.kind, args.n, seed=args.seed)
    write_csv(series, args.out)
    print(f"wrote {args.out} ({len(series)} rows)")
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "eval": _cmd_eval,
    "table": _cmd_table,
    "dump": _cmd_dump,
    "selftest": _cmd_selftest,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except StockBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

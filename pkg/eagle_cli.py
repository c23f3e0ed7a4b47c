#!/usr/bin/env python3
"""
EAGLE optimizer benchmark CLI

Subcommands:
  train      one optimizer, one seed
  compare    every configured optimizer x seed, with the comparison tables
  landscape  one-parameter loss sweeps around a reference checkpoint
  usage      EAGLE usage rate under several gradient-difference thresholds
  selftest   embedded worked examples

Precedence: command-line flags > --config file > dataset preset defaults.
Exit codes: 0 success, 1 configuration/data error, 2 diverged run.
"""

import os
import sys
import logging
import argparse
from datetime import datetime
from pathlib import Path
from typing import List, Optional, Sequence

import pandas as pd
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

sys.path.append(str(Path(__file__).parent))

from benchmark_suite import BenchmarkRunner, ordering_checks, run_one
from config.experiment_config import ExperimentConfig, parse_threshold_list
from exporters.data_exporter import ResultExporter
from landscape_analysis import LandscapeScanner, history_frame, layer_composition, shapes_frame
from selftest import run_selftest
from utils.run_guard import ConfigError, ErrorRecovery, RunDiverged


logger = logging.getLogger("eagle_cli")

LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR"]


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors follow the exit-code contract"""

    def error(self, message):
        raise ConfigError(message, field="command line")


# -- setup ---------------------------------------------------------------------

def setup_logging(level: Optional[str] = None):
    level = (level or os.environ.get("EAGLE_LOG_LEVEL") or "INFO").upper()
    if level not in LOG_LEVELS:
        level = "INFO"

    root = logging.getLogger()
    for handler in list(root.handlers):
        if isinstance(handler, RichHandler):
            root.removeHandler(handler)
    root.addHandler(RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=False))
    root.setLevel(level)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--dataset", help="embedded dataset name (iris, wine)")
    common.add_argument("--epochs", type=int)
    common.add_argument("--seed", type=int, help="replace the seed list with this one seed")
    common.add_argument("--threshold", type=float, help="EAGLE gradient-difference threshold ('inf' allowed)")
    common.add_argument("--lr", type=float, help="alpha for eagle/adam, lr for sgd_momentum")
    batching = common.add_mutually_exclusive_group()
    batching.add_argument("--batch-size", type=int, dest="batch_size", help="minibatch size (default: 8)")
    batching.add_argument("--full-batch", dest="full_batch", action="store_true",
                          help="one full-batch update per epoch")
    common.add_argument("--out", help="output directory (fallback: $EAGLE_OUT_DIR)")
    common.add_argument("--jobs", type=int, help="worker processes for seeds (default: logical cores)")
    common.add_argument("--log-level", dest="log_level", choices=LOG_LEVELS)

    parser = _Parser(
        prog="eagle_cli.py",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", parents=[common], help="train one optimizer on one seed")
    train.add_argument("--optimizer", choices=["eagle", "adam", "sgd_momentum"])

    sub.add_parser("compare", parents=[common], help="all optimizers x seeds")

    landscape = sub.add_parser("landscape", parents=[common], help="1-D loss sweeps around a checkpoint")
    landscape.add_argument("--checkpoint", help="reference checkpoint (.eagl)")
    landscape.add_argument("--train-reference", dest="train_reference", action="store_true",
                           help="train the reference point first, then scan it")
    landscape.add_argument("--optimizer", choices=["eagle", "adam", "sgd_momentum"])

    usage = sub.add_parser("usage", parents=[common], help="EAGLE usage rate per threshold")
    usage.add_argument("--thresholds", help="comma-separated thresholds, e.g. 1e-3,7e-4,4e-4,1e-4")

    selftest = sub.add_parser("selftest", help="run the embedded worked examples")
    selftest.add_argument("--log-level", dest="log_level", choices=LOG_LEVELS)

    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file (or defaults) with the flag overrides applied"""
    config = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()

    optimizer = getattr(args, "optimizer", None)
    lr_target = "momentum.lr" if (optimizer or config.optimizer) == "sgd_momentum" else "eagle.alpha"

    overrides = {
        "dataset": args.dataset,
        "optimizer": optimizer,
        "epochs": args.epochs,
        "seeds": [args.seed] if args.seed is not None else None,
        "eagle.threshold": args.threshold,
        lr_target: args.lr,
        "batch_size": args.batch_size,
        "jobs": args.jobs,
    }
    if getattr(args, "thresholds", None):
        overrides["thresholds"] = parse_threshold_list(args.thresholds)

    config = config.with_overrides(**overrides)
    if getattr(args, "full_batch", False):
        config = config.model_copy(update={"batch_size": None})
    return config.with_overrides(output_dir=str(resolve_output_dir(args, config)))


def resolve_output_dir(args: argparse.Namespace, config: ExperimentConfig) -> Path:
    out = args.out or config.output_dir or os.environ.get("EAGLE_OUT_DIR")
    return Path(out) if out else Path("output") / args.command


# -- rendering -----------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def format_frame(frame: pd.DataFrame, title: str, columns: Optional[Sequence[str]] = None) -> Table:
    """Render a DataFrame as a rich table"""
    columns = list(columns or frame.columns)
    table = Table(title=title)
    for column in columns:
        table.add_column(str(column), justify="right")
    for _, row in frame.iterrows():
        table.add_row(*[_fmt(row[column]) for column in columns])
    return table


def format_selftest(results) -> Table:
    table = Table(title="selftest")
    table.add_column("check")
    table.add_column("result")
    table.add_column("detail")
    for result in results:
        verdict = "[green]PASS[/green]" if result.passed else "[red]FAIL[/red]"
        table.add_row(result.name, verdict, result.detail)
    return table


# -- subcommands ---------------------------------------------------------------

def _exporter(config: ExperimentConfig) -> ResultExporter:
    exporter = ResultExporter(config.output_dir)
    exporter.to_json(config.to_json_dict(), "effective_config.json")
    return exporter


def cmd_train(args, config: ExperimentConfig, console: Console, argv: List[str], started: datetime) -> int:
    exporter = _exporter(config)
    record = run_one(config, config.seeds[0], output_dir=config.output_dir)

    exporter.export_run(record)
    exporter.export_records([record])
    exporter.write_manifest(argv, started, config.config_hash(),
                            {"subcommand": "train", "checkpoints": [record.checkpoint], "status": record.status})

    last = record.metrics[-1]
    console.print(format_frame(pd.DataFrame([last.as_dict()]), f"{record.label} seed {record.seed}"))

    if record.diverged:
        raise RunDiverged(record.diverged_epoch, last.train_loss)
    return ErrorRecovery.EXIT_OK


def cmd_compare(args, config: ExperimentConfig, console: Console, argv: List[str], started: datetime) -> int:
    exporter = _exporter(config)
    suite = BenchmarkRunner(config, config.output_dir).run_suite()

    exporter.export_suite(suite)
    exporter.write_manifest(argv, started, config.config_hash(), {
        "subcommand": "compare",
        "checkpoints": [r.checkpoint for r in suite.records],
        "diverged": [f"{r.label}/{r.seed}" for r in suite.records if r.diverged]
    })

    console.print(format_frame(suite.metric3, "mean train loss at grid epochs"))
    below = ordering_checks(suite.metric3)
    if below:
        logger.info(f"eagle below adam at epochs: {[e for e, ok in below.items() if ok]}")
    return ErrorRecovery.EXIT_OK


def cmd_usage(args, config: ExperimentConfig, console: Console, argv: List[str], started: datetime) -> int:
    exporter = _exporter(config)
    study = BenchmarkRunner(config, config.output_dir).run_usage_study(config.thresholds)

    exporter.export_usage(study)
    exporter.write_manifest(argv, started, config.config_hash(), {
        "subcommand": "usage",
        "thresholds": config.thresholds,
        "diverged": [f"{r.label}/{r.seed}" for r in study.records if r.diverged]
    })

    console.print(format_frame(study.usage, "EAGLE usage rate", ["threshold", "stage", "average"]))
    return ErrorRecovery.EXIT_OK


def cmd_landscape(args, config: ExperimentConfig, console: Console, argv: List[str], started: datetime) -> int:
    exporter = _exporter(config)
    scanner = LandscapeScanner(config)
    checkpoint = args.checkpoint or config.landscape.checkpoint

    if args.train_reference:
        record = scanner.train_reference(config.output_dir)
        exporter.to_csv(history_frame(record), "reference_history.csv")
        if record.diverged:
            raise RunDiverged(record.diverged_epoch, record.metrics[-1].train_loss)
        checkpoint = record.checkpoint

    if checkpoint is None:
        raise ConfigError("landscape needs --checkpoint or --train-reference", field="landscape.checkpoint")

    net, profiles = scanner.run(checkpoint)
    shapes = shapes_frame(profiles)
    layers = layer_composition(profiles, net)

    exporter.export_landscape(profiles, shapes, layers)
    exporter.write_manifest(argv, started, config.config_hash(),
                            {"subcommand": "landscape", "checkpoint": str(checkpoint)})

    counts = layers.pivot(index="layer", columns="shape_class", values="count").reset_index()
    console.print(format_frame(counts, "shape classes per layer"))
    return ErrorRecovery.EXIT_OK


def cmd_selftest(console: Console) -> int:
    results, elapsed = run_selftest()
    console.print(format_selftest(results))
    failed = [r.name for r in results if not r.passed]
    logger.info(f"selftest: {len(results) - len(failed)}/{len(results)} passed in {elapsed:.2f}s")
    if failed:
        print(f"selftest failed: {', '.join(failed)}", file=sys.stderr)
        return ErrorRecovery.EXIT_CONFIG
    return ErrorRecovery.EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "compare": cmd_compare,
    "usage": cmd_usage,
    "landscape": cmd_landscape
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    started = datetime.now()
    console = Console()
    recovery = ErrorRecovery()

    try:
        args = build_parser().parse_args(argv)
        setup_logging(args.log_level)

        if args.command == "selftest":
            return cmd_selftest(console)

        config = resolve_config(args)
        return COMMANDS[args.command](args, config, console, argv, started)

    except Exception as e:
        logger.debug("Traceback", exc_info=True)
        report = recovery.log_detailed_error(e, {"command": argv[:1]})
        print(f"error ({report['category']}): {report['error_message']}", file=sys.stderr)
        return report['exit_code']


if __name__ == "__main__":
    sys.exit(main())

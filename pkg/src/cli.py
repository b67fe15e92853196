#!/usr/bin/env python3
"""
graphssl command line: fetch | pretrain | eval | ablate | report.

Run as `python -m src.cli <command> ...`. Exit codes: 0 success, 1 runtime
failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time

from dotenv import load_dotenv

from .ablation import AXES, AxisSweep, make_record, run_ablation
from .config import RunSettings, resolve_settings, source_config
from .encoder import CheckpointError, init_params, load_checkpoint, save_checkpoint
from .evaluation import embed_all, linear_probe
from .logging_config import log_component_error, log_run_record, setup_logger
from .report import (
    CSV_FIELDS,
    ReportError,
    emit_svg_linechart,
    group_series,
    loss_curve_series,
    markdown_table,
    read_records,
    write_records,
)
from .trainer import TrainingDivergedError, pretrain, read_loss_history, write_loss_history
from .tudataset import DatasetNotFoundError, FetchError, fetch_dataset, load_tudataset

logger = setup_logger("src")

# (flag, RunSettings field, type)
RUN_FLAGS = (
    ("--loss", "loss", str),
    ("--aug-a", "aug_a", str),
    ("--aug-b", "aug_b", str),
    ("--ratio", "ratio", float),
    ("--batch-size", "batch_size", int),
    ("--projector-dim", "projector_dim", int),
    ("--hidden-dim", "hidden_dim", int),
    ("--num-layers", "num_layers", int),
    ("--lambda", "lambda_", float),
    ("--mu", "mu", float),
    ("--nu", "nu", float),
    ("--gamma", "gamma", float),
    ("--epsilon", "epsilon", float),
    ("--p", "p", float),
    ("--temperature", "temperature", float),
    ("--lambda-bt", "lambda_bt", float),
    ("--epochs", "epochs", int),
    ("--learning-rate", "learning_rate", float),
    ("--seed", "seed", int),
    ("--folds", "folds", int),
    ("--repeats", "repeats", int),
    ("--probe-epochs", "probe_epochs", int),
    ("--probe-lr", "probe_lr", float),
    ("--probe-l2", "probe_l2", float),
)

# The only run flags eval accepts alongside --checkpoint; the rest come from the checkpoint
PROBE_FIELDS = ("folds", "repeats", "probe_epochs", "probe_lr", "probe_l2")


class AxisAction(argparse.Action):
    """--axis NAME starts a sweep; the following --values fills it."""

    def __call__(self, parser, namespace, value, option_string=None):
        axes = list(getattr(namespace, "axes", None) or [])
        if option_string == "--axis":
            if value not in AXES:
                parser.error(f"unknown ablation axis {value!r} (choose from {', '.join(AXES)})")
            axes.append([value, None])
        else:
            if not axes or axes[-1][1] is not None:
                parser.error("--values must follow an --axis")
            axes[-1][1] = value
        namespace.axes = axes


def _add_source_flags(parser: argparse.ArgumentParser, dataset_required: bool) -> None:
    parser.add_argument("--dataset", required=dataset_required, help="TU corpus name, e.g. MUTAG")
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--data-root", help="corpus root directory (default $GRAPHSSL_DATA_ROOT or ./data)")


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    for flag, dest, kind in RUN_FLAGS:
        parser.add_argument(flag, dest=dest, type=kind, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphssl", description="Graph self-supervised learning toolkit")
    commands = parser.add_subparsers(dest="command", required=True)

    fetch = commands.add_parser("fetch", help="download and unpack a TU corpus")
    _add_source_flags(fetch, dataset_required=True)

    train = commands.add_parser("pretrain", help="pre-train encoder and projector")
    _add_source_flags(train, dataset_required=False)
    _add_run_flags(train)
    train.add_argument("--out", help="checkpoint path (default runs/<dataset>-<loss>-s<seed>.ckpt)")
    train.add_argument("--loss-history", help="loss CSV path (default <checkpoint>.loss.csv)")

    evaluate = commands.add_parser("eval", help="linear evaluation of a checkpoint or an untrained encoder")
    _add_source_flags(evaluate, dataset_required=False)
    _add_run_flags(evaluate)
    source = evaluate.add_mutually_exclusive_group(required=True)
    source.add_argument(
        "--checkpoint",
        help="run settings come from the checkpoint: only --dataset, probe flags and the "
        "data_root / tu_url entries of --config apply",
    )
    source.add_argument("--random-init", action="store_true", help="probe a freshly initialized encoder")
    evaluate.add_argument("--out", default="runs.csv", help="RunRecord CSV to append to")
    evaluate.add_argument("--workers", type=int, default=1)

    ablate = commands.add_parser("ablate", help="cartesian hyperparameter sweep")
    _add_source_flags(ablate, dataset_required=False)
    _add_run_flags(ablate)
    ablate.add_argument("--axis", action=AxisAction, dest="axes", required=True, help=", ".join(AXES))
    ablate.add_argument("--values", action=AxisAction, dest="axes", help="comma-separated values for the last --axis")
    ablate.add_argument("--workers", type=int, default=1)
    ablate.add_argument("--out", default="runs.csv")

    report = commands.add_parser("report", help="charts and tables from RunRecord or loss CSVs")
    report.add_argument("--in", dest="inputs", nargs="+", default=[], help="RunRecord CSV file(s)")
    report.add_argument("--axis", choices=CSV_FIELDS, help="x axis field")
    report.add_argument("--series", default="loss", choices=CSV_FIELDS, help="one line per distinct value")
    report.add_argument("--y", default="accuracy_mean", choices=CSV_FIELDS)
    report.add_argument("--loss-history", nargs="+", help="loss CSVs to draw as normalized curves")
    report.add_argument("--table", action="store_true", help="print a markdown table (datasets x losses)")
    report.add_argument("--out", help="SVG output path")
    return parser


def _flag_values(args: argparse.Namespace) -> dict:
    values = {dest: getattr(args, dest, None) for _, dest, _ in RUN_FLAGS}
    values["dataset"] = getattr(args, "dataset", None)
    return values


def _settings(args: argparse.Namespace) -> tuple[RunSettings, dict[str, str]]:
    return resolve_settings(args.config, **_flag_values(args))


def _check_eval_flags(parser: argparse.ArgumentParser, args: argparse.Namespace) -> None:
    """Reject run flags that would contradict the settings stored in a checkpoint."""
    if args.command != "eval" or not args.checkpoint:
        return
    flag_names = {dest: flag for flag, dest, _ in RUN_FLAGS}
    given = [flag_names[dest] for dest in flag_names if dest not in PROBE_FIELDS and getattr(args, dest) is not None]
    if given:
        parser.error(f"{', '.join(given)} cannot be combined with --checkpoint (stored in the checkpoint)")


def cmd_fetch(args: argparse.Namespace) -> int:
    _, file_source = resolve_settings(args.config)
    cfg = source_config(args.dataset, file_source, args.data_root)
    path = fetch_dataset(cfg)
    logger.info(f"{cfg.dataset_name} ready at {path}")
    return 0


def cmd_pretrain(args: argparse.Namespace) -> int:
    settings, file_source = _settings(args)
    dataset = load_tudataset(source_config(settings.dataset, file_source, args.data_root))
    result = pretrain(dataset, settings.to_train_config())

    out = args.out or os.path.join("runs", f"{settings.dataset}-{settings.loss}-s{settings.seed}.ckpt")
    history_path = args.loss_history or f"{os.path.splitext(out)[0]}.loss.csv"
    metadata = settings.to_metadata()
    metadata["final_loss"] = repr(result.final_loss)
    metadata["runtime_s"] = repr(result.wall_time)
    save_checkpoint(out, result.params, metadata)
    write_loss_history(history_path, result.loss_history)
    logger.info(f"Checkpoint: {out}; loss history: {history_path}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    if args.checkpoint:
        params, meta = load_checkpoint(args.checkpoint)
        stored = RunSettings.from_metadata(meta)
        file_values = resolve_settings(args.config)[1]
        probe_flags = {dest: getattr(args, dest) for dest in PROBE_FIELDS}
        settings = stored.overrides(dataset=args.dataset, **probe_flags)
        final_loss = float(meta.get("final_loss", "nan"))
        pretrain_time = float(meta.get("runtime_s", "0"))
        label = args.checkpoint
    else:
        settings, file_values = _settings(args)
        params = None
        final_loss = math.nan
        pretrain_time = 0.0
        label = f"{settings.dataset} random init (seed {settings.seed})"

    dataset = load_tudataset(source_config(settings.dataset, file_values, args.data_root))
    if params is None:
        params = init_params(settings.encoder_config(), dataset.feature_dim, settings.seed)
    elif params.feature_dim != dataset.feature_dim:
        msg = (
            f"checkpoint {args.checkpoint} expects feature_dim {params.feature_dim}, "
            f"{dataset.name} has {dataset.feature_dim}"
        )
        raise CheckpointError(msg)

    start = time.perf_counter()
    embeddings = embed_all(params, dataset)
    report = linear_probe(embeddings, dataset.labels, settings.to_probe_config(args.workers))
    record = make_record(settings, report, final_loss, pretrain_time + time.perf_counter() - start)
    write_records(args.out, [record])
    log_run_record(logger, label, report.accuracy_mean, report.accuracy_std)
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    sweeps = [AxisSweep.with_defaults(name, values) for name, values in args.axes]
    base, file_source = _settings(args)
    source = source_config(base.dataset, file_source, args.data_root)
    result = run_ablation(base, sweeps, source, args.out, workers=args.workers)
    logger.info(f"Ablation wrote {len(result.records)} record(s) to {args.out}")
    if result.failures:
        log_component_error(logger, "ablate", f"{len(result.failures)} cell(s) failed")
        return 1
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    if args.loss_history:
        histories = {os.path.splitext(os.path.basename(p))[0]: read_loss_history(p) for p in args.loss_history}
        out = args.out or "loss_curves.svg"
        emit_svg_linechart(loss_curve_series(histories), "epoch", "normalized training loss", out)
        return 0

    if not args.inputs:
        msg = "report needs --in FILE (or --loss-history)"
        raise ReportError(msg)
    records = [record for path in args.inputs for record in read_records(path)]

    if args.table:
        sys.stdout.write(markdown_table(records))
        return 0
    if not args.axis:
        msg = "report needs --axis, --table or --loss-history"
        raise ReportError(msg)
    series = group_series(records, args.axis, args.series, args.y)
    out = args.out or f"report_{args.axis}.svg"
    emit_svg_linechart(series, args.axis, args.y, out, title=f"{args.y} vs {args.axis}")
    return 0


COMMANDS = {
    "fetch": cmd_fetch,
    "pretrain": cmd_pretrain,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    """
    Main entry point.

    Environment variables:
    - GRAPHSSL_TU_URL: TU archive base URL
    - GRAPHSSL_DATA_ROOT: corpus root directory
    - LOG_LEVEL / LOG_FORMAT / LOG_FILE: logging (see logging_config)
    """
    load_dotenv(override=False)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _check_eval_flags(parser, args)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        return COMMANDS[args.command](args)
    except TrainingDivergedError as e:
        log_component_error(logger, args.command, f"training diverged: {e}")
        return 1
    except (DatasetNotFoundError, FetchError, ValueError) as e:
        log_component_error(logger, args.command, str(e))
        return 1
    except Exception as e:
        logger.exception(f"Error in {args.command}: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""
Experiment records (RunRecord CSV) and SVG line-chart reports.
"""

from __future__ import annotations

import csv
import logging
import os
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import astuple, dataclass, fields

import matplotlib as mpl

mpl.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

logger = logging.getLogger(__name__)

CSV_FIELDS = (
    "dataset",
    "loss",
    "aug_a",
    "aug_b",
    "ratio",
    "batch_size",
    "projector_dim",
    "lambda",
    "mu",
    "nu",
    "p",
    "seed",
    "accuracy_mean",
    "accuracy_std",
    "final_loss",
    "runtime_s",
)

# gid prefixes carried into the SVG so series and legend entries can be located
SERIES_GID = "series"
LEGEND_GID = "legend"


class ReportError(ValueError):
    """Unreadable record file or unplottable series."""


@dataclass(frozen=True)
class RunRecord:
    """One completed pre-train + evaluate run; field order is the CSV column order."""

    dataset: str
    loss: str
    aug_a: str
    aug_b: str
    ratio: float
    batch_size: int
    projector_dim: int
    lambda_: float
    mu: float
    nu: float
    p: float
    seed: int
    accuracy_mean: float
    accuracy_std: float
    final_loss: float
    runtime_s: float

    def __post_init__(self):
        for name in ("accuracy_mean", "accuracy_std"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                msg = f"{name} must lie in [0, 1], got {value}"
                raise ReportError(msg)

    def get(self, column: str):
        """Value by CSV column name (`lambda` maps to `lambda_`)."""
        if column not in CSV_FIELDS:
            msg = f"unknown record field {column!r} (choose from {', '.join(CSV_FIELDS)})"
            raise ReportError(msg)
        return getattr(self, "lambda_" if column == "lambda" else column)

    def numeric_fields(self) -> tuple:
        """Every field that must be reproducible across identical runs."""
        return tuple(value for name, value in zip(CSV_FIELDS, astuple(self), strict=True) if name != "runtime_s")

    def to_row(self) -> list[str]:
        return [repr(v) if isinstance(v, float) else str(v) for v in astuple(self)]

    @classmethod
    def from_row(cls, row: Mapping[str, str]) -> RunRecord:
        values = {}
        for field, column in zip(fields(cls), CSV_FIELDS, strict=True):
            kind = field.type
            raw = row[column]
            if kind == "int":
                values[field.name] = int(raw)
            elif kind == "float":
                values[field.name] = float(raw)
            else:
                values[field.name] = raw
        return cls(**values)


def write_records(path: str, records: Iterable[RunRecord]) -> int:
    """Append records, writing the header when the file is new or empty; returns rows written."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    new_file = not os.path.exists(path) or os.path.getsize(path) == 0
    count = 0
    with open(path, "a", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        if new_file:
            writer.writerow(CSV_FIELDS)
        for record in records:
            writer.writerow(record.to_row())
            count += 1
    logger.debug(f"Appended {count} record(s) to {path}")
    return count


def read_records(path: str) -> list[RunRecord]:
    if not os.path.isfile(path):
        msg = f"record file not found: {path}"
        raise ReportError(msg)
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != CSV_FIELDS:
            msg = f"{path}: header {reader.fieldnames} does not match {','.join(CSV_FIELDS)}"
            raise ReportError(msg)
        records = []
        for line, row in enumerate(reader, start=2):
            try:
                records.append(RunRecord.from_row(row))
            except (TypeError, ValueError) as e:
                msg = f"{path} line {line}: {e}"
                raise ReportError(msg) from e
    return records


def group_series(records: Sequence[RunRecord], axis: str, series_field: str = "loss", y_field: str = "accuracy_mean"):
    """
    {series value: [(x, y), ...]} sorted by x; points sharing x are averaged.
    """
    buckets: dict[str, dict[float, list[float]]] = defaultdict(lambda: defaultdict(list))
    for record in records:
        x = record.get(axis)
        try:
            x_value = float(x)
        except ValueError:
            msg = f"axis {axis!r} is not numeric (value {x!r})"
            raise ReportError(msg) from None
        buckets[str(record.get(series_field))][x_value].append(float(record.get(y_field)))
    return {
        name: [(x, float(np.mean(ys))) for x, ys in sorted(points.items())] for name, points in sorted(buckets.items())
    }


def _check_series(series: Mapping[str, Sequence[tuple[float, float]]]) -> None:
    if not series:
        msg = "no series to plot"
        raise ReportError(msg)
    for name, points in series.items():
        if not points:
            msg = f"series {name!r} is empty"
            raise ReportError(msg)
        xs = [x for x, _ in points]
        if any(b <= a for a, b in zip(xs, xs[1:], strict=False)):
            msg = f"series {name!r}: x values must be strictly increasing, got {xs}"
            raise ReportError(msg)


def emit_svg_linechart(
    series: Mapping[str, Sequence[tuple[float, float]]],
    x_label: str,
    y_label: str,
    out_path: str,
    title: str | None = None,
) -> str:
    """
    Self-contained SVG with one line per series, a legend and linear axes.

    matplotlib renders each series as a `<path>` (not a `<polyline>`) inside a
    `<g id="series-<i>">` group; legend labels sit in `<g id="legend-<i>">`.
    Locate series by those ids rather than by element name.
    """
    _check_series(series)
    directory = os.path.dirname(out_path)
    if directory:
        os.makedirs(directory, exist_ok=True)

    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    try:
        for index, (name, points) in enumerate(series.items()):
            xs = [x for x, _ in points]
            ys = [y for _, y in points]
            (line,) = ax.plot(xs, ys, marker="o", markersize=3, label=name)
            line.set_gid(f"{SERIES_GID}-{index}")
        ax.set_xlabel(x_label)
        ax.set_ylabel(y_label)
        if title:
            ax.set_title(title)
        ax.grid(True, alpha=0.3)
        legend = ax.legend(loc="best", fontsize=8)
        for index, text in enumerate(legend.get_texts()):
            text.set_gid(f"{LEGEND_GID}-{index}")
        fig.tight_layout()
        fig.savefig(out_path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    logger.info(f"Wrote chart {out_path} ({len(series)} series)")
    return out_path


def normalize_loss_history(history: Sequence[float]) -> list[float]:
    """Divide each epoch's loss by the first epoch's."""
    if not history:
        msg = "empty loss history"
        raise ReportError(msg)
    first = history[0]
    if first == 0:
        msg = "first-epoch loss is zero; cannot normalize"
        raise ReportError(msg)
    return [value / first for value in history]


def loss_curve_series(histories: Mapping[str, Sequence[float]]) -> dict[str, list[tuple[float, float]]]:
    return {
        name: [(float(epoch), value) for epoch, value in enumerate(normalize_loss_history(history))]
        for name, history in histories.items()
    }


def markdown_table(records: Sequence[RunRecord]) -> str:
    """Losses as rows, datasets as columns, cells `mean ± std` in percent over matching records."""
    if not records:
        msg = "no records to tabulate"
        raise ReportError(msg)
    datasets = sorted({r.dataset for r in records})
    losses = sorted({r.loss for r in records})
    cells: dict[tuple[str, str], list[RunRecord]] = defaultdict(list)
    for record in records:
        cells[(record.loss, record.dataset)].append(record)

    lines = [
        "| loss | " + " | ".join(datasets) + " |",
        "|---|" + "---|" * len(datasets),
    ]
    for loss in losses:
        row = [loss]
        for dataset in datasets:
            group = cells.get((loss, dataset))
            if not group:
                row.append("-")
                continue
            mean = 100 * float(np.mean([r.accuracy_mean for r in group]))
            std = 100 * float(np.mean([r.accuracy_std for r in group]))
            row.append(f"{mean:.2f} ± {std:.2f}")
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"

#!/usr/bin/env python3
"""
Cartesian hyperparameter sweeps: one pre-train + linear evaluation per cell.
"""

from __future__ import annotations

import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import astuple, dataclass
from functools import lru_cache

from .config import RunSettings
from .evaluation import EvalReport, embed_all, linear_probe
from .graph import Dataset
from .logging_config import log_component_error, log_run_record
from .report import RunRecord, write_records
from .trainer import TrainingDivergedError, pretrain
from .tudataset import TuSourceConfig, load_tudataset

logger = logging.getLogger(__name__)

# Axis name -> RunSettings fields it assigns
AXES: dict[str, tuple[str, ...]] = {
    "batch-size": ("batch_size",),
    "projector-dim": ("projector_dim",),
    "lambda-mu": ("lambda_", "mu"),
    "lambda": ("lambda_",),
    "mu": ("mu",),
    "nu": ("nu",),
    "p": ("p",),
    "ratio": ("ratio",),
    "aug": ("aug_a", "aug_b"),
    "loss": ("loss",),
    "seed": ("seed",),
}

DEFAULT_VALUES: dict[str, tuple[str, ...]] = {
    "p": ("1", "1.5", "2", "3"),
    "lambda-mu": ("1", "5", "10", "25", "50"),
    "batch-size": ("32", "64", "128"),
    "projector-dim": ("80", "160"),
    "ratio": ("0.1", "0.2", "0.3", "0.4"),
}


def parse_values(text: str) -> tuple[str, ...]:
    values = tuple(v.strip() for v in text.split(",") if v.strip())
    if not values:
        msg = f"no values in {text!r}"
        raise ValueError(msg)
    return values


@dataclass(frozen=True)
class AxisSweep:
    name: str
    values: tuple[str, ...]

    def __post_init__(self):
        if self.name not in AXES:
            msg = f"unknown ablation axis {self.name!r} (choose from {', '.join(AXES)})"
            raise ValueError(msg)
        if not self.values:
            msg = f"axis {self.name!r} has no values"
            raise ValueError(msg)

    @classmethod
    def with_defaults(cls, name: str, values: str | None = None) -> AxisSweep:
        if values is not None:
            return cls(name, parse_values(values))
        if name not in DEFAULT_VALUES:
            msg = f"axis {name!r} has no default values; pass --values"
            raise ValueError(msg)
        return cls(name, DEFAULT_VALUES[name])

    def assignments(self) -> list[dict[str, str]]:
        """Per value, the settings fields it sets."""
        result = []
        for value in self.values:
            if self.name == "aug":
                kinds = value.split("+")
                if len(kinds) != 2:
                    msg = f"aug values look like kindA+kindB, got {value!r}"
                    raise ValueError(msg)
                result.append({"aug_a": kinds[0], "aug_b": kinds[1]})
            else:
                result.append(dict.fromkeys(AXES[self.name], value))
        return result


def build_cells(base: RunSettings, sweeps: list[AxisSweep]) -> list[RunSettings]:
    """Cartesian product of the axes applied onto `base`; cell count is the product of value counts."""
    claimed: dict[str, str] = {}
    for sweep in sweeps:
        for name in AXES[sweep.name]:
            if name in claimed:
                msg = f"axes {claimed[name]!r} and {sweep.name!r} both set {name}"
                raise ValueError(msg)
            claimed[name] = sweep.name

    cells = []
    for combination in itertools.product(*(sweep.assignments() for sweep in sweeps)):
        merged: dict[str, str] = {}
        for assignment in combination:
            merged.update(assignment)
        cells.append(RunSettings.from_mapping(merged, base=base))
    return cells


def config_key(settings: RunSettings) -> tuple:
    return astuple(settings)


def make_record(settings: RunSettings, report: EvalReport, final_loss: float, runtime_s: float) -> RunRecord:
    return RunRecord(
        dataset=settings.dataset,
        loss=settings.loss,
        aug_a=settings.aug_a,
        aug_b=settings.aug_b,
        ratio=settings.ratio,
        batch_size=settings.batch_size,
        projector_dim=settings.projector_dim,
        lambda_=settings.lambda_,
        mu=settings.mu,
        nu=settings.nu,
        p=settings.p,
        seed=settings.seed,
        accuracy_mean=report.accuracy_mean,
        accuracy_std=report.accuracy_std,
        final_loss=final_loss,
        runtime_s=runtime_s,
    )


@lru_cache(maxsize=4)
def _load_cached(source: TuSourceConfig) -> Dataset:
    return load_tudataset(source)


def run_cell(settings: RunSettings, source: TuSourceConfig) -> RunRecord:
    """Pre-train, embed and probe one configuration."""
    dataset = _load_cached(source)
    start = time.perf_counter()
    result = pretrain(dataset, settings.to_train_config())
    embeddings = embed_all(result.params, dataset)
    report = linear_probe(embeddings, dataset.labels, settings.to_probe_config())
    return make_record(settings, report, result.final_loss, time.perf_counter() - start)


@dataclass(frozen=True)
class AblationResult:
    records: tuple[RunRecord, ...]
    failures: tuple[tuple[RunSettings, str], ...]


def run_ablation(
    base: RunSettings,
    sweeps: list[AxisSweep],
    source: TuSourceConfig,
    out_path: str,
    workers: int = 1,
) -> AblationResult:
    """
    Run every cell, then append the records to `out_path` sorted by configuration.

    A cell whose training diverges is logged and left out of the CSV.
    """
    cells = build_cells(base, sweeps)
    axes = " x ".join(f"{s.name}[{len(s.values)}]" for s in sweeps)
    logger.info(f"Ablation on {base.dataset}: {axes} = {len(cells)} cell(s), {workers} worker(s)")

    records: dict[int, RunRecord] = {}
    failures: list[tuple[RunSettings, str]] = []

    def finish(index: int, record: RunRecord) -> None:
        records[index] = record
        log_run_record(logger, f"cell {index + 1}/{len(cells)}", record.accuracy_mean, record.accuracy_std)

    def fail(index: int, error: Exception) -> None:
        log_component_error(logger, "ablation", f"cell {index + 1}/{len(cells)} failed: {error}")
        failures.append((cells[index], str(error)))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = {executor.submit(run_cell, cell, source): index for index, cell in enumerate(cells)}
            for future in as_completed(futures):
                try:
                    finish(futures[future], future.result())
                except (TrainingDivergedError, ValueError) as e:
                    fail(futures[future], e)
    else:
        for index, cell in enumerate(cells):
            try:
                finish(index, run_cell(cell, source))
            except (TrainingDivergedError, ValueError) as e:
                fail(index, e)

    ordered = tuple(records[i] for i in sorted(records, key=lambda i: config_key(cells[i])))
    write_records(out_path, ordered)
    return AblationResult(records=ordered, failures=tuple(failures))

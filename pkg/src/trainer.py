#!/usr/bin/env python3
"""
Deterministic self-supervised pre-training loop with Adam updates.

All randomness derives from the seed: the epoch shuffle from (seed, epoch) and
each graph's view pair from (seed, epoch, batch, graph). View batches for the
next step are built on a single background worker while the current step runs.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from collections.abc import Iterator, Mapping, Sequence
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .augment import AugmentKind, AugmentPool, AugmentSpec, derive_rng, sample_view_pair
from .encoder import EncoderConfig, ModelParams, encode, init_params, project
from .graph import Dataset, GraphBatch, batch_graphs
from .logging_config import log_epoch
from .losses import LossKind, LossParams, compute_loss
from .tensor import ShapeError, Tape, backward

logger = logging.getLogger(__name__)

# Stream tags for derive_rng
STREAM_SHUFFLE = 1
STREAM_VIEWS = 2


class TrainingDivergedError(RuntimeError):
    """The loss became NaN or infinite."""

    def __init__(self, epoch: int, batch: int, components: Mapping[str, float]):
        self.epoch = epoch
        self.batch = batch
        self.components = dict(components)
        details = ", ".join(f"{k}={v!r}" for k, v in self.components.items())
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}: {details}")


def _default_pool() -> AugmentPool:
    return AugmentPool((AugmentSpec(AugmentKind.NODE_DROP, 0.2), AugmentSpec(AugmentKind.SUBGRAPH, 0.2)))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    learning_rate: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0
    loss: LossKind = LossKind.VICREG_HSIC
    loss_params: LossParams = field(default_factory=LossParams)
    pool: AugmentPool = field(default_factory=_default_pool)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    prefetch: bool = True

    def __post_init__(self):
        object.__setattr__(self, "loss", LossKind(self.loss))
        if self.batch_size < 2:
            msg = f"batch_size must be >= 2 (variance and covariance need two rows), got {self.batch_size}"
            raise ValueError(msg)
        if self.epochs < 1:
            msg = f"epochs must be >= 1, got {self.epochs}"
            raise ValueError(msg)


@dataclass(frozen=True)
class TrainResult:
    params: ModelParams
    loss_history: tuple[float, ...]
    wall_time: float

    @property
    def final_loss(self) -> float:
        return self.loss_history[-1]


@dataclass(frozen=True)
class AdamState:
    step: int
    first_moment: Mapping[str, np.ndarray]
    second_moment: Mapping[str, np.ndarray]

    @classmethod
    def zeros_like(cls, arrays: Mapping[str, np.ndarray]) -> AdamState:
        return cls(
            0,
            {name: np.zeros_like(a) for name, a in arrays.items()},
            {name: np.zeros_like(a) for name, a in arrays.items()},
        )


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns new arrays and state, inputs untouched."""
    beta1, beta2 = betas
    step = state.step + 1
    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for name, value in params.items():
        grad = grads[name]
        if grad.shape != value.shape:
            msg = f"gradient for {name} has shape {grad.shape}, parameter has {value.shape}"
            raise ShapeError(msg)
        m = beta1 * state.first_moment[name] + (1 - beta1) * grad
        v = beta2 * state.second_moment[name] + (1 - beta2) * grad * grad
        if not grad.any():
            # Untouched by the loss: hold the parameter, let its moments decay
            new_params[name] = value.copy()
        else:
            m_hat = m / (1 - beta1**step)
            v_hat = v / (1 - beta2**step)
            new_params[name] = value - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(step, new_m, new_v)


def epoch_batches(num_graphs: int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Shuffled index batches for one epoch; a trailing batch of fewer than 2 graphs is dropped."""
    order = derive_rng(seed, STREAM_SHUFFLE, epoch).permutation(num_graphs)
    batches = [order[start : start + batch_size] for start in range(0, num_graphs, batch_size)]
    if batches and len(batches[-1]) < 2:
        logger.debug(f"Epoch {epoch}: dropping trailing batch of {len(batches[-1])} graph(s)")
        batches.pop()
    return batches


def build_view_batches(
    dataset: Dataset, indices: Sequence[int], pool: AugmentPool, seed: int, epoch: int, batch: int
) -> tuple[GraphBatch, GraphBatch]:
    views_a, views_b = [], []
    for graph_index in indices:
        rng = derive_rng(seed, STREAM_VIEWS, epoch, batch, int(graph_index))
        view_a, view_b = sample_view_pair(dataset.graphs[int(graph_index)], pool, rng)
        views_a.append(view_a)
        views_b.append(view_b)
    return batch_graphs(views_a), batch_graphs(views_b)


def _view_stream(dataset: Dataset, cfg: TrainConfig, epoch: int, batches: list[np.ndarray]) -> Iterator:
    def build(b):
        return build_view_batches(dataset, batches[b], cfg.pool, cfg.seed, epoch, b)

    if not cfg.prefetch or len(batches) < 2:
        for b in range(len(batches)):
            yield build(b)
        return

    with ThreadPoolExecutor(max_workers=1, thread_name_prefix="views") as executor:
        pending: Future = executor.submit(build, 0)
        for b in range(len(batches)):
            current = pending.result()
            if b + 1 < len(batches):
                pending = executor.submit(build, b + 1)
            yield current


def pretrain(dataset: Dataset, cfg: TrainConfig, initial: ModelParams | None = None) -> TrainResult:
    """
    Pre-train encoder and projector on `dataset` with the configured objective.

    Raises:
        ValueError: empty dataset or fewer than two graphs
        TrainingDivergedError: the loss became non-finite
    """
    if len(dataset) == 0:
        msg = "cannot pre-train on an empty dataset"
        raise ValueError(msg)
    if len(dataset) < 2:
        msg = "pre-training needs at least two graphs per batch"
        raise ValueError(msg)

    params = initial or init_params(cfg.encoder, dataset.feature_dim, cfg.seed)
    state = AdamState.zeros_like(params.arrays)
    history: list[float] = []
    start = time.perf_counter()

    logger.info(
        f"Pre-training on {dataset.name}: {len(dataset)} graphs, loss {cfg.loss.value}, "
        f"batch {cfg.batch_size}, epochs {cfg.epochs}, pool {cfg.pool}, seed {cfg.seed}"
    )

    for epoch in range(cfg.epochs):
        batches = epoch_batches(len(dataset), cfg.batch_size, cfg.seed, epoch)
        batch_losses = []
        for b, (batch_a, batch_b) in enumerate(_view_stream(dataset, cfg, epoch, batches)):
            tape = Tape()
            weights = params.watch(tape)
            za = project(weights, encode(weights, batch_a))
            zb = project(weights, encode(weights, batch_b))
            loss, components = compute_loss(cfg.loss, za, zb, cfg.loss_params)

            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDivergedError(epoch, b, components)

            grads = backward(tape, loss)
            arrays, state = adam_step(params.arrays, grads, state, cfg.learning_rate, cfg.betas, cfg.adam_eps)
            params = params.with_arrays(arrays)
            batch_losses.append(value)
            logger.debug(f"epoch {epoch} batch {b}: {components}", extra={"epoch": epoch, "batch": b})

        mean_loss = float(np.mean(batch_losses))
        history.append(mean_loss)
        log_epoch(logger, epoch, cfg.epochs, mean_loss)

    wall_time = time.perf_counter() - start
    logger.info(f"Pre-training finished in {wall_time:.1f}s, final loss {history[-1]:.6f}")
    return TrainResult(params=params, loss_history=tuple(history), wall_time=wall_time)


def write_loss_history(path: str, history: Sequence[float]) -> None:
    """CSV with columns epoch,mean_loss."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["epoch", "mean_loss"])
        for epoch, value in enumerate(history):
            writer.writerow([epoch, repr(float(value))])


def read_loss_history(path: str) -> list[float]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != ["epoch", "mean_loss"]:
            msg = f"{path} is not a loss-history CSV (header {reader.fieldnames})"
            raise ValueError(msg)
        return [float(row["mean_loss"]) for row in reader]

#!/usr/bin/env python3
"""
Linear evaluation: frozen-encoder embeddings scored by a multinomial
logistic-regression probe under repeated stratified k-fold cross-validation.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.metrics import accuracy_score
from sklearn.model_selection import StratifiedKFold

from . import tensor as T
from .augment import derive_rng
from .encoder import ModelParams, encode
from .graph import Dataset, batch_graphs
from .logging_config import log_component_warning
from .tensor import Tape, Tensor
from .trainer import AdamState, adam_step

logger = logging.getLogger(__name__)

STREAM_FOLDS = 3


class ProbeError(ValueError):
    """The probe cannot be trained on the given labels."""


@dataclass(frozen=True)
class ProbeConfig:
    folds: int = 10
    repeats: int = 5
    epochs: int = 200
    learning_rate: float = 0.01
    l2_penalty: float = 1e-3
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.folds < 2:
            msg = f"folds must be >= 2, got {self.folds}"
            raise ValueError(msg)
        if self.repeats < 1:
            msg = f"repeats must be >= 1, got {self.repeats}"
            raise ValueError(msg)


@dataclass(frozen=True)
class EvalReport:
    accuracy_mean: float
    accuracy_std: float
    repeat_accuracies: tuple[float, ...]

    @classmethod
    def from_repeats(cls, accuracies) -> EvalReport:
        values = np.asarray(accuracies, dtype=np.float64)
        return cls(float(values.mean()), float(values.std()), tuple(float(v) for v in values))


def embed_all(params: ModelParams, dataset: Dataset, batch_size: int = 256) -> np.ndarray:
    """Pre-projection embeddings for every graph, in dataset order, without augmentation."""
    rows = []
    for start in range(0, len(dataset), batch_size):
        batch = batch_graphs(dataset.graphs[start : start + batch_size])
        rows.append(encode(params, batch).values)
    if not rows:
        return np.zeros((0, params.config.hidden_dim))
    return np.concatenate(rows)


def _fit_probe(x: np.ndarray, y: np.ndarray, num_classes: int, cfg: ProbeConfig) -> dict[str, np.ndarray]:
    """Full-batch softmax regression with an l2 penalty on the weights."""
    onehot = np.eye(num_classes)[y]
    arrays = {"w": np.zeros((x.shape[1], num_classes)), "b": np.zeros((1, num_classes))}
    state = AdamState.zeros_like(arrays)
    features = Tensor(x)
    n = x.shape[0]
    for _ in range(cfg.epochs):
        tape = Tape()
        w, b = tape.watch(arrays["w"], "w"), tape.watch(arrays["b"], "b")
        log_probs = T.log_softmax_rows(T.add(T.matmul(features, w), b))
        data_loss = T.scale(T.sum(T.multiply(log_probs, onehot)), -1.0 / n)
        loss = T.add(data_loss, T.scale(T.sum(T.power(w, 2)), cfg.l2_penalty))
        grads = T.backward(tape, loss)
        arrays, state = adam_step(arrays, grads, state, cfg.learning_rate)
    return arrays


def _fold_accuracy(
    embeddings: np.ndarray, labels: np.ndarray, train: np.ndarray, test: np.ndarray, num_classes: int, cfg: ProbeConfig
) -> float:
    x_train, x_test = embeddings[train], embeddings[test]
    if len(np.unique(labels[train])) < len(np.unique(labels)):
        msg = "a class is absent from a training fold"
        raise ProbeError(msg)
    mean = x_train.mean(axis=0)
    std = x_train.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    weights = _fit_probe((x_train - mean) / std, labels[train], num_classes, cfg)
    logits = ((x_test - mean) / std) @ weights["w"] + weights["b"]
    return float(accuracy_score(labels[test], logits.argmax(axis=1)))


def _effective_folds(labels: np.ndarray, folds: int) -> int:
    _, counts = np.unique(labels, return_counts=True)
    smallest = int(counts.min())
    if smallest < 2:
        msg = "every class needs at least 2 graphs for stratified cross-validation"
        raise ProbeError(msg)
    if smallest < folds:
        log_component_warning(
            logger, "probe", f"smallest class has {smallest} graphs; using {smallest} folds instead of {folds}"
        )
        return smallest
    return folds


def stratified_folds(labels: np.ndarray, folds: int, seed: int, repeat: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Train/test index pairs for one repeat, seeded by (seed, repeat)."""
    random_state = int(derive_rng(seed, STREAM_FOLDS, repeat).integers(2**31 - 1))
    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=random_state)
    return list(splitter.split(np.zeros(len(labels)), labels))


def linear_probe(embeddings: np.ndarray, labels: np.ndarray, cfg: ProbeConfig) -> EvalReport:
    """
    Repeated stratified k-fold accuracy of a linear softmax probe.

    Each repeat's accuracy is the mean over its folds; the report holds the
    mean and population std over repeats.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if embeddings.shape[0] != labels.shape[0]:
        msg = f"{embeddings.shape[0]} embeddings for {labels.shape[0]} labels"
        raise ProbeError(msg)
    classes = np.unique(labels)
    if len(classes) < 2:
        msg = "linear evaluation needs at least 2 classes"
        raise ProbeError(msg)

    # Dense class ids for the probe output layer
    dense = np.searchsorted(classes, labels)
    folds = _effective_folds(dense, cfg.folds)

    jobs = [
        (repeat, train, test)
        for repeat in range(cfg.repeats)
        for train, test in stratified_folds(dense, folds, cfg.seed, repeat)
    ]

    def run(job):
        _, train, test = job
        return _fold_accuracy(embeddings, dense, train, test, len(classes), cfg)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers, thread_name_prefix="probe") as executor:
            accuracies = list(executor.map(run, jobs))
    else:
        accuracies = [run(job) for job in jobs]

    per_repeat = [
        float(np.mean([acc for (repeat, _, _), acc in zip(jobs, accuracies, strict=True) if repeat == r]))
        for r in range(cfg.repeats)
    ]
    report = EvalReport.from_repeats(per_repeat)
    logger.debug(f"Probe repeats: {report.repeat_accuracies}")
    return report

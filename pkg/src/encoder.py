#!/usr/bin/env python3
"""
GIN-style graph encoder and two-layer projection head.

Each GIN layer computes h <- relu(MLP(h + sum of neighbor h)) with a two-layer
relu MLP; graph embeddings are the mean of the final node states. The linear
probe consumes these embeddings, the SSL loss consumes their projections.
"""

from __future__ import annotations

import logging
import os
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .graph import GraphBatch
from .tensor import ShapeError, Tape, Tensor

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = "GRAPHSSL-CKPT-1"


class CheckpointError(ValueError):
    """Unreadable or incompatible checkpoint file."""


@dataclass(frozen=True)
class EncoderConfig:
    num_layers: int = 3
    hidden_dim: int = 32
    projector_dim: int = 160
    pooling: str = "mean"

    def __post_init__(self):
        if self.num_layers < 1:
            msg = f"num_layers must be >= 1, got {self.num_layers}"
            raise ValueError(msg)
        if self.hidden_dim < 1 or self.projector_dim < 1:
            msg = f"dimensions must be >= 1, got hidden {self.hidden_dim}, projector {self.projector_dim}"
            raise ValueError(msg)
        if self.pooling != "mean":
            msg = f"only mean pooling is supported, got {self.pooling!r}"
            raise ValueError(msg)


def parameter_shapes(cfg: EncoderConfig, feature_dim: int) -> dict[str, tuple[int, int]]:
    """Ordered parameter names and shapes; biases are (1, width) row vectors."""
    shapes: dict[str, tuple[int, int]] = {}
    width_in = feature_dim
    for layer in range(cfg.num_layers):
        shapes[f"gin{layer}.w1"] = (width_in, cfg.hidden_dim)
        shapes[f"gin{layer}.b1"] = (1, cfg.hidden_dim)
        shapes[f"gin{layer}.w2"] = (cfg.hidden_dim, cfg.hidden_dim)
        shapes[f"gin{layer}.b2"] = (1, cfg.hidden_dim)
        width_in = cfg.hidden_dim
    shapes["proj.w1"] = (cfg.hidden_dim, cfg.projector_dim)
    shapes["proj.b1"] = (1, cfg.projector_dim)
    shapes["proj.w2"] = (cfg.projector_dim, cfg.projector_dim)
    shapes["proj.b2"] = (1, cfg.projector_dim)
    return shapes


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Encoder and projector weights; arrays are read-only, updates build a new instance."""

    config: EncoderConfig
    feature_dim: int
    seed: int
    arrays: Mapping[str, np.ndarray] = field(repr=False)

    def __post_init__(self):
        expected = parameter_shapes(self.config, self.feature_dim)
        frozen = {}
        for name, shape in expected.items():
            if name not in self.arrays:
                msg = f"missing parameter {name}"
                raise ShapeError(msg)
            array = np.array(self.arrays[name], dtype=np.float64, copy=True)
            if array.shape != shape:
                msg = f"parameter {name} has shape {array.shape}, expected {shape}"
                raise ShapeError(msg)
            array.setflags(write=False)
            frozen[name] = array
        object.__setattr__(self, "arrays", frozen)

    def with_arrays(self, arrays: Mapping[str, np.ndarray]) -> ModelParams:
        return ModelParams(self.config, self.feature_dim, self.seed, arrays)

    def watch(self, tape: Tape) -> dict[str, Tensor]:
        """Register every parameter on `tape` for differentiation."""
        return {name: tape.watch(array, name) for name, array in self.arrays.items()}

    def constants(self) -> dict[str, Tensor]:
        return {name: Tensor(array) for name, array in self.arrays.items()}

    def equals(self, other: ModelParams) -> bool:
        return (
            self.config == other.config
            and self.feature_dim == other.feature_dim
            and self.arrays.keys() == other.arrays.keys()
            and all(np.array_equal(self.arrays[k], other.arrays[k]) for k in self.arrays)
        )


Weights = ModelParams | Mapping[str, Tensor]


def _tensors(params: Weights) -> Mapping[str, Tensor]:
    return params.constants() if isinstance(params, ModelParams) else params


def init_params(cfg: EncoderConfig, feature_dim: int, seed: int) -> ModelParams:
    """Glorot-uniform weights in [-a, a], a = sqrt(6 / (fan_in + fan_out)); zero biases."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))
    arrays = {}
    for name, (fan_in, fan_out) in parameter_shapes(cfg, feature_dim).items():
        if name.split(".")[-1].startswith("b"):
            arrays[name] = np.zeros((fan_in, fan_out))
        else:
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            arrays[name] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
    return ModelParams(cfg, feature_dim, int(seed), arrays)


def _layer_count(weights: Mapping[str, Tensor]) -> int:
    return sum(1 for name in weights if name.endswith(".w1") and name.startswith("gin"))


def encode(params: Weights, batch: GraphBatch) -> Tensor:
    """Graph-level embeddings, shape (batch_size, hidden_dim)."""
    weights = _tensors(params)
    expected_dim = weights["gin0.w1"].shape[0]
    if batch.feature_dim != expected_dim:
        msg = f"batch feature_dim {batch.feature_dim} does not match encoder input {expected_dim}"
        raise ShapeError(msg)

    h = Tensor(batch.node_features)
    for layer in range(_layer_count(weights)):
        x = T.add(h, T.aggregate_neighbors(h, batch.directed_edges))
        x = T.relu(T.add(T.matmul(x, weights[f"gin{layer}.w1"]), weights[f"gin{layer}.b1"]))
        x = T.add(T.matmul(x, weights[f"gin{layer}.w2"]), weights[f"gin{layer}.b2"])
        h = T.relu(x)
    return T.segment_mean(h, batch.node_to_graph, batch.batch_size)


def project(params: Weights, embeddings: Tensor) -> Tensor:
    """linear -> relu -> linear, shape (batch_size, projector_dim)."""
    weights = _tensors(params)
    embeddings = T.as_tensor(embeddings)
    if embeddings.shape[1] != weights["proj.w1"].shape[0]:
        msg = f"embedding dim {embeddings.shape[1]} does not match projector input {weights['proj.w1'].shape[0]}"
        raise ShapeError(msg)
    hidden = T.relu(T.add(T.matmul(embeddings, weights["proj.w1"]), weights["proj.b1"]))
    return T.add(T.matmul(hidden, weights["proj.w2"]), weights["proj.b2"])


def save_checkpoint(path: str, params: ModelParams, metadata: Mapping[str, str] | None = None) -> None:
    """
    Write a textual checkpoint.

    Layout: magic line, `meta key value` lines, then per tensor a
    `tensor name rows cols` header followed by one line per row.
    """
    meta = {
        "num_layers": str(params.config.num_layers),
        "hidden_dim": str(params.config.hidden_dim),
        "projector_dim": str(params.config.projector_dim),
        "pooling": params.config.pooling,
        "feature_dim": str(params.feature_dim),
        "seed": str(params.seed),
    }
    for key, value in (metadata or {}).items():
        text = str(value)
        if any(c.isspace() for c in key) or "\n" in text:
            msg = f"metadata entry {key!r} cannot be stored"
            raise CheckpointError(msg)
        meta.setdefault(key, text)

    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"{CHECKPOINT_MAGIC}\n")
        for key, value in meta.items():
            handle.write(f"meta {key} {value}\n")
        for name, array in params.arrays.items():
            rows, cols = array.shape
            handle.write(f"tensor {name} {rows} {cols}\n")
            for row in array:
                handle.write(" ".join(repr(float(v)) for v in row) + "\n")
    logger.debug(f"Checkpoint written: {path} ({len(params.arrays)} tensors)")


def load_checkpoint(path: str) -> tuple[ModelParams, dict[str, str]]:
    """Read a checkpoint written by `save_checkpoint`; returns params and all metadata."""
    try:
        with open(path, encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except FileNotFoundError:
        msg = f"checkpoint not found: {path}"
        raise CheckpointError(msg) from None

    if not lines or lines[0].strip() != CHECKPOINT_MAGIC:
        msg = f"{path} is not a {CHECKPOINT_MAGIC} checkpoint"
        raise CheckpointError(msg)

    meta: dict[str, str] = {}
    arrays: dict[str, np.ndarray] = {}
    index = 1
    try:
        while index < len(lines):
            parts = lines[index].split(" ", 2)
            if parts[0] == "meta":
                meta[parts[1]] = parts[2] if len(parts) > 2 else ""
                index += 1
            elif parts[0] == "tensor":
                name, rows, cols = lines[index].split()[1:4]
                rows, cols = int(rows), int(cols)
                body = lines[index + 1 : index + 1 + rows]
                array = np.array([[float(v) for v in row.split()] for row in body], dtype=np.float64)
                arrays[name] = array.reshape(rows, cols)
                index += 1 + rows
            elif not lines[index].strip():
                index += 1
            else:
                msg = f"unexpected line {index + 1}: {lines[index][:40]!r}"
                raise CheckpointError(msg)

        config = EncoderConfig(
            num_layers=int(meta["num_layers"]),
            hidden_dim=int(meta["hidden_dim"]),
            projector_dim=int(meta["projector_dim"]),
            pooling=meta.get("pooling", "mean"),
        )
        params = ModelParams(config, int(meta["feature_dim"]), int(meta["seed"]), arrays)
    except (KeyError, ValueError, IndexError) as e:
        if isinstance(e, CheckpointError):
            raise
        msg = f"malformed checkpoint {path}: {e}"
        raise CheckpointError(msg) from e
    return params, meta

#!/usr/bin/env python3
"""
Immutable graph, batch and dataset model shared by every other module.

Undirected edges are stored once per Graph as (u, v) pairs and expanded to both
directions only when graphs are batched for message passing.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


class GraphValidationError(ValueError):
    """Invalid argument for a graph-core operation."""


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _as_edge_array(edges: Iterable[Sequence[int]] | np.ndarray) -> np.ndarray:
    array = np.asarray(edges, dtype=np.int64)
    if array.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if array.ndim != 2 or array.shape[1] != 2:
        msg = f"edges must be a list of pairs, got array of shape {array.shape}"
        raise GraphValidationError(msg)
    return array.copy()


def canonical_edges(edges: np.ndarray) -> np.ndarray:
    """Sorted (min, max) form of an undirected edge array."""
    if len(edges) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    pairs = np.sort(edges, axis=1)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order]


@dataclass(frozen=True, eq=False)
class Graph:
    """Attributed undirected graph with a graph-level class label."""

    num_nodes: int
    edges: np.ndarray
    node_features: np.ndarray
    graph_label: int

    def __post_init__(self):
        object.__setattr__(self, "edges", _frozen(_as_edge_array(self.edges)))
        features = np.array(self.node_features, dtype=np.float64, copy=True)
        if features.ndim == 1:
            features = features.reshape(-1, 1)
        object.__setattr__(self, "node_features", _frozen(features))
        object.__setattr__(self, "num_nodes", int(self.num_nodes))
        object.__setattr__(self, "graph_label", int(self.graph_label))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def feature_dim(self) -> int:
        return self.node_features.shape[1]

    def with_edges(self, edges: np.ndarray) -> Graph:
        return Graph(self.num_nodes, edges, self.node_features, self.graph_label)

    def with_features(self, node_features: np.ndarray) -> Graph:
        return Graph(self.num_nodes, self.edges, node_features, self.graph_label)

    def adjacency(self) -> list[list[int]]:
        """Sorted neighbor lists."""
        neighbors: list[set[int]] = [set() for _ in range(self.num_nodes)]
        for u, v in self.edges:
            neighbors[u].add(int(v))
            neighbors[v].add(int(u))
        return [sorted(n) for n in neighbors]

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and self.graph_label == other.graph_label
            and np.array_equal(self.node_features, other.node_features)
            and np.array_equal(canonical_edges(self.edges), canonical_edges(other.edges))
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class GraphBatch:
    """Disjoint union of graphs with node-to-graph membership for pooling."""

    node_features: np.ndarray
    directed_edges: np.ndarray
    node_to_graph: np.ndarray
    batch_size: int
    node_offsets: np.ndarray
    graph_labels: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.node_features.shape[1]


@dataclass(frozen=True)
class Dataset:
    """A labeled graph corpus with a uniform node feature dimension."""

    graphs: tuple[Graph, ...]
    num_classes: int
    feature_dim: int
    name: str
    # Width of the node-label one-hot block at the start of each feature row (0 when absent)
    node_label_dim: int = 0
    # "labels", "attributes", "labels+attributes" or "degree"
    feature_source: str = "labels"

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        for index, g in enumerate(self.graphs):
            if g.feature_dim != self.feature_dim:
                msg = f"graph {index} has feature_dim {g.feature_dim}, dataset declares {self.feature_dim}"
                raise GraphValidationError(msg)
            if not 0 <= g.graph_label < self.num_classes:
                msg = f"graph {index} label {g.graph_label} outside [0, {self.num_classes})"
                raise GraphValidationError(msg)

    def __len__(self) -> int:
        return len(self.graphs)

    @property
    def labels(self) -> np.ndarray:
        return np.array([g.graph_label for g in self.graphs], dtype=np.int64)


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of `validate`: ok, or the first violation and where it occurred."""

    ok: bool
    violation: str | None = None
    location: str | None = None

    def __bool__(self) -> bool:
        return self.ok


def validate(g: Graph) -> ValidationReport:
    """Check every Graph invariant; report the first violation found."""
    if g.node_features.shape[0] != g.num_nodes:
        return ValidationReport(
            ok=False,
            violation="feature-row-count",
            location=f"node_features has {g.node_features.shape[0]} rows, num_nodes is {g.num_nodes}",
        )

    seen: set[tuple[int, int]] = set()
    for index, (u, v) in enumerate(g.edges):
        u, v = int(u), int(v)
        if not (0 <= u < g.num_nodes and 0 <= v < g.num_nodes):
            return ValidationReport(
                ok=False, violation="endpoint-out-of-range", location=f"edge {index} ({u}, {v})"
            )
        if u == v:
            return ValidationReport(ok=False, violation="self-loop", location=f"edge {index} ({u}, {v})")
        key = (min(u, v), max(u, v))
        if key in seen:
            return ValidationReport(ok=False, violation="duplicate-edge", location=f"edge {index} ({u}, {v})")
        seen.add(key)

    return ValidationReport(ok=True)


def induced_subgraph(g: Graph, keep: Iterable[int]) -> Graph:
    """
    Subgraph on `keep`, relabeled densely in ascending original order.

    Raises:
        GraphValidationError: keep is empty or names a node outside the graph
    """
    kept = np.array(sorted({int(k) for k in keep}), dtype=np.int64)
    if kept.size == 0:
        msg = "induced_subgraph needs a nonempty keep set"
        raise GraphValidationError(msg)
    if kept[0] < 0 or kept[-1] >= g.num_nodes:
        msg = f"keep set has indices outside [0, {g.num_nodes})"
        raise GraphValidationError(msg)

    relabel = np.full(g.num_nodes, -1, dtype=np.int64)
    relabel[kept] = np.arange(kept.size)

    if g.num_edges:
        mapped = relabel[g.edges]
        survivors = mapped[(mapped[:, 0] >= 0) & (mapped[:, 1] >= 0)]
    else:
        survivors = np.zeros((0, 2), dtype=np.int64)

    return Graph(int(kept.size), survivors, g.node_features[kept], g.graph_label)


def batch_graphs(graphs: Sequence[Graph]) -> GraphBatch:
    """
    Disjoint union of `graphs`.

    Node indices are offset by cumulative node counts and every undirected edge
    is emitted in both directions.
    """
    if not graphs:
        msg = "batch_graphs needs at least one graph"
        raise GraphValidationError(msg)
    feature_dim = graphs[0].feature_dim
    for index, g in enumerate(graphs):
        if g.feature_dim != feature_dim:
            msg = f"graph {index} has feature_dim {g.feature_dim}, expected {feature_dim}"
            raise GraphValidationError(msg)

    counts = np.array([g.num_nodes for g in graphs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)

    directed = []
    for offset, g in zip(offsets, graphs, strict=True):
        if g.num_edges:
            shifted = g.edges + offset
            directed.append(shifted)
            directed.append(shifted[:, ::-1])
    directed_edges = np.concatenate(directed) if directed else np.zeros((0, 2), dtype=np.int64)

    return GraphBatch(
        node_features=_frozen(np.concatenate([g.node_features for g in graphs])),
        directed_edges=_frozen(np.ascontiguousarray(directed_edges, dtype=np.int64)),
        node_to_graph=_frozen(np.repeat(np.arange(len(graphs), dtype=np.int64), counts)),
        batch_size=len(graphs),
        node_offsets=_frozen(offsets),
        graph_labels=_frozen(np.array([g.graph_label for g in graphs], dtype=np.int64)),
    )


def unbatch(batch: GraphBatch) -> list[Graph]:
    """Slice a batch back into its member graphs (inverse of batch_graphs)."""
    ends = np.append(batch.node_offsets[1:], batch.num_nodes)
    graphs = []
    src = batch.directed_edges[:, 0] if len(batch.directed_edges) else np.zeros(0, dtype=np.int64)
    dst = batch.directed_edges[:, 1] if len(batch.directed_edges) else np.zeros(0, dtype=np.int64)
    # First half of each graph's directed block is the original orientation
    forward = _forward_half_mask(batch)
    for index, (start, end) in enumerate(zip(batch.node_offsets, ends, strict=True)):
        inside = forward & (src >= start) & (src < end)
        edges = np.stack([src[inside], dst[inside]], axis=1) - start
        graphs.append(
            Graph(int(end - start), edges, batch.node_features[start:end], int(batch.graph_labels[index]))
        )
    return graphs


def _forward_half_mask(batch: GraphBatch) -> np.ndarray:
    mask = np.zeros(len(batch.directed_edges), dtype=bool)
    node_to_graph = batch.node_to_graph
    position = 0
    total = len(batch.directed_edges)
    while position < total:
        graph_id = node_to_graph[batch.directed_edges[position, 0]]
        end = position
        while end < total and node_to_graph[batch.directed_edges[end, 0]] == graph_id:
            end += 1
        half = (end - position) // 2
        mask[position : position + half] = True
        position = end
    return mask

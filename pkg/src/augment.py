#!/usr/bin/env python3
"""
Graph augmentations for the two-view framework: node dropping, random-walk
subgraphs, edge perturbation and attribute masking, plus view-pair sampling.

Every augmentation is a deterministic function of (graph, spec, generator state).
The ratio is the strength of removal for all four kinds.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        def __str__(self) -> str:
            return str(self.value)

import numpy as np

from .graph import Graph, induced_subgraph

logger = logging.getLogger(__name__)

# Tolerance for floor(ratio * n) so that e.g. 0.3 * 10 counts as 3
_COUNT_TOLERANCE = 1e-9


class AugmentKind(StrEnum):
    NODE_DROP = "nodedrop"
    SUBGRAPH = "subgraph"
    EDGE_PERTURB = "edgeperturb"
    ATTR_MASK = "attrmask"
    IDENTITY = "identity"

    @classmethod
    def parse(cls, text: str) -> AugmentKind:
        key = text.strip().lower().replace("_", "").replace("-", "")
        aliases = {"nd": cls.NODE_DROP, "sg": cls.SUBGRAPH, "ep": cls.EDGE_PERTURB, "am": cls.ATTR_MASK, "none": cls.IDENTITY}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            msg = f"unknown augmentation {text!r} (choose from {choices})"
            raise ValueError(msg) from None


@dataclass(frozen=True)
class AugmentSpec:
    kind: AugmentKind
    ratio: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", AugmentKind(self.kind))
        _check_ratio(self.ratio)

    def __str__(self):
        return self.kind.value if self.kind is AugmentKind.IDENTITY else f"{self.kind.value}:{self.ratio:g}"


@dataclass(frozen=True)
class AugmentPool:
    specs: tuple[AugmentSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple(self.specs))
        if not self.specs:
            msg = "augmentation pool must not be empty"
            raise ValueError(msg)

    @classmethod
    def from_kinds(cls, kinds: Sequence[str | AugmentKind], ratio: float) -> AugmentPool:
        """Pool of the distinct kinds, all at the same ratio, in first-seen order."""
        specs: list[AugmentSpec] = []
        for kind in kinds:
            spec = AugmentSpec(AugmentKind.parse(kind) if isinstance(kind, str) else kind, ratio)
            if spec not in specs:
                specs.append(spec)
        return cls(tuple(specs))

    def __str__(self):
        return "{" + ", ".join(str(s) for s in self.specs) + "}"


def _check_ratio(ratio: float) -> None:
    if not 0.0 <= ratio < 1.0:
        msg = f"augmentation ratio must be in [0, 1), got {ratio}"
        raise ValueError(msg)


def scaled_count(ratio: float, total: int) -> int:
    """floor(ratio * total)."""
    return math.floor(ratio * total + _COUNT_TOLERANCE)


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for (seed, keys...); the same keys always give the same stream."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *(int(k) for k in keys)]))


def node_drop(g: Graph, ratio: float, rng: np.random.Generator) -> Graph:
    """Drop floor(ratio * n) uniformly chosen nodes; at least one node survives."""
    _check_ratio(ratio)
    n = g.num_nodes
    drop = min(scaled_count(ratio, n), max(n - 1, 0))
    if drop == 0:
        return g
    dropped = rng.choice(n, size=drop, replace=False)
    keep = np.setdiff1d(np.arange(n), dropped)
    return induced_subgraph(g, keep)


def subgraph_walk(g: Graph, ratio: float, rng: np.random.Generator) -> Graph:
    """
    Keep ceil((1 - ratio) * n) nodes collected by a random walk.

    The walk moves to an unvisited neighbor of the current node; when there is
    none it jumps to an unvisited node adjacent to the visited set, and when that
    frontier is empty too it restarts from a uniformly chosen unvisited node.
    """
    _check_ratio(ratio)
    n = g.num_nodes
    target = max(1, n - scaled_count(ratio, n))
    if target >= n:
        return g

    adjacency = g.adjacency()
    current = int(rng.integers(n))
    visited = [current]
    seen = {current}
    restarts = 0

    while len(visited) < target:
        candidates = [v for v in adjacency[current] if v not in seen]
        if not candidates:
            candidates = sorted({v for u in visited for v in adjacency[u] if v not in seen})
        if not candidates:
            candidates = [v for v in range(n) if v not in seen]
            restarts += 1
        current = candidates[int(rng.integers(len(candidates)))]
        visited.append(current)
        seen.add(current)

    if restarts:
        logger.debug(f"subgraph walk restarted {restarts} time(s) on a disconnected graph")
    return induced_subgraph(g, visited)


def edge_perturb(g: Graph, ratio: float, rng: np.random.Generator) -> Graph:
    """
    Remove m = floor(ratio * |E|) edges and add m new ones among node pairs
    that were not adjacent; additions stop when no such pair is left.
    """
    _check_ratio(ratio)
    m = scaled_count(ratio, g.num_edges)
    if m == 0:
        return g

    n = g.num_nodes
    removed = rng.choice(g.num_edges, size=m, replace=False)
    kept_edges = np.delete(g.edges, removed, axis=0)

    existing = {(min(int(u), int(v)), max(int(u), int(v))) for u, v in g.edges}
    complement_size = n * (n - 1) // 2 - len(existing)
    additions = _sample_non_edges(n, existing, min(m, complement_size), complement_size, rng)
    if len(additions) < m:
        logger.debug(f"edge perturbation added {len(additions)} of {m} edges (complement exhausted)")

    new_edges = np.array(additions, dtype=np.int64).reshape(-1, 2)
    return g.with_edges(np.concatenate([kept_edges, new_edges]))


def _sample_non_edges(
    n: int, existing: set[tuple[int, int]], count: int, complement_size: int, rng: np.random.Generator
) -> list[tuple[int, int]]:
    if count <= 0:
        return []
    # Rejection sampling while the complement is dense, enumeration otherwise
    if complement_size >= 2 * count and complement_size * 4 >= n * (n - 1) // 2:
        chosen: list[tuple[int, int]] = []
        taken: set[tuple[int, int]] = set()
        while len(chosen) < count:
            u, v = (int(x) for x in rng.choice(n, size=2, replace=False))
            pair = (min(u, v), max(u, v))
            if pair in existing or pair in taken:
                continue
            taken.add(pair)
            chosen.append(pair)
        return chosen

    complement = [(u, v) for u in range(n) for v in range(u + 1, n) if (u, v) not in existing]
    picks = rng.choice(len(complement), size=count, replace=False)
    return [complement[int(i)] for i in picks]


def attr_mask(g: Graph, ratio: float, rng: np.random.Generator) -> Graph:
    """Replace the feature rows of floor(ratio * n) uniformly chosen nodes with zeros."""
    _check_ratio(ratio)
    count = scaled_count(ratio, g.num_nodes)
    if count == 0:
        return g
    masked = rng.choice(g.num_nodes, size=count, replace=False)
    features = np.array(g.node_features, copy=True)
    features[masked] = 0.0
    return g.with_features(features)


_AUGMENTATIONS = {
    AugmentKind.NODE_DROP: node_drop,
    AugmentKind.SUBGRAPH: subgraph_walk,
    AugmentKind.EDGE_PERTURB: edge_perturb,
    AugmentKind.ATTR_MASK: attr_mask,
}


def apply_augmentation(g: Graph, spec: AugmentSpec, rng: np.random.Generator) -> Graph:
    if spec.kind is AugmentKind.IDENTITY:
        return g
    return _AUGMENTATIONS[spec.kind](g, spec.ratio, rng)


def sample_view_pair(g: Graph, pool: AugmentPool, rng: np.random.Generator) -> tuple[Graph, Graph]:
    """
    Two augmented views of `g`.

    Both specs are drawn independently and uniformly from the pool (they may
    coincide), then each is applied with its own child stream.
    """
    picks = rng.integers(len(pool.specs), size=2)
    view_a_rng, view_b_rng = rng.spawn(2)
    view_a = apply_augmentation(g, pool.specs[int(picks[0])], view_a_rng)
    view_b = apply_augmentation(g, pool.specs[int(picks[1])], view_b_rng)
    return view_a, view_b

#!/usr/bin/env python3
"""
Tests for augment.py module.
"""

import math
import os
import sys
import unittest

import numpy as np

# Add src directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from src.augment import (
    AugmentKind,
    AugmentPool,
    AugmentSpec,
    apply_augmentation,
    attr_mask,
    derive_rng,
    edge_perturb,
    node_drop,
    sample_view_pair,
    scaled_count,
    subgraph_walk,
)
from src.graph import Graph, validate


def random_graph(rng, max_nodes=15, feature_dim=3):
    n = int(rng.integers(1, max_nodes + 1))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.3]
    return Graph(n, pairs, rng.normal(size=(n, feature_dim)) + 5.0, int(rng.integers(3)))


def path(n):
    return Graph(n, [(i, i + 1) for i in range(n - 1)], np.ones((n, 2)), 1)


def complete(n):
    return Graph(n, [(u, v) for u in range(n) for v in range(u + 1, n)], np.ones((n, 1)), 0)


def is_connected(g):
    adjacency = g.adjacency()
    seen = {0}
    stack = [0]
    while stack:
        for v in adjacency[stack.pop()]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == g.num_nodes


class TestSpecs(unittest.TestCase):
    """Test cases for AugmentSpec, AugmentPool and AugmentKind parsing."""

    def test_parse_aliases(self):
        assert AugmentKind.parse("ND") is AugmentKind.NODE_DROP
        assert AugmentKind.parse("sub-graph") is AugmentKind.SUBGRAPH
        assert AugmentKind.parse("attr_mask") is AugmentKind.ATTR_MASK
        assert AugmentKind.parse("none") is AugmentKind.IDENTITY

    def test_parse_unknown(self):
        with self.assertRaises(ValueError):
            AugmentKind.parse("shuffle")

    def test_ratio_must_be_below_one(self):
        with self.assertRaises(ValueError):
            AugmentSpec(AugmentKind.NODE_DROP, 1.0)
        with self.assertRaises(ValueError):
            AugmentSpec(AugmentKind.NODE_DROP, -0.1)

    def test_empty_pool_rejected(self):
        with self.assertRaises(ValueError):
            AugmentPool(())

    def test_from_kinds_deduplicates(self):
        pool = AugmentPool.from_kinds(["nodedrop", "nd"], 0.2)
        assert len(pool.specs) == 1
        assert str(pool) == "{nodedrop:0.2}"


class TestNodeDrop(unittest.TestCase):
    """Test cases for node_drop."""

    def test_ten_nodes_ratio_point_two(self):
        assert node_drop(path(10), 0.2, derive_rng(0)).num_nodes == 8

    def test_ratio_zero_is_identity(self):
        g = path(6)
        assert node_drop(g, 0.0, derive_rng(0)) == g

    def test_one_node_survives(self):
        assert node_drop(path(2), 0.9, derive_rng(1)).num_nodes == 1
        assert node_drop(Graph(1, [], np.ones((1, 1)), 0), 0.9, derive_rng(1)).num_nodes == 1


class TestSubgraphWalk(unittest.TestCase):
    """Test cases for subgraph_walk."""

    def test_ratio_zero_keeps_all(self):
        g = path(5)
        assert subgraph_walk(g, 0.0, derive_rng(0)).num_nodes == 5

    def test_path_half(self):
        for seed in range(20):
            view = subgraph_walk(path(4), 0.5, derive_rng(seed))
            assert view.num_nodes == 2
            assert view.num_edges == 1

    def test_connected_input_gives_connected_output(self):
        rng = np.random.default_rng(5)
        g = Graph(
            12,
            [(i, i + 1) for i in range(11)] + [(0, 6), (3, 9), (2, 11)],
            rng.normal(size=(12, 2)),
            0,
        )
        for seed in range(30):
            view = subgraph_walk(g, 0.4, derive_rng(seed))
            assert view.num_nodes == math.ceil(0.6 * 12)
            assert is_connected(view)

    def test_disconnected_input_restarts(self):
        g = Graph(4, [(0, 1)], np.ones((4, 1)), 0)
        view = subgraph_walk(g, 0.25, derive_rng(2))
        assert view.num_nodes == 3


class TestEdgePerturb(unittest.TestCase):
    """Test cases for edge_perturb."""

    def test_ratio_zero_unchanged(self):
        g = path(5)
        assert edge_perturb(g, 0.0, derive_rng(0)) == g

    def test_ten_edges_three_replaced(self):
        g = Graph(11, [(i, i + 1) for i in range(10)], np.ones((11, 1)), 0)
        view = edge_perturb(g, 0.3, derive_rng(4))
        original = {tuple(sorted(e)) for e in g.edges.tolist()}
        perturbed = {tuple(sorted(e)) for e in view.edges.tolist()}
        assert view.num_edges == 10
        assert len(original - perturbed) == 3
        assert validate(view).ok

    def test_complete_graph_skips_additions(self):
        g = complete(5)
        view = edge_perturb(g, 0.3, derive_rng(0))
        assert view.num_edges == g.num_edges - 3

    def test_nearly_complete_graph_adds_only_the_missing_pair(self):
        g = complete(6).with_edges([(u, v) for u in range(6) for v in range(u + 1, 6) if (u, v) != (0, 5)])
        view = edge_perturb(g, 0.5, derive_rng(3))
        assert view.num_edges == 14 - 7 + 1
        assert [0, 5] in view.edges.tolist()
        assert validate(view).ok


class TestAttrMask(unittest.TestCase):
    """Test cases for attr_mask."""

    def test_ratio_zero_unchanged(self):
        g = path(4)
        assert attr_mask(g, 0.0, derive_rng(0)) == g

    def test_five_nodes_two_masked(self):
        rng = np.random.default_rng(1)
        g = Graph(5, [(0, 1)], rng.uniform(1, 2, size=(5, 3)), 0)
        view = attr_mask(g, 0.4, derive_rng(9))
        zero_rows = np.all(view.node_features == 0, axis=1)
        assert zero_rows.sum() == 2
        assert np.isclose(view.node_features.sum(), g.node_features.sum() - g.node_features[zero_rows].sum())
        assert np.array_equal(view.edges, g.edges)


class TestAugmentationProperties(unittest.TestCase):
    """Count formulas, validity and determinism over many random graphs."""

    def test_counts_match_formulas(self):
        rng = np.random.default_rng(2024)
        for index in range(1000):
            g = random_graph(rng)
            n, e = g.num_nodes, g.num_edges
            for ratio in (0.0, 0.1, 0.2, 0.4):
                stream = derive_rng(index, int(ratio * 10))
                dropped = node_drop(g, ratio, stream)
                assert dropped.num_nodes == max(1, n - scaled_count(ratio, n))
                walked = subgraph_walk(g, ratio, stream)
                assert walked.num_nodes == max(1, math.ceil((1 - ratio) * n - 1e-9))
                perturbed = edge_perturb(g, ratio, stream)
                m = scaled_count(ratio, e)
                complement = n * (n - 1) // 2 - e
                assert perturbed.num_edges == e - m + min(m, complement)
                masked = attr_mask(g, ratio, stream)
                assert int(np.all(masked.node_features == 0, axis=1).sum()) == scaled_count(ratio, n)
                for view in (dropped, walked, perturbed, masked):
                    assert validate(view).ok
                    assert view.graph_label == g.graph_label
                    assert view.feature_dim == g.feature_dim
                if ratio == 0.0:
                    assert dropped == g
                    assert walked == g
                    assert perturbed == g
                    assert masked == g

    def test_fixed_seed_is_bit_exact(self):
        rng = np.random.default_rng(8)
        g = random_graph(rng, max_nodes=20)
        for kind in (AugmentKind.NODE_DROP, AugmentKind.SUBGRAPH, AugmentKind.EDGE_PERTURB, AugmentKind.ATTR_MASK):
            spec = AugmentSpec(kind, 0.3)
            first = apply_augmentation(g, spec, derive_rng(42, 1))
            second = apply_augmentation(g, spec, derive_rng(42, 1))
            assert np.array_equal(first.edges, second.edges)
            assert np.array_equal(first.node_features, second.node_features)


class TestSampleViewPair(unittest.TestCase):
    """Test cases for sample_view_pair."""

    def test_identity_pool(self):
        g = path(5)
        view_a, view_b = sample_view_pair(g, AugmentPool((AugmentSpec(AugmentKind.IDENTITY),)), derive_rng(0))
        assert view_a == g
        assert view_b == g

    def test_reproducible(self):
        g = path(12)
        pool = AugmentPool.from_kinds(["nodedrop", "subgraph"], 0.2)
        first = sample_view_pair(g, pool, derive_rng(3, 2, 0, 0, 1))
        second = sample_view_pair(g, pool, derive_rng(3, 2, 0, 0, 1))
        assert first[0] == second[0]
        assert first[1] == second[1]

    def test_attr_mask_views_mask_independently(self):
        g = Graph(4, [(0, 1), (2, 3)], np.arange(1, 9, dtype=float).reshape(4, 2), 0)
        pool = AugmentPool((AugmentSpec(AugmentKind.ATTR_MASK, 0.5),))
        differing = 0
        for seed in range(20):
            view_a, view_b = sample_view_pair(g, pool, derive_rng(seed))
            mask_a = np.all(view_a.node_features == 0, axis=1)
            mask_b = np.all(view_b.node_features == 0, axis=1)
            assert mask_a.sum() == 2
            assert mask_b.sum() == 2
            differing += int(not np.array_equal(mask_a, mask_b))
        assert differing > 0


if __name__ == "__main__":
    unittest.main()

#!/usr/bin/env python3
"""
Tests for evaluation.py module.
"""

import os
import sys
import unittest

import numpy as np

# Add src directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from src.encoder import EncoderConfig, encode, init_params
from src.evaluation import EvalReport, ProbeConfig, ProbeError, embed_all, linear_probe, stratified_folds
from src.graph import Dataset, Graph, batch_graphs

FAST = {"folds": 5, "repeats": 2, "epochs": 100, "learning_rate": 0.1}


def separable(n_per_class=20, seed=0):
    rng = np.random.default_rng(seed)
    x = np.concatenate([rng.normal(-3.0, 0.5, size=(n_per_class, 4)), rng.normal(3.0, 0.5, size=(n_per_class, 4))])
    y = np.array([0] * n_per_class + [1] * n_per_class)
    return x, y


class TestEvalReport(unittest.TestCase):
    """Test cases for EvalReport."""

    def test_population_std(self):
        report = EvalReport.from_repeats([0.8, 0.9])
        assert np.isclose(report.accuracy_mean, 0.85)
        assert np.isclose(report.accuracy_std, 0.05)
        assert report.repeat_accuracies == (0.8, 0.9)

    def test_single_repeat(self):
        assert EvalReport.from_repeats([0.7]).accuracy_std == 0.0


class TestStratifiedFolds(unittest.TestCase):
    """Test cases for stratified_folds."""

    def test_class_balance_and_cover(self):
        labels = np.array([0] * 30 + [1] * 20)
        splits = stratified_folds(labels, 5, seed=0, repeat=0)
        assert len(splits) == 5
        seen = []
        for train, test in splits:
            assert np.bincount(labels[test]).tolist() == [6, 4]
            assert not set(train.tolist()) & set(test.tolist())
            seen.extend(test.tolist())
        assert sorted(seen) == list(range(50))

    def test_seeded_by_repeat(self):
        labels = np.array([0, 1] * 20)
        first = stratified_folds(labels, 4, seed=1, repeat=0)
        again = stratified_folds(labels, 4, seed=1, repeat=0)
        other = stratified_folds(labels, 4, seed=1, repeat=1)
        assert all(np.array_equal(a[1], b[1]) for a, b in zip(first, again, strict=True))
        assert not all(np.array_equal(a[1], b[1]) for a, b in zip(first, other, strict=True))


class TestLinearProbe(unittest.TestCase):
    """Test cases for linear_probe."""

    def test_separable_embeddings(self):
        x, y = separable()
        report = linear_probe(x, y, ProbeConfig(**FAST))
        assert report.accuracy_mean == 1.0
        assert report.accuracy_std == 0.0
        assert len(report.repeat_accuracies) == 2

    def test_shuffled_labels_near_chance(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(200, 4))
        y = rng.permutation(np.array([0, 1] * 100))
        report = linear_probe(x, y, ProbeConfig(folds=5, repeats=3, epochs=50, learning_rate=0.05))
        assert abs(report.accuracy_mean - 0.5) <= 0.1

    def test_single_repeat_has_zero_std(self):
        x, y = separable()
        assert linear_probe(x, y, ProbeConfig(**{**FAST, "repeats": 1})).accuracy_std == 0.0

    def test_sparse_label_values(self):
        x, y = separable()
        report = linear_probe(x, np.where(y == 0, -1, 7), ProbeConfig(**FAST))
        assert report.accuracy_mean == 1.0

    def test_workers_match_serial(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(60, 3))
        y = (x[:, 0] + 0.5 * rng.normal(size=60) > 0).astype(int)
        serial = linear_probe(x, y, ProbeConfig(**FAST))
        parallel = linear_probe(x, y, ProbeConfig(**FAST, workers=3))
        assert serial == parallel

    def test_single_class(self):
        with self.assertRaises(ProbeError):
            linear_probe(np.ones((10, 2)), np.zeros(10, dtype=int), ProbeConfig(**FAST))

    def test_length_mismatch(self):
        with self.assertRaises(ProbeError):
            linear_probe(np.ones((10, 2)), np.array([0, 1] * 4), ProbeConfig(**FAST))

    def test_class_with_one_graph(self):
        x, _ = separable(n_per_class=5)
        y = np.array([0] * 9 + [1])
        with self.assertRaises(ProbeError):
            linear_probe(x, y, ProbeConfig(**FAST))

    def test_folds_reduced_to_smallest_class(self):
        x, y = separable(n_per_class=3)
        with self.assertLogs("src.evaluation", level="WARNING") as logs:
            report = linear_probe(x, y, ProbeConfig(**{**FAST, "folds": 10}))
        assert any("using 3 folds" in line for line in logs.output)
        assert report.accuracy_mean == 1.0

    def test_config_validation(self):
        with self.assertRaises(ValueError):
            ProbeConfig(folds=1)
        with self.assertRaises(ValueError):
            ProbeConfig(repeats=0)


class TestEmbedAll(unittest.TestCase):
    """Test cases for embed_all."""

    def setUp(self):
        rng = np.random.default_rng(2)
        graphs = []
        for index in range(7):
            n = int(rng.integers(2, 6))
            graphs.append(Graph(n, [(i, i + 1) for i in range(n - 1)], rng.normal(size=(n, 3)), index % 2))
        self.dataset = Dataset(graphs=tuple(graphs), num_classes=2, feature_dim=3, name="seven")
        self.params = init_params(EncoderConfig(num_layers=2, hidden_dim=5, projector_dim=4), 3, 0)

    def test_order_and_chunking(self):
        chunked = embed_all(self.params, self.dataset, batch_size=3)
        whole = encode(self.params, batch_graphs(self.dataset.graphs)).values
        assert chunked.shape == (7, 5)
        assert np.allclose(chunked, whole)

    def test_params_unchanged(self):
        before = {name: array.copy() for name, array in self.params.arrays.items()}
        embed_all(self.params, self.dataset)
        for name, array in self.params.arrays.items():
            assert np.array_equal(array, before[name])


if __name__ == "__main__":
    unittest.main()

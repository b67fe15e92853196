#!/usr/bin/env python3
"""
Tests for report.py module.
"""

import os
import re
import sys
import tempfile
import unittest
from dataclasses import replace

# Add src directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from src.report import (
    CSV_FIELDS,
    ReportError,
    RunRecord,
    emit_svg_linechart,
    group_series,
    loss_curve_series,
    markdown_table,
    normalize_loss_history,
    read_records,
    write_records,
)


def record(**overrides):
    values = {
        "dataset": "MUTAG",
        "loss": "vicreghsic",
        "aug_a": "nodedrop",
        "aug_b": "subgraph",
        "ratio": 0.2,
        "batch_size": 128,
        "projector_dim": 160,
        "lambda_": 25.0,
        "mu": 25.0,
        "nu": 1.0,
        "p": 2.0,
        "seed": 0,
        "accuracy_mean": 0.9,
        "accuracy_std": 0.01,
        "final_loss": 12.5,
        "runtime_s": 3.0,
    }
    values.update(overrides)
    return RunRecord(**values)


class TempDirTestCase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()


class TestRunRecord(unittest.TestCase):
    """Test cases for RunRecord."""

    def test_accuracy_range(self):
        with self.assertRaises(ReportError):
            record(accuracy_mean=1.2)

    def test_get_by_column(self):
        assert record(lambda_=5.0).get("lambda") == 5.0
        assert record().get("batch_size") == 128
        with self.assertRaises(ReportError):
            record().get("lambda_")

    def test_numeric_fields_exclude_runtime(self):
        a = record(runtime_s=1.0)
        b = record(runtime_s=99.0)
        assert a.numeric_fields() == b.numeric_fields()
        assert len(a.numeric_fields()) == len(CSV_FIELDS) - 1


class TestRecordFile(TempDirTestCase):
    """Test cases for write_records and read_records."""

    def test_round_trip_and_append(self):
        path = os.path.join(self.dir, "runs.csv")
        first = [record(seed=0), record(seed=1, accuracy_mean=0.1 + 0.7)]
        assert write_records(path, first) == 2
        write_records(path, [record(dataset="PROTEINS")])
        loaded = read_records(path)
        assert loaded == [*first, record(dataset="PROTEINS")]
        with open(path, encoding="utf-8") as handle:
            lines = handle.read().splitlines()
        assert lines[0] == ",".join(CSV_FIELDS)
        assert len(lines) == 4

    def test_header_mismatch(self):
        path = os.path.join(self.dir, "bad.csv")
        with open(path, "w", encoding="utf-8") as handle:
            handle.write("dataset,loss\nMUTAG,vicreg\n")
        with self.assertRaises(ReportError):
            read_records(path)

    def test_bad_value_names_line(self):
        path = os.path.join(self.dir, "runs.csv")
        write_records(path, [record()])
        with open(path, "a", encoding="utf-8") as handle:
            handle.write("MUTAG,vicreg,nodedrop,subgraph,x,128,160,25,25,1,2,0,0.9,0.01,1,1\n")
        with self.assertRaises(ReportError) as ctx:
            read_records(path)
        assert "line 3" in str(ctx.exception)

    def test_missing_file(self):
        with self.assertRaises(ReportError):
            read_records(os.path.join(self.dir, "absent.csv"))


class TestGroupSeries(unittest.TestCase):
    """Test cases for group_series."""

    def test_groups_sorts_and_averages(self):
        records = [
            record(loss="vicreg", p=2.0, accuracy_mean=0.8),
            record(loss="vicreg", p=1.0, accuracy_mean=0.7),
            record(loss="vicreg", p=2.0, accuracy_mean=0.9),
            record(loss="barlow", p=1.0, accuracy_mean=0.6),
        ]
        series = group_series(records, "p")
        assert list(series) == ["barlow", "vicreg"]
        assert series["vicreg"][0] == (1.0, 0.7)
        assert series["vicreg"][1][0] == 2.0
        assert abs(series["vicreg"][1][1] - 0.85) < 1e-12

    def test_non_numeric_axis(self):
        with self.assertRaises(ReportError):
            group_series([record()], "aug_a")


class TestSvgChart(TempDirTestCase):
    """Test cases for emit_svg_linechart."""

    def read(self, path):
        with open(path, encoding="utf-8") as handle:
            return handle.read()

    def test_single_series(self):
        path = emit_svg_linechart({"vicreg": [(1.0, 0.5), (2.0, 0.75)]}, "p", "accuracy", os.path.join(self.dir, "a.svg"))
        svg = self.read(path)
        assert svg.lstrip().startswith("<?xml") or svg.lstrip().startswith("<svg")
        assert svg.count('id="series-') == 1
        assert svg.count('id="legend-') == 1

    def test_series_group_holds_the_line_path(self):
        path = emit_svg_linechart({"vicreg": [(1.0, 0.5), (2.0, 0.75)]}, "p", "accuracy", os.path.join(self.dir, "g.svg"))
        svg = self.read(path)
        assert re.search(r'<g id="series-0">\s*<path ', svg)
        assert "<polyline" not in svg

    def test_two_series_two_legend_entries(self):
        series = {"barlow": [(1.0, 0.5), (2.0, 0.6)], "vicreg": [(1.0, 0.7), (3.0, 0.8)]}
        svg = self.read(emit_svg_linechart(series, "p", "accuracy", os.path.join(self.dir, "sub", "b.svg"), "MUTAG"))
        assert svg.count('id="series-') == 2
        assert svg.count('id="legend-') == 2
        assert "MUTAG" in svg

    def test_single_point_series(self):
        path = emit_svg_linechart({"only": [(5.0, 0.5)]}, "x", "y", os.path.join(self.dir, "c.svg"))
        assert self.read(path).count('id="series-') == 1

    def test_non_monotonic_x(self):
        with self.assertRaises(ReportError):
            emit_svg_linechart({"bad": [(2.0, 0.1), (1.0, 0.2)]}, "x", "y", os.path.join(self.dir, "d.svg"))
        assert not os.path.exists(os.path.join(self.dir, "d.svg"))

    def test_empty(self):
        with self.assertRaises(ReportError):
            emit_svg_linechart({}, "x", "y", os.path.join(self.dir, "e.svg"))


class TestLossCurves(unittest.TestCase):
    """Test cases for loss history normalization."""

    def test_normalize(self):
        assert normalize_loss_history([4.0, 2.0, 1.0]) == [1.0, 0.5, 0.25]

    def test_normalize_errors(self):
        with self.assertRaises(ReportError):
            normalize_loss_history([])
        with self.assertRaises(ReportError):
            normalize_loss_history([0.0, 1.0])

    def test_series(self):
        series = loss_curve_series({"vicreg": [2.0, 1.0]})
        assert series == {"vicreg": [(0.0, 1.0), (1.0, 0.5)]}


class TestMarkdownTable(unittest.TestCase):
    """Test cases for markdown_table."""

    def test_layout(self):
        records = [
            record(loss="vicreg", dataset="MUTAG", accuracy_mean=0.9005, accuracy_std=0.0054),
            record(loss="barlow", dataset="PROTEINS", accuracy_mean=0.75, accuracy_std=0.02),
        ]
        lines = markdown_table(records).splitlines()
        assert lines[0] == "| loss | MUTAG | PROTEINS |"
        assert lines[2] == "| barlow | - | 75.00 ± 2.00 |"
        assert lines[3] == "| vicreg | 90.05 ± 0.54 | - |"

    def test_averages_matching_records(self):
        records = [record(accuracy_mean=0.8), replace(record(accuracy_mean=0.9), seed=1)]
        assert "85.00 ± 1.00" in markdown_table(records)

    def test_empty(self):
        with self.assertRaises(ReportError):
            markdown_table([])


if __name__ == "__main__":
    unittest.main()

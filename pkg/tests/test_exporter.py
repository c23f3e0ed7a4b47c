"""Result files: CSV layout, JSON ledgers, manifest."""

import json
import math
from datetime import datetime

import numpy as np
import pandas as pd
import pytest

from benchmark_suite import EpochMetrics, RunRecord
from exporters.data_exporter import METRIC_COLUMNS, ResultExporter


@pytest.fixture
def record():
    metrics = [EpochMetrics(1, 1.0 / 3.0, 0.5, 0.7, 0.4, 0.0), EpochMetrics(2, 0.25, 0.75, 0.6, 0.5, 0.125)]
    return RunRecord(config_hash="0123456789ab", optimizer="eagle", seed=7, metrics=metrics, wall_seconds=0.5)


class TestCsv:
    """Header row, '.' decimals and floats that read back exactly."""

    def test_run_metrics(self, tmp_path, record):
        exporter = ResultExporter(tmp_path)
        path = exporter.export_run(record)
        assert path.endswith("metrics_eagle_7.csv")

        frame = pd.read_csv(path)
        assert list(frame.columns) == METRIC_COLUMNS
        assert frame["train_loss"].iloc[0] == 1.0 / 3.0
        assert len(frame) == 2

    def test_column_order(self, tmp_path):
        exporter = ResultExporter(tmp_path)
        path = exporter.to_csv([{"b": 1, "a": 2, "c": 3}], "x.csv", columns=["a", "b"])
        assert pd.read_csv(path).columns.tolist() == ["a", "b", "c"]

    def test_nan_round_trip(self, tmp_path):
        exporter = ResultExporter(tmp_path)
        path = exporter.to_csv(pd.DataFrame({"v": [1.5, math.nan]}), "nan.csv")
        assert math.isnan(pd.read_csv(path)["v"].iloc[1])

    def test_rejects_bad_rows(self, tmp_path):
        with pytest.raises(ValueError):
            ResultExporter(tmp_path).to_csv(["not", "dicts"], "bad.csv")


class TestJson:

    def test_records_ledger(self, tmp_path, record):
        exporter = ResultExporter(tmp_path)
        with open(exporter.export_records([record])) as f:
            ledger = json.load(f)
        assert ledger[0]["seed"] == 7
        assert ledger[0]["status"] == "OK"
        assert "metrics" not in ledger[0]

    def test_numpy_and_infinity(self, tmp_path):
        exporter = ResultExporter(tmp_path)
        path = exporter.to_json({"n": np.int64(3), "x": np.array([1.0, 2.0]), "t": math.inf}, "v.json")
        text = open(path).read()
        assert "Infinity" in text
        assert json.loads(text)["n"] == 3

    def test_manifest_lists_outputs(self, tmp_path, record):
        exporter = ResultExporter(tmp_path)
        exporter.export_run(record)
        with open(exporter.write_manifest(["train", "--seed", "7"], datetime.now(), "0123456789ab")) as f:
            manifest = json.load(f)
        assert manifest["command"] == ["train", "--seed", "7"]
        assert manifest["config_hash"] == "0123456789ab"
        assert manifest["outputs"] == ["metrics_eagle_7.csv"]

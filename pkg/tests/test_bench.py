"""Benchmark harness: single runs, aggregation tables, usage study, analytic drivers."""

import logging
import math

import numpy as np
import pytest

from benchmark_suite import (
    STATUS_DIVERGED, STATUS_OK, BenchmarkRunner, EpochMetrics, RunRecord,
    early_window, metric3_table, minimize_analytic, ordering_checks, run_jobs,
    run_one, summarize, usage_by_threshold, usage_table
)
from config.experiment_config import EagleConfig, ExperimentConfig
from core.checkpoint import load_checkpoint
from core.data import LogCosh, Quadratic
from core.optim import AdamOptimizer, EagleOptimizer, OptimizerState, eagle_step


def _record(label, seed, losses, status=STATUS_OK, threshold=None, usage=None):
    usage = usage or [0.0] * len(losses)
    metrics = [EpochMetrics(e, x, 0.5, x, 0.5, u) for e, (x, u) in enumerate(zip(losses, usage), 1)]
    record = RunRecord(config_hash="abc", optimizer=label.split("@")[0], seed=seed,
                       metrics=metrics, status=status, threshold=threshold, label=label)
    if status == STATUS_DIVERGED:
        record.diverged_epoch = len(losses)
    return record


class TestRunOne:
    """One optimizer, one seed, fixed number of epochs."""

    def test_metrics_per_epoch(self):
        config = ExperimentConfig(dataset="iris", epochs=5, seeds=[7])
        record = run_one(config, 7)
        assert record.status == STATUS_OK
        assert [m.epoch for m in record.metrics] == [1, 2, 3, 4, 5]
        assert all(math.isfinite(m.train_loss) and 0.0 <= m.test_acc <= 1.0 for m in record.metrics)

    def test_first_epoch_usage_is_zero_full_batch(self):
        record = run_one(ExperimentConfig(epochs=3, seeds=[1], batch_size=None), 1, optimizer="eagle")
        assert record.metrics[0].eagle_usage_rate == 0.0
        assert all(0.0 <= m.eagle_usage_rate <= 1.0 for m in record.metrics)

    def test_reproducible(self):
        config = ExperimentConfig(dataset="wine", epochs=4, seeds=[3])
        a = run_one(config, 3)
        b = run_one(config, 3)
        np.testing.assert_array_equal(a.series("train_loss"), b.series("train_loss"))
        np.testing.assert_array_equal(a.series("eagle_usage_rate"), b.series("eagle_usage_rate"))

    def test_minibatch_reproducible(self):
        config = ExperimentConfig(epochs=3, seeds=[3], batch_size=16)
        np.testing.assert_array_equal(run_one(config, 3).series("train_loss"),
                                      run_one(config, 3).series("train_loss"))

    @pytest.mark.parametrize("seed", [11, 12, 13])
    def test_infinite_threshold_matches_adam(self, seed):
        """EAGLE with threshold = inf streams the same metrics as Adam."""
        config = ExperimentConfig(dataset="iris", epochs=20, seeds=[seed])
        eagle = run_one(config, seed, optimizer="eagle", eagle=EagleConfig(threshold=math.inf))
        adam = run_one(config, seed, optimizer="adam")
        for metric in ("train_loss", "train_acc", "test_loss", "test_acc"):
            np.testing.assert_array_equal(eagle.series(metric), adam.series(metric))
        np.testing.assert_array_equal(eagle.series("eagle_usage_rate"), 0.0)

    def test_checkpoint_written(self, tmp_path):
        config = ExperimentConfig(epochs=2, seeds=[4])
        record = run_one(config, 4, optimizer="adam", output_dir=str(tmp_path))
        assert record.checkpoint.endswith("checkpoint_adam_4.eagl")
        assert load_checkpoint(record.checkpoint).n_params == 4 * 25 + 25 + 25 * 3 + 3

    def test_epoch_log_reports_largest_secant_step(self, caplog):
        caplog.set_level(logging.DEBUG, logger="benchmark_suite")
        run_one(ExperimentConfig(epochs=3, seeds=[6]), 6, optimizer="eagle")
        lines = [r.getMessage() for r in caplog.records
                 if r.name == "benchmark_suite" and "largest secant step" in r.getMessage()]
        assert len(lines) == 3
        assert all("|dg|=" in line for line in lines)

    def test_divergence_becomes_record(self):
        """An absurd step size yields a DIVERGED record, not an exception."""
        config = ExperimentConfig(epochs=5, seeds=[2])
        record = run_one(config, 2, optimizer="adam", eagle=EagleConfig(alpha=1e300))
        assert record.status == STATUS_DIVERGED
        assert record.diverged_epoch == 1
        assert len(record.metrics) == 1
        assert math.isnan(record.metrics[0].train_loss)


class TestAggregation:
    """Cross-seed tables: NaN-aware means, population std, grid and ratios."""

    def test_summary_excludes_diverged(self):
        records = [
            _record("eagle", 1, [1.0, 0.5, 0.25]),
            _record("eagle", 2, [3.0, math.nan], status=STATUS_DIVERGED),
        ]
        summary = summarize(records, 3)
        np.testing.assert_allclose(summary["train_loss_mean"], [2.0, 0.5, 0.25])
        np.testing.assert_allclose(summary["train_loss_std"], [1.0, 0.0, 0.0])
        assert summary["n_diverged"].tolist() == [0, 1, 1]
        assert summary["n_seeds"].tolist() == [2, 2, 2]

    def test_single_seed_std_is_zero(self):
        summary = summarize([_record("adam", 1, [1.0, 0.9])], 2)
        np.testing.assert_array_equal(summary["train_loss_std"], 0.0)

    def test_early_window(self):
        summary = summarize([_record("adam", 1, [1.0, 0.9, 0.8, 0.7])], 4)
        assert early_window(summary, 2)["epoch"].tolist() == [1, 2]

    def test_metric3_and_ratio(self):
        records = [_record("adam", 1, [1.0, 0.8, 0.6, 0.4]), _record("eagle", 1, [0.5, 0.4, 0.6, 0.5])]
        table = metric3_table(summarize(records, 4), [2, 4])
        assert table["epoch"].tolist() == [2, 4]
        np.testing.assert_allclose(table["eagle"], [0.4, 0.5])
        np.testing.assert_allclose(table["eagle_vs_adam_pct"], [-50.0, 25.0])
        assert ordering_checks(table) == {2: True, 4: False}

    def test_usage_table_shape(self):
        records = [
            _record("eagle@0.001", seed, [1.0] * 4, threshold=1e-3, usage=[0.0, 0.2, 0.1, 0.1])
            for seed in (5, 6)
        ] + [
            _record("eagle@0.0001", seed, [1.0] * 4, threshold=1e-4, usage=[0.0, 0.4, 0.3, 0.3])
            for seed in (5, 6)
        ]
        table = usage_table(records, [1e-3, 1e-4], early_epoch=2, final_epoch=4)
        assert list(table.columns) == ["threshold", "stage", "5", "6", "average"]
        assert table["stage"].tolist() == ["epoch_2", "epoch_4", "average"] * 2
        row = table[(table["threshold"] == 1e-4) & (table["stage"] == "average")].iloc[0]
        assert row["average"] == pytest.approx(0.25)

    def test_run_jobs_sorted(self):
        config = ExperimentConfig(epochs=1, seeds=[2, 1])
        jobs = [(config, seed, name, None, None, None) for name in ("eagle", "adam") for seed in (2, 1)]
        records = run_jobs(jobs, n_workers=1)
        assert [(r.label, r.seed) for r in records] == [("adam", 1), ("adam", 2), ("eagle", 1), ("eagle", 2)]


class TestBenchmarkRunner:
    """Suites produce every table for every optimizer and seed."""

    def test_suite(self, fast_config):
        suite = BenchmarkRunner(fast_config).run_suite()
        assert len(suite.records) == 6
        assert set(suite.summary["optimizer"]) == {"eagle", "adam", "sgd_momentum"}
        assert len(suite.summary) == 3 * fast_config.epochs
        assert suite.metric3["epoch"].tolist() == [2, 4]
        assert {"eagle_vs_adam_pct", "sgd_momentum_vs_adam_pct"} <= set(suite.metric3.columns)
        assert suite.early["epoch"].max() == 2

    def test_usage_study(self, fast_config):
        study = BenchmarkRunner(fast_config).run_usage_study([1e-3, 1e-4])
        assert sorted({r.label for r in study.records}) == ["eagle@0.0001", "eagle@0.001"]
        assert len(study.usage) == 6
        assert set(study.summary["optimizer"]) == {"eagle@0.001", "eagle@0.0001"}


    def test_close_thresholds_keep_distinct_labels(self, fast_config):
        close = [1e-3, 1.0000001e-3]
        study = BenchmarkRunner(fast_config).run_usage_study(close)
        labels = sorted({r.label for r in study.records})
        assert labels == ["eagle@0.001", "eagle@0.0010000001"]
        assert len(study.summary) == 2 * fast_config.epochs
        assert len(study.usage) == 6


class TestUsageByThreshold:
    """Frozen-state usage counts grow as the threshold shrinks."""

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(40)
        thresholds = [1e-3, 7e-4, 4e-4, 1e-4]
        for _ in range(200):
            params = rng.normal(size=30)
            state = OptimizerState.initial(params)
            eagle_step(state, params, rng.normal(scale=1e-3, size=30), EagleConfig())
            grads = state.grad_prev + rng.normal(scale=1e-3, size=30)
            before = state.copy()
            counts = usage_by_threshold(state, params, grads, thresholds)
            assert counts == sorted(counts)
            np.testing.assert_array_equal(state.grad_prev, before.grad_prev)
            assert state.step == before.step


class TestAnalyticDrivers:
    """Optimizers on closed-form objectives."""

    def test_quadratic_reaches_minimum(self):
        record = minimize_analytic(Quadratic(1.0, 2.0, 2.0), EagleOptimizer(), [10.0], steps=5)
        assert record.status == STATUS_OK
        assert record.eagle_counts[:2] == [0, 1]
        assert record.losses[2] == pytest.approx(2.0, abs=1e-12)

    def test_adam_moves_slowly(self):
        record = minimize_analytic(Quadratic(1.0, 2.0, 2.0), AdamOptimizer(), [10.0], steps=5)
        assert record.params[-1][0] == pytest.approx(10.0 - 5 * 0.001, abs=1e-6)

    def test_flat_region_diverges_without_guard(self):
        """A vanishing gradient change sends the unguarded secant step far away."""
        record = minimize_analytic(LogCosh(), EagleOptimizer(grad_guard=False), [10.0], steps=20)
        assert record.status == STATUS_DIVERGED
        assert record.diverged_step == 2
        assert record.eagle_counts == [0, 1]
        assert math.isinf(record.losses[-1])

    def test_flat_region_guarded(self):
        record = minimize_analytic(LogCosh(), EagleOptimizer(), [10.0], steps=20)
        assert record.status == STATUS_OK
        assert all(math.isfinite(x) for x in record.losses)
        assert sum(record.eagle_counts) == 0


@pytest.mark.slow
class TestReproductionStudies:
    """Qualitative trends of the full 10-seed protocol."""

    @pytest.mark.parametrize("dataset", ["iris", "wine"])
    def test_early_convergence_ordering(self, dataset):
        config = ExperimentConfig(dataset=dataset, optimizers=["eagle", "adam"], epochs=10)
        suite = BenchmarkRunner(config).run_suite()
        assert all(ordering_checks(suite.metric3).values())

    def test_epoch2_ratio(self):
        ratios = []
        for dataset in ("iris", "wine"):
            config = ExperimentConfig(dataset=dataset, optimizers=["eagle", "adam"], epochs=2, metric3_epochs=[2])
            table = BenchmarkRunner(config).run_suite().metric3
            ratios.append(float(table["eagle"].iloc[0] / table["adam"].iloc[0]))
        assert min(ratios) < 0.85

    def test_usage_trends_on_wine(self):
        config = ExperimentConfig(dataset="wine", epochs=100)
        usage = BenchmarkRunner(config).run_usage_study().usage
        averages = usage[usage["stage"] == "average"]["average"].tolist()
        assert averages == sorted(averages)
        for threshold in config.thresholds:
            rows = usage[usage["threshold"] == threshold].set_index("stage")["average"]
            assert rows["epoch_100"] < rows["epoch_10"]

    def test_adam_envelope_with_minibatches(self):
        config = ExperimentConfig(dataset="iris", optimizers=["adam"], epochs=100, batch_size=8)
        summary = BenchmarkRunner(config).run_suite().summary
        assert summary["train_loss_mean"].iloc[-1] < 0.1

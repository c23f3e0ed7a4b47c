#!/usr/bin/env python3
"""
Multi-seed benchmark harness for the EAGLE optimizer.

Trains the configured network with each optimizer and seed, records per-epoch
metrics (including the EAGLE usage rate) and aggregates them into the
comparison tables: per-epoch mean/std series, the early-epoch window, the
train-loss grid and the threshold usage-rate table.
"""

import os
import math
import time
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config.experiment_config import ExperimentConfig, EagleConfig
from core.checkpoint import save_checkpoint
from core.data import AnalyticFn, Dataset, load_dataset, split_standardize
from core.net import Batch, LayerSpec, evaluate, flatten, init_network, loss_and_grad, unflatten
from core.optim import OptimizerState, SecantStats, build_optimizer, switch_conditions
from utils.run_guard import DivergenceBreaker, ShapeMismatchError, check_same_length


logger = logging.getLogger(__name__)

STATUS_OK = "OK"
STATUS_DIVERGED = "DIVERGED"

METRIC_NAMES = ["train_loss", "train_acc", "test_loss", "test_acc", "eagle_usage_rate"]


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    test_loss: float
    test_acc: float
    eagle_usage_rate: float = 0.0

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass
class RunRecord:
    config_hash: str
    optimizer: str
    seed: int
    metrics: List[EpochMetrics] = field(default_factory=list)
    wall_seconds: float = 0.0
    checkpoint: Optional[str] = None
    status: str = STATUS_OK
    diverged_epoch: Optional[int] = None
    # eagle threshold used for this run (threshold study labels by it)
    threshold: Optional[float] = None
    label: str = ""

    def __post_init__(self):
        if not self.label:
            self.label = self.optimizer

    @property
    def diverged(self) -> bool:
        return self.status == STATUS_DIVERGED

    def series(self, metric: str) -> np.ndarray:
        return np.array([getattr(m, metric) for m in self.metrics], dtype=np.float64)

    def summary(self) -> Dict[str, object]:
        return {
            "label": self.label,
            "optimizer": self.optimizer,
            "seed": self.seed,
            "threshold": self.threshold,
            "status": self.status,
            "diverged_epoch": self.diverged_epoch,
            "epochs_recorded": len(self.metrics),
            "wall_seconds": self.wall_seconds,
            "checkpoint": self.checkpoint,
            "config_hash": self.config_hash
        }


@dataclass
class TrajectoryRecord:
    """Outcome of driving an optimizer on an analytic function"""
    function: str
    optimizer: str
    params: List[np.ndarray] = field(default_factory=list)
    losses: List[float] = field(default_factory=list)
    eagle_counts: List[int] = field(default_factory=list)
    status: str = STATUS_OK
    diverged_step: Optional[int] = None


@dataclass
class SuiteResult:
    records: List[RunRecord]
    summary: pd.DataFrame
    early: pd.DataFrame
    metric3: pd.DataFrame


@dataclass
class UsageStudyResult:
    records: List[RunRecord]
    usage: pd.DataFrame
    summary: pd.DataFrame


# -- data preparation ----------------------------------------------------------

def load_experiment_data(config: ExperimentConfig) -> Dataset:
    return load_dataset(config.dataset, config.dataset_path, config.label_column)


def build_layers(config: ExperimentConfig) -> List[LayerSpec]:
    return [LayerSpec.from_model(model) for model in config.layer_specs()]


def _epoch_batches(train: Batch, batch_size: Optional[int], rng: Optional[np.random.Generator]) -> List[Batch]:
    if batch_size is None or batch_size >= len(train):
        return [train]
    order = rng.permutation(len(train))
    return [train.subset(order[i:i + batch_size]) for i in range(0, len(train), batch_size)]


# -- single run ----------------------------------------------------------------

def run_one(config: ExperimentConfig, seed: int, optimizer: Optional[str] = None,
            eagle: Optional[EagleConfig] = None, output_dir: Optional[str] = None,
            dataset: Optional[Dataset] = None, grad_guard: bool = True,
            label: Optional[str] = None) -> RunRecord:
    """Train for exactly `config.epochs` epochs (or until divergence) and record metrics"""
    optimizer_name = optimizer or config.optimizer
    eagle_config = eagle or config.eagle
    dataset = dataset if dataset is not None else load_experiment_data(config)

    train, test = split_standardize(dataset, config.split, seed=seed)
    layers = build_layers(config)
    if layers[0].in_dim != dataset.n_features or layers[-1].out_dim != dataset.n_classes:
        raise ShapeMismatchError(
            f"architecture {layers[0].in_dim}->{layers[-1].out_dim} does not fit "
            f"{dataset.name} ({dataset.n_features} features, {dataset.n_classes} classes)"
        )

    net = init_network(layers, seed)
    opt = build_optimizer(optimizer_name, eagle_config, config.momentum, grad_guard=grad_guard)
    shuffle_rng = np.random.default_rng([seed, 1]) if config.batch_size else None
    breaker = DivergenceBreaker()

    record = RunRecord(
        config_hash=config.config_hash(),
        optimizer=optimizer_name,
        seed=seed,
        threshold=eagle_config.threshold if optimizer_name == "eagle" else None,
        label=label or optimizer_name
    )

    logger.info(f"Run start: {record.label} seed={seed} epochs={config.epochs}")
    started = time.perf_counter()
    params = flatten(net)

    previous_loss = math.inf
    for epoch in range(1, config.epochs + 1):
        eagle_count = 0
        scalar_updates = 0
        largest = SecantStats()

        with np.errstate(all='ignore'):
            for batch in _epoch_batches(train, config.batch_size, shuffle_rng):
                unflatten(net, params)
                batch_loss, grads = loss_and_grad(net, batch)
                if breaker.record(batch_loss, epoch):
                    break
                step = opt.step(params, grads)
                params = step.params
                eagle_count += step.eagle_count
                scalar_updates += len(params)
                secant = getattr(opt, "last_secant", None)
                if secant is not None and secant.delta > largest.delta:
                    largest = secant

            unflatten(net, params)
            train_loss, train_acc = evaluate(net, train)
            test_loss, test_acc = evaluate(net, test)

        usage = eagle_count / scalar_updates if scalar_updates else 0.0

        if breaker.record(train_loss, epoch) or not math.isfinite(test_loss):
            record.metrics.append(EpochMetrics(epoch, math.nan, math.nan, math.nan, math.nan, usage))
            record.status = STATUS_DIVERGED
            record.diverged_epoch = breaker.diverged_at or epoch
            break

        if train_loss > 2.0 * previous_loss:
            logger.warning(
                f"{record.label} seed={seed} epoch {epoch}: train loss jumped {previous_loss:.4g} -> "
                f"{train_loss:.4g}; largest secant step {largest.delta:.4g} at |dg|={largest.grad_diff:.3g}"
            )
        else:
            logger.debug(
                f"{record.label} seed={seed} epoch {epoch}: largest secant step "
                f"{largest.delta:.4g} at |dg|={largest.grad_diff:.3g}"
            )
        previous_loss = train_loss

        record.metrics.append(EpochMetrics(epoch, train_loss, train_acc, test_loss, test_acc, usage))

    record.wall_seconds = time.perf_counter() - started

    if output_dir is not None:
        record.checkpoint = save_checkpoint(net, Path(output_dir) / f"checkpoint_{record.label}_{seed}.eagl")

    logger.info(
        f"Run finished: {record.label} seed={seed} status={record.status} "
        f"final train_loss={record.metrics[-1].train_loss:.6g} ({record.wall_seconds:.2f}s)"
    )
    return record


def _run_job(job: Tuple) -> RunRecord:
    config, seed, optimizer, eagle, output_dir, label = job
    return run_one(config, seed, optimizer=optimizer, eagle=eagle, output_dir=output_dir, label=label)


def run_jobs(jobs: Sequence[Tuple], n_workers: Optional[int] = None) -> List[RunRecord]:
    """Run independent seeds, in a process pool when more than one worker is allowed.

    Results are sorted by (label, seed) so completion order never matters.
    """
    n_workers = n_workers or os.cpu_count() or 1
    if n_workers <= 1 or len(jobs) <= 1:
        records = [_run_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            records = list(pool.map(_run_job, jobs))
    return sorted(records, key=lambda r: (r.label, r.seed))


# -- aggregation ---------------------------------------------------------------

def _seed_matrix(records: Sequence[RunRecord], metric: str, epochs: int) -> np.ndarray:
    """(seeds, epochs) matrix; epochs a run never reached are NaN"""
    matrix = np.full((len(records), epochs), np.nan)
    for i, record in enumerate(sorted(records, key=lambda r: r.seed)):
        values = record.series(metric)[:epochs]
        matrix[i, :len(values)] = values
    return matrix


def summarize(records: Sequence[RunRecord], epochs: int) -> pd.DataFrame:
    """Per-epoch mean and population std across seeds, per label.

    Diverged or missing epochs are NaN and excluded from the means; the
    excluded count per epoch is reported in `n_diverged`.
    """
    by_label: Dict[str, List[RunRecord]] = {}
    for record in records:
        by_label.setdefault(record.label, []).append(record)

    frames = []
    for label in sorted(by_label):
        group = by_label[label]
        frame = pd.DataFrame({"optimizer": label, "epoch": np.arange(1, epochs + 1)})
        for metric in METRIC_NAMES:
            matrix = pd.DataFrame(_seed_matrix(group, metric, epochs))
            frame[f"{metric}_mean"] = matrix.mean(axis=0, skipna=True).to_numpy()
            frame[f"{metric}_std"] = matrix.std(axis=0, ddof=0, skipna=True).to_numpy()
        train_loss = _seed_matrix(group, "train_loss", epochs)
        frame["n_seeds"] = len(group)
        frame["n_diverged"] = np.isnan(train_loss).sum(axis=0)
        frames.append(frame)

    if any(record.diverged for record in records):
        diverged = sorted((r.label, r.seed, r.diverged_epoch) for r in records if r.diverged)
        logger.warning(f"Diverged runs excluded from means: {diverged}")

    return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()


def early_window(summary: pd.DataFrame, early_epochs: int) -> pd.DataFrame:
    """Early-training slice of the summary series"""
    return summary[summary["epoch"] <= early_epochs].reset_index(drop=True)


def metric3_table(summary: pd.DataFrame, epoch_grid: Sequence[int]) -> pd.DataFrame:
    """Mean train loss per optimizer at the grid epochs, plus change vs Adam in percent"""
    pivot = summary.pivot(index="epoch", columns="optimizer", values="train_loss_mean")
    pivot = pivot.reindex([e for e in epoch_grid])
    table = pd.DataFrame({"epoch": list(epoch_grid)})
    for label in pivot.columns:
        table[label] = pivot[label].to_numpy()
    if "adam" in pivot.columns:
        for label in pivot.columns:
            if label != "adam":
                table[f"{label}_vs_adam_pct"] = (pivot[label] - pivot["adam"]).to_numpy() / pivot["adam"].to_numpy() * 100.0
    return table


def usage_table(records: Sequence[RunRecord], thresholds: Sequence[float],
                early_epoch: int, final_epoch: int) -> pd.DataFrame:
    """Rows: threshold x {early epoch, final epoch, average}; columns: seeds + average"""
    seeds = sorted({record.seed for record in records})
    stages = [f"epoch_{early_epoch}", f"epoch_{final_epoch}", "average"]

    rows = []
    for threshold in thresholds:
        group = {r.seed: r for r in records if r.threshold == threshold}
        for stage in stages:
            row = {"threshold": threshold, "stage": stage}
            values = []
            for seed in seeds:
                rates = group[seed].series("eagle_usage_rate") if seed in group else np.array([])
                if stage == "average":
                    value = float(rates.mean()) if len(rates) else math.nan
                else:
                    epoch = early_epoch if stage == stages[0] else final_epoch
                    value = float(rates[epoch - 1]) if len(rates) >= epoch else math.nan
                row[str(seed)] = value
                values.append(value)
            finite = [v for v in values if not math.isnan(v)]
            row["average"] = float(np.mean(finite)) if finite else math.nan
            rows.append(row)

    return pd.DataFrame(rows, columns=["threshold", "stage"] + [str(s) for s in seeds] + ["average"])


def ordering_checks(metric3: pd.DataFrame, challenger: str = "eagle", baseline: str = "adam") -> Dict[int, bool]:
    """Per grid epoch: is the challenger's mean train loss below the baseline's?"""
    if challenger not in metric3.columns or baseline not in metric3.columns:
        return {}
    return {
        int(row["epoch"]): bool(row[challenger] < row[baseline])
        for _, row in metric3.iterrows()
    }


# -- suites --------------------------------------------------------------------

class BenchmarkRunner:
    """Runs comparison suites and threshold studies for one experiment config"""

    def __init__(self, config: ExperimentConfig, output_dir: Optional[str] = None):
        self.config = config
        self.output_dir = output_dir
        self.logger = logging.getLogger(__name__)

    def _workers(self) -> int:
        return self.config.jobs or os.cpu_count() or 1

    def run_suite(self) -> SuiteResult:
        """All optimizers x seeds, aggregated into the comparison tables"""
        jobs = [
            (self.config, seed, name, None, self.output_dir, None)
            for name in self.config.optimizers
            for seed in self.config.seeds
        ]
        self.logger.info(f"Suite: {len(self.config.optimizers)} optimizers x {len(self.config.seeds)} seeds")
        records = run_jobs(jobs, self._workers())

        summary = summarize(records, self.config.epochs)
        return SuiteResult(
            records=records,
            summary=summary,
            early=early_window(summary, self.config.early_epochs),
            metric3=metric3_table(summary, self.config.metric3_epochs)
        )

    def run_usage_study(self, thresholds: Optional[Sequence[float]] = None) -> UsageStudyResult:
        """EAGLE runs for each threshold x seed"""
        thresholds = list(thresholds or self.config.thresholds)
        jobs = []
        for threshold in thresholds:
            eagle = self.config.eagle.model_copy(update={"threshold": threshold})
            for seed in self.config.seeds:
                jobs.append((self.config, seed, "eagle", eagle, self.output_dir, f"eagle@{threshold!r}"))

        self.logger.info(f"Usage study: thresholds {thresholds} x {len(self.config.seeds)} seeds")
        records = run_jobs(jobs, self._workers())

        early_epoch = min(self.config.usage_early_epoch, self.config.epochs)
        return UsageStudyResult(
            records=records,
            usage=usage_table(records, thresholds, early_epoch, self.config.epochs),
            summary=summarize(records, self.config.epochs)
        )


def run_suite(config: ExperimentConfig, output_dir: Optional[str] = None) -> SuiteResult:
    return BenchmarkRunner(config, output_dir).run_suite()


def run_usage_study(config: ExperimentConfig, thresholds: Optional[Sequence[float]] = None,
                    output_dir: Optional[str] = None) -> UsageStudyResult:
    return BenchmarkRunner(config, output_dir).run_usage_study(thresholds)


# -- usage counts and analytic drivers ---------------------------------------------

def usage_by_threshold(state: OptimizerState, params: np.ndarray, grads: np.ndarray,
                       thresholds: Sequence[float]) -> List[int]:
    """EAGLE-branch scalar count per threshold for a frozen state (nothing is mutated)"""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    check_same_length(params=params, grads=grads, grad_prev=state.grad_prev)

    counts = []
    for threshold in thresholds:
        cond1, cond2 = switch_conditions(state.grad_prev, grads, threshold)
        counts.append(int(np.count_nonzero(~(cond1 | cond2))))
    return counts


def minimize_analytic(fn: AnalyticFn, optimizer, theta0: Sequence[float], steps: int) -> TrajectoryRecord:
    """Drive `optimizer` on `fn` from theta0; a non-finite loss halts with DIVERGED"""
    theta = np.array(theta0, dtype=np.float64)
    record = TrajectoryRecord(function=fn.name, optimizer=getattr(optimizer, "name", type(optimizer).__name__))
    breaker = DivergenceBreaker()

    with np.errstate(all='ignore'):
        for n in range(steps + 1):
            value = fn.objective(theta)
            record.params.append(theta.copy())
            record.losses.append(value)
            if breaker.record(value, n):
                record.status = STATUS_DIVERGED
                record.diverged_step = n
                break
            if n == steps:
                break
            result = optimizer.step(theta, fn.grad(theta))
            theta = result.params
            record.eagle_counts.append(result.eagle_count)

    return record

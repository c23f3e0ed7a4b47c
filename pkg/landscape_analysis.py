#!/usr/bin/env python3
"""
Loss-landscape sensitivity analysis around a trained reference point.

Each sampled parameter is swept along a uniform grid with every other
parameter frozen; the resulting 1-D loss profile is classified by a
deterministic rule on its first and second differences.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from benchmark_suite import RunRecord, build_layers, load_experiment_data, run_one
from config.experiment_config import ExperimentConfig, ScanSpec
from core.checkpoint import load_into
from core.net import Batch, Network, flatten, init_network, loss, unflatten
from core.data import split_standardize


logger = logging.getLogger(__name__)


class ShapeClass(str, Enum):
    CONVEX = "Convex"
    OSCILLATORY = "Oscillatory"
    FLAT_OR_LINEAR = "FlatOrLinear"
    SIGN_CHANGING = "SignChanging"
    OTHER = "Other"


@dataclass
class LandscapeProfile:
    param_id: Tuple[int, int]
    reference_value: float
    sweep_values: np.ndarray
    losses: np.ndarray
    reference_loss: float
    shape_class: ShapeClass = ShapeClass.OTHER

    @property
    def loss_range(self) -> float:
        return float(np.max(self.losses) - np.min(self.losses))


def sweep_grid(reference: float, half_width: float, n_points: int) -> np.ndarray:
    """reference - half_width + k * spacing for k = 0 .. n_points - 1"""
    spacing = 2.0 * half_width / n_points
    return (reference - half_width) + np.arange(n_points) * spacing


def classify_losses(losses: np.ndarray, reference_loss: float, spec: Optional[ScanSpec] = None) -> ShapeClass:
    """Shape class of a discrete loss profile"""
    spec = spec or ScanSpec()
    losses = np.asarray(losses, dtype=np.float64)
    if len(losses) < 3 or not np.all(np.isfinite(losses)):
        return ShapeClass.OTHER

    tol = spec.tol_rel * np.max(np.abs(losses))
    range_floor = max(spec.range_floor_rel * reference_loss, spec.range_floor_min)
    loss_range = np.max(losses) - np.min(losses)

    d1 = np.diff(losses)
    d2 = np.diff(d1)

    if loss_range <= range_floor or np.all(np.abs(d2) <= tol):
        return ShapeClass.FLAT_OR_LINEAR

    if np.all(d2 >= -tol):
        return ShapeClass.CONVEX

    s1 = np.sign(d1[d1 != 0])
    if np.count_nonzero(s1[1:] != s1[:-1]) > spec.osc_count:
        return ShapeClass.OSCILLATORY

    s2 = np.sign(d2[np.abs(d2) > tol])
    if np.count_nonzero(s2[1:] != s2[:-1]) > 0:
        return ShapeClass.SIGN_CHANGING

    return ShapeClass.OTHER


def classify(profile: LandscapeProfile, spec: Optional[ScanSpec] = None) -> ShapeClass:
    return classify_losses(profile.losses, profile.reference_loss, spec)


def sample_parameters(net: Network, samples_per_layer: Sequence[int], seed: int) -> List[Tuple[int, int]]:
    """(layer, flat offset) pairs, uniform without replacement within each layer"""
    if len(samples_per_layer) != len(net.layers):
        raise ValueError(
            f"samples_per_layer has {len(samples_per_layer)} entries for {len(net.layers)} layers"
        )

    rng = np.random.default_rng(seed)
    chosen = []
    for layer, ((start, stop), count) in enumerate(zip(net.layer_offsets(), samples_per_layer)):
        size = min(count, stop - start)
        picks = np.sort(rng.choice(np.arange(start, stop), size=size, replace=False))
        chosen.extend((layer, int(offset)) for offset in picks)
    return chosen


def scan_function(loss_fn: Callable[[np.ndarray], float], reference: np.ndarray,
                  param_ids: Sequence[Tuple[int, int]], spec: ScanSpec) -> List[LandscapeProfile]:
    """Sweep each listed coordinate of `reference` on a private copy"""
    reference = np.asarray(reference, dtype=np.float64)
    reference_loss = loss_fn(reference.copy())

    profiles = []
    for layer, offset in param_ids:
        work = reference.copy()
        grid = sweep_grid(reference[offset], spec.sweep_half_width, spec.n_points)
        losses = np.empty(len(grid))
        with np.errstate(all='ignore'):
            for k, value in enumerate(grid):
                work[offset] = value
                losses[k] = loss_fn(work)

        profile = LandscapeProfile(
            param_id=(layer, offset),
            reference_value=float(reference[offset]),
            sweep_values=grid,
            losses=losses,
            reference_loss=reference_loss
        )
        profile.shape_class = classify(profile, spec)
        profiles.append(profile)

    return profiles


def scan(net: Network, spec: ScanSpec, batch: Batch,
         samples_per_layer: Optional[Sequence[int]] = None) -> List[LandscapeProfile]:
    """Profiles for sampled parameters of `net`; `net` itself is never written"""
    counts = samples_per_layer or spec.samples_per_layer or [10] * len(net.layers)
    param_ids = sample_parameters(net, counts, spec.seed)

    work_net = net.copy()

    def batch_loss(vec: np.ndarray) -> float:
        unflatten(work_net, vec)
        return loss(work_net, batch)

    profiles = []
    for layer in range(len(net.layers)):
        layer_ids = [pid for pid in param_ids if pid[0] == layer]
        logger.info(f"Scanning layer {layer}: {len(layer_ids)} parameters x {spec.n_points} points")
        profiles.extend(scan_function(batch_loss, flatten(net), layer_ids, spec))
    return profiles


def shapes_frame(profiles: Sequence[LandscapeProfile]) -> pd.DataFrame:
    return pd.DataFrame([
        {
            "param_id": f"L{p.param_id[0]}_P{p.param_id[1]}",
            "layer": p.param_id[0],
            "offset": p.param_id[1],
            "reference_value": p.reference_value,
            "reference_loss": p.reference_loss,
            "shape_class": p.shape_class.value,
            "loss_range": p.loss_range
        }
        for p in profiles
    ], columns=["param_id", "layer", "offset", "reference_value", "reference_loss", "shape_class", "loss_range"])


def layer_composition(profiles: Sequence[LandscapeProfile], net: Network) -> pd.DataFrame:
    """Count of each shape class per layer, with the layer's share of all parameters"""
    rows = []
    total = net.n_params
    for layer, spec in enumerate(net.layers):
        classes = [p.shape_class for p in profiles if p.param_id[0] == layer]
        for shape in ShapeClass:
            count = sum(1 for c in classes if c is shape)
            rows.append({
                "layer": layer,
                "shape_class": shape.value,
                "count": count,
                "fraction": count / len(classes) if classes else 0.0,
                "layer_params": spec.n_params,
                "layer_share": spec.n_params / total
            })
    return pd.DataFrame(rows)


class LandscapeScanner:
    """Reference-point training and scanning for one experiment config"""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.spec = config.landscape
        self.seed = config.seeds[0]
        self.logger = logging.getLogger(__name__)

    def reference_batch(self) -> Batch:
        """Standardized training split (or all rows) the sweep is evaluated on"""
        dataset = load_experiment_data(self.config)
        train, test = split_standardize(dataset, self.config.split, seed=self.seed)
        if self.spec.split == "train":
            return train
        return Batch(np.vstack([train.inputs, test.inputs]), np.concatenate([train.labels, test.labels]))

    def train_reference(self, output_dir: str) -> RunRecord:
        """Train the reference point; its checkpoint lands in output_dir"""
        record = run_one(self.config, self.seed, output_dir=output_dir)
        self.logger.info(f"Reference point trained: {record.checkpoint}")
        return record

    def load_reference(self, checkpoint: str) -> Network:
        net = init_network(build_layers(self.config), seed=0)
        return load_into(net, checkpoint)

    def run(self, checkpoint: str) -> Tuple[Network, List[LandscapeProfile]]:
        net = self.load_reference(checkpoint)
        profiles = scan(net, self.spec, self.reference_batch(), self.config.landscape_samples())
        counts = pd.Series([p.shape_class.value for p in profiles]).value_counts().to_dict()
        self.logger.info(f"Scanned {len(profiles)} parameters: {counts}")
        return net, profiles


def history_frame(record: RunRecord) -> pd.DataFrame:
    """Training-loss history of the reference run"""
    return pd.DataFrame({
        "epoch": [m.epoch for m in record.metrics],
        "train_loss": [m.train_loss for m in record.metrics],
        "test_loss": [m.test_loss for m in record.metrics]
    })

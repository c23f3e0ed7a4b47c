import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from config.experiment_config import ExperimentConfig
from core.net import Activation, Batch, LayerSpec, init_network


@pytest.fixture
def iris_layers():
    return [LayerSpec(4, 25, Activation.RELU), LayerSpec(25, 3, Activation.IDENTITY)]


@pytest.fixture
def wine_layers():
    return [LayerSpec(13, 15, Activation.RELU), LayerSpec(15, 3, Activation.IDENTITY)]


@pytest.fixture
def tiny_net():
    layers = [LayerSpec(3, 5, Activation.RELU), LayerSpec(5, 2, Activation.IDENTITY)]
    return init_network(layers, seed=7)


@pytest.fixture
def tiny_batch():
    rng = np.random.default_rng(5)
    return Batch(rng.normal(size=(12, 3)), rng.integers(0, 2, size=12))


@pytest.fixture
def fast_config(tmp_path):
    """Two seeds, a few epochs: enough to exercise the harness quickly"""
    return ExperimentConfig(dataset="iris", epochs=4, seeds=[1, 2], jobs=1,
                            metric3_epochs=[2, 4], early_epochs=2, usage_early_epoch=2,
                            output_dir=str(tmp_path / "run"))


@pytest.fixture
def tiny_csv(tmp_path):
    path = tmp_path / "tiny.csv"
    path.write_text(
        "a,b,label\n"
        "1.0,2.0,x\n"
        "1.5,2.5,y\n"
        "0.5,1.0,x\n"
        "2.0,3.5,y\n"
        "1.2,2.2,x\n",
        encoding="utf-8"
    )
    return path

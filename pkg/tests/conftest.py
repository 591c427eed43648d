import tempfile
from pathlib import Path

import numpy as np
import pytest

from marginclip.config import ExperimentConfig
from marginclip.data import Dataset, generate_synthetic
from marginclip.nn import (
    Activation,
    Conv2D,
    Dense,
    Flatten,
    MaxPool2D,
    Network,
    mlp_network,
    predict,
)


@pytest.fixture
def temp_dir():
    """Create a temporary directory for tests."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def dense_net():
    """Small ReLU MLP: 4 inputs, hidden layers of 6 and 5 units, 3 classes."""
    return mlp_network(4, [6, 5], 3, seed=0)


@pytest.fixture
def leaky_dense_net():
    """Small LeakyReLU MLP with the same geometry as dense_net."""
    return mlp_network(4, [6, 5], 3, activation="leaky_relu", negative_slope=0.1, seed=0)


@pytest.fixture
def conv_net():
    """Conv-pool-dense network on 4x4x2 images with 3 classes."""
    layers = [
        Conv2D(2, 3, 3, padding=1),
        Activation(),
        MaxPool2D(2),
        Flatten(),
        Dense(12, 5),
        Activation(),
        Dense(5, 3),
    ]
    return Network((4, 4, 2), layers, 3).initialize(1)


@pytest.fixture
def tiny_dataset():
    """Synthetic 3-class dataset of 8x8x3 images, 20 samples per class."""
    return generate_synthetic(3, 20, 8, 8, 3, 0.03, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def conv_dataset(conv_net, rng):
    """40 random 4x4x2 images labeled by conv_net itself, so all are classified correctly."""
    images = rng.random((40, 4, 4, 2)).astype(np.float32)
    return Dataset(images, predict(conv_net, images), 3)


@pytest.fixture
def small_config(temp_dir):
    """Desk-scale experiment shrunk to run in a few seconds."""
    return ExperimentConfig.from_dict(
        {
            "data": {
                "classes": 3,
                "height": 8,
                "width": 8,
                "train_per_class": 60,
                "test_per_class": 20,
                "noise_sigma": 0.03,
                "clean_fraction": 0.25,
            },
            "attack": {"mode": "all2one", "trigger": "patch", "poison_rate": 0.1},
            "train": {"epochs": 2, "batch_size": 32},
            "mmac": {
                "t_max": 3,
                "refresh_period": 2,
                "maxima_per_class": 2,
                "ascent_steps": 3,
            },
            "experiment": {"name": "tiny", "output_dir": str(temp_dir / "run")},
        }
    )

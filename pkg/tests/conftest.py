import os
import sys

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from models_losses.mlp import LabeledBatch, MlpModel, init_params
from numkit.rng import RngStream


@pytest.fixture
def rng():
    return RngStream(1234)


@pytest.fixture
def spd_matrix():
    """Fixed 4x4 SPD matrix with known spectrum {1, 2, 3, 5}."""
    q, _ = np.linalg.qr(np.random.default_rng(7).standard_normal((4, 4)))
    return q @ np.diag([1.0, 2.0, 3.0, 5.0]) @ q.T


@pytest.fixture
def tiny_model():
    return MlpModel.build(2, (4,), 3, "tanh")


@pytest.fixture
def tiny_batch():
    gen = np.random.default_rng(3)
    x = gen.standard_normal((12, 2))
    y = np.arange(12) % 3
    return LabeledBatch(x, y, 3)


@pytest.fixture
def tiny_params(tiny_model):
    return init_params(tiny_model, RngStream(5))


@pytest.fixture
def small_train_config():
    """A few-epoch run small enough for unit tests."""
    return {
        "model": {"hidden": [4], "activation": "tanh"},
        "loss": {"kind": "ce"},
        "optimizer": {"kind": "sgd", "lr": 0.1},
        "batch_size": 32,
        "epochs": 4,
        "seed": 0,
        "dataset": {"generator": "gaussian-mixture-2d", "n": 120, "classes": 2, "noise": 1.0, "seed": 0},
        "curvature": {"probes": 8, "power_iters": 30, "tol": 1e-8},
    }

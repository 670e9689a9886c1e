"""
Synthetic 2-D classification tasks with a stratified 70/15/15 split and a shifted (noisier) test split.
"""
import logging
from dataclasses import dataclass

import numpy as np
from sklearn.datasets import make_blobs, make_moons
from sklearn.model_selection import train_test_split

from errors import ValidationError
from models_losses.mlp import LabeledBatch
from numkit.rng import RngStream
from trainer.config import DatasetSpec

logger = logging.getLogger(__name__)

MIXTURE_RADIUS = 2.0


@dataclass(frozen=True)
class DatasetSplits:
    train: LabeledBatch
    val: LabeledBatch
    test: LabeledBatch
    ood: LabeledBatch

    @property
    def num_classes(self) -> int:
        return self.train.num_classes


def _balanced_counts(n: int, classes: int):
    base, extra = divmod(n, classes)
    return [base + (1 if c < extra else 0) for c in range(classes)]


def generate(spec: DatasetSpec, n: int, noise: float, seed: int):
    """(x, y) from the named generator; class sizes differ by at most one."""
    counts = _balanced_counts(n, spec.classes)
    if spec.generator == "gaussian-mixture-2d":
        angles = 2.0 * np.pi * np.arange(spec.classes) / spec.classes
        centers = MIXTURE_RADIUS * np.column_stack([np.cos(angles), np.sin(angles)])
        x, y = make_blobs(n_samples=counts, centers=centers, cluster_std=noise, random_state=seed)
    elif spec.generator == "two-arcs-2d":
        if spec.classes != 2:
            raise ValidationError("two-arcs-2d has exactly 2 classes")
        x, y = make_moons(n_samples=tuple(counts), noise=noise, random_state=seed)
    else:
        raise ValidationError(f"unknown generator {spec.generator!r}")
    return x.astype(np.float64), y.astype(np.int64)


def make_dataset(spec: DatasetSpec) -> DatasetSplits:
    x, y = generate(spec, spec.n, spec.noise, spec.seed)
    x_train, x_rest, y_train, y_rest = train_test_split(x, y, test_size=0.3, stratify=y, random_state=spec.seed)
    x_val, x_test, y_val, y_test = train_test_split(x_rest, y_rest, test_size=0.5, stratify=y_rest,
                                                    random_state=spec.seed)
    # the shifted split shares the generator but never the seed
    ood_seed = RngStream(spec.seed).child(1).next_seed() % (2 ** 32)
    x_ood, y_ood = generate(spec, len(y_test), spec.noise * spec.ood_noise_scale, ood_seed)

    c = spec.classes
    splits = DatasetSplits(LabeledBatch(x_train, y_train, c), LabeledBatch(x_val, y_val, c),
                           LabeledBatch(x_test, y_test, c), LabeledBatch(x_ood, y_ood, c))
    logger.info(f"📊 {spec.generator}: train={len(splits.train)} val={len(splits.val)} "
                f"test={len(splits.test)} shifted={len(splits.ood)}")
    return splits

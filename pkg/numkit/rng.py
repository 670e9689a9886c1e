"""Deterministic random streams (PCG64) and Rademacher probes."""
from dataclasses import dataclass, field

import numpy as np

from errors import ValidationError

ALGORITHM_ID = "PCG64"


@dataclass
class RngStream:
    """
    Single-owner random stream. Identical seeds give identical sequences on every platform
    numpy supports; concurrent work must use ``child`` streams instead of sharing one.
    """
    seed: int
    algorithm_id: str = ALGORITHM_ID
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.algorithm_id != ALGORITHM_ID:
            raise ValidationError(f"unsupported generator {self.algorithm_id!r}; only {ALGORITHM_ID} is available")
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, key: int) -> "RngStream":
        """Independent sub-stream derived from (seed, key)."""
        seq = np.random.SeedSequence(self.seed, spawn_key=(int(key),))
        return RngStream(int(seq.generate_state(1, np.uint64)[0]))

    def rademacher(self, d: int) -> np.ndarray:
        return rademacher(self, d)

    def normal(self, shape) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return self._gen.uniform(low, high, shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size: int, p=None) -> np.ndarray:
        return self._gen.choice(n, size=size, p=p)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def next_seed(self) -> int:
        """Draw a fresh seed, e.g. to label a batch of probes in the run log."""
        return int(self._gen.integers(0, 2 ** 63 - 1))


def rademacher(rng: RngStream, d: int) -> np.ndarray:
    """Vector of i.i.d. +1/-1 entries with equal probability."""
    if d < 1:
        raise ValidationError(f"rademacher needs d >= 1, got {d}")
    return rng.integers(0, 2, size=d).astype(np.float64) * 2.0 - 1.0

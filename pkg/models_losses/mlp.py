"""
Multi-layer perceptron classifier over a flat parameter vector.

Layout: for each layer in order, the weight matrix (w_in x w_out, row-major) followed by the bias (w_out).
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from autodiff import tape as ad
from errors import ValidationError
from numkit.rng import RngStream

logger = logging.getLogger(__name__)

ACTIVATIONS = ("sigmoid", "tanh")


@dataclass(frozen=True)
class LayerSlice:
    name: str
    w_start: int
    w_shape: Tuple[int, int]
    b_start: int
    b_size: int

    @property
    def stop(self) -> int:
        return self.b_start + self.b_size


@dataclass(frozen=True)
class MlpModel:
    """Layer widths (input d, hidden..., classes C) with one activation per hidden layer; softmax output."""
    widths: Tuple[int, ...]
    activations: Tuple[str, ...]

    def __post_init__(self):
        if len(self.widths) < 2 or any(w < 1 for w in self.widths):
            raise ValidationError(f"widths must list at least input and output sizes, got {self.widths}")
        if self.widths[-1] < 2:
            raise ValidationError("a classifier needs at least 2 classes")
        if len(self.activations) != len(self.widths) - 2:
            raise ValidationError(f"expected {len(self.widths) - 2} hidden activations, got {len(self.activations)}")
        for act in self.activations:
            if act not in ACTIVATIONS:
                raise ValidationError(f"unknown activation {act!r}; choose from {ACTIVATIONS}")

    @classmethod
    def build(cls, d: int, hidden: Sequence[int], classes: int, activation: str = "tanh") -> "MlpModel":
        return cls(tuple([d, *hidden, classes]), tuple(activation for _ in hidden))

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def num_classes(self) -> int:
        return self.widths[-1]

    @property
    def layout(self) -> List[LayerSlice]:
        slices, offset = [], 0
        for i, (w_in, w_out) in enumerate(zip(self.widths[:-1], self.widths[1:])):
            b_start = offset + w_in * w_out
            slices.append(LayerSlice(f"layer{i}", offset, (w_in, w_out), b_start, w_out))
            offset = b_start + w_out
        return slices

    @property
    def n_params(self) -> int:
        return sum((w_in + 1) * w_out for w_in, w_out in zip(self.widths[:-1], self.widths[1:]))

    def layout_table(self) -> List[dict]:
        return [{"layer": s.name, "weight_start": s.w_start, "weight_shape": list(s.w_shape),
                 "bias_start": s.b_start, "bias_size": s.b_size} for s in self.layout]


def init_params(model: MlpModel, rng: RngStream) -> np.ndarray:
    """Glorot-normal weights, zero biases."""
    theta = np.zeros(model.n_params)
    for s in model.layout:
        w_in, w_out = s.w_shape
        std = np.sqrt(2.0 / (w_in + w_out))
        theta[s.w_start:s.b_start] = rng.normal(w_in * w_out) * std
    return theta


def softmax(logits):
    """Row-wise softmax; the max shift is a constant so it does not enter the graph."""
    raw = logits.value if isinstance(logits, ad.Node) else np.asarray(logits, dtype=np.float64)
    shift = np.max(raw, axis=1, keepdims=True)
    e = ad.exp(ad.sub(logits, shift))
    return ad.div(e, ad.sum_(e, axis=1, keepdims=True))


def forward_logits(model: MlpModel, params, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ValidationError(f"input width mismatch: model expects {model.input_dim} features, "
                              f"batch has shape {x.shape}")
    n_expected = model.n_params
    n_got = params.shape[0] if isinstance(params, ad.Node) else np.shape(params)[0]
    if n_got != n_expected:
        raise ValidationError(f"parameter vector has {n_got} entries, model needs {n_expected}")

    h = x
    layers = model.layout
    for i, s in enumerate(layers):
        w = ad.reshape(ad.take(params, s.w_start, s.b_start), s.w_shape)
        b = ad.take(params, s.b_start, s.stop)
        h = ad.add(ad.matmul(h, w), b)
        if i < len(layers) - 1:
            h = ad.tanh(h) if model.activations[i] == "tanh" else ad.sigmoid(h)
    return h


def forward_probs(model: MlpModel, params, x):
    """n x C class probabilities p(y|x; θ)."""
    return softmax(forward_logits(model, params, x))


def predict_proba(model: MlpModel, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.asarray(forward_probs(model, np.asarray(params, dtype=np.float64), x))


def param_norm(params: np.ndarray) -> float:
    return float(np.linalg.norm(params))


@dataclass(frozen=True)
class LabeledBatch:
    """Inputs x (n x d), integer labels y in [0, C) and optional soft targets q(y|x) (n x C)."""
    x: np.ndarray
    y: np.ndarray
    num_classes: int
    soft_targets: Optional[np.ndarray] = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise ValidationError(f"batch shapes disagree: x {x.shape}, y {y.shape}")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise ValidationError(f"labels must lie in [0, {self.num_classes})")
        if self.soft_targets is not None:
            q = np.asarray(self.soft_targets, dtype=np.float64)
            if q.shape != (x.shape[0], self.num_classes):
                raise ValidationError(f"soft targets must be {x.shape[0]}x{self.num_classes}, got {q.shape}")
            if np.any(q < 0) or np.max(np.abs(q.sum(axis=1) - 1.0), initial=0.0) > 1e-9:
                raise ValidationError("soft target rows must be stochastic within 1e-9")
            object.__setattr__(self, "soft_targets", q)

    def __len__(self):
        return int(self.y.shape[0])

    @property
    def targets(self) -> np.ndarray:
        if self.soft_targets is not None:
            return self.soft_targets
        return one_hot(self.y, self.num_classes)

    def subset(self, idx) -> "LabeledBatch":
        q = None if self.soft_targets is None else self.soft_targets[idx]
        return LabeledBatch(self.x[idx], self.y[idx], self.num_classes, q)


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), num_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out

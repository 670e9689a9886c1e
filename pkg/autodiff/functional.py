"""
Gradients, Hessian-vector products and dense Hessians of scalar functions of a flat ParamVector.

``f`` always takes a Node (the parameter vector on a fresh tape) and returns a scalar Node built
from ``autodiff.tape`` operations.
"""
import logging
from typing import Callable, Optional, Tuple

import numpy as np

from autodiff.tape import Node, Tape, grad, sum_
from errors import NumericalError, ValidationError

logger = logging.getLogger(__name__)

ScalarFn = Callable[[Node], Node]

MAX_DENSE_DIM = 2000


def _param_vector(theta) -> np.ndarray:
    theta = np.array(theta, dtype=np.float64)
    if theta.ndim != 1:
        raise ValidationError(f"parameters must be a flat vector, got shape {theta.shape}")
    return theta


def _evaluate(f: ScalarFn, theta: np.ndarray) -> Tuple[Tape, Node, Node]:
    tape = Tape()
    x = tape.variable(theta)
    y = f(x)
    if not isinstance(y, Node):
        # f did not touch its argument; wrap so the reverse pass has something to walk
        y = tape.constant(y)
    if y.value.size != 1:
        raise ValidationError(f"f must return a scalar, got shape {y.shape}")
    return tape, x, y


def value_and_gradient(f: ScalarFn, theta) -> Tuple[float, np.ndarray]:
    theta = _param_vector(theta)
    tape, x, y = _evaluate(f, theta)
    if y.index < 0 or not y.requires_grad:
        return float(y.value), np.zeros_like(theta)
    (g,) = grad(y, [x])
    return float(y.value), g.value.copy()


def gradient(f: ScalarFn, theta) -> np.ndarray:
    """∇f(θ) by one reverse pass."""
    return value_and_gradient(f, theta)[1]


def hvp(f: ScalarFn, theta, v) -> np.ndarray:
    """H(θ)·v as the gradient of ⟨∇f(θ), v⟩ with v held constant (reverse over reverse)."""
    theta = _param_vector(theta)
    v = _param_vector(v)
    if v.shape != theta.shape:
        raise ValidationError(f"direction has shape {v.shape}, parameters {theta.shape}")
    tape, x, y = _evaluate(f, theta)
    if not y.requires_grad:
        return np.zeros_like(theta)
    (g,) = grad(y, [x], create_graph=True)
    if not g.requires_grad:
        return np.zeros_like(theta)
    directional = sum_(g * v)
    (hv,) = grad(directional, [x])
    return hv.value.copy()


class HvpOracle:
    """
    The linear map v -> H·v around a fixed parameter point and data batch.

    Built from a function, the gradient graph is recorded once and every call replays only the
    second reverse pass, seeded with v.
    """

    def __init__(self, dim: int, matvec: Callable[[np.ndarray], np.ndarray], label: str = "hvp"):
        if dim < 1:
            raise ValidationError(f"oracle dimension must be positive, got {dim}")
        self.dim = dim
        self._matvec = matvec
        self.label = label
        self.calls = 0

    @classmethod
    def from_function(cls, f: ScalarFn, theta) -> "HvpOracle":
        theta = _param_vector(theta)
        tape, x, y = _evaluate(f, theta)
        g: Optional[Node] = None
        if y.requires_grad:
            (g,) = grad(y, [x], create_graph=True)

        def matvec(v: np.ndarray) -> np.ndarray:
            if g is None or not g.requires_grad:
                return np.zeros_like(theta)
            (hv,) = grad(g, [x], seed=v)
            return hv.value.copy()

        return cls(theta.size, matvec, label="autodiff")

    @classmethod
    def from_matrix(cls, h) -> "HvpOracle":
        h = np.array(h, dtype=np.float64)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValidationError(f"oracle matrix must be square, got shape {h.shape}")
        return cls(h.shape[0], lambda v: h @ v, label="dense")

    def __call__(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.dim,):
            raise ValidationError(f"oracle expects a vector of length {self.dim}, got shape {v.shape}")
        self.calls += 1
        out = self._matvec(v)
        if not np.all(np.isfinite(out)):
            raise NumericalError(f"{self.label} oracle returned non-finite values")
        return out

    def dense(self) -> np.ndarray:
        """Materialise H column by column (small dimensions only)."""
        if self.dim > MAX_DENSE_DIM:
            raise ValidationError(f"dimension {self.dim} exceeds the dense cap {MAX_DENSE_DIM}; "
                                  f"use the oracle's matrix-free estimators instead")
        eye = np.eye(self.dim)
        return np.column_stack([self(eye[:, j]) for j in range(self.dim)])


def exact_hessian(f: ScalarFn, theta) -> np.ndarray:
    """Dense symmetric Hessian; column j is H·e_j, symmetrised as (H + Hᵀ)/2."""
    theta = _param_vector(theta)
    if theta.size > MAX_DENSE_DIM:
        raise ValidationError(f"exact_hessian is capped at dimension {MAX_DENSE_DIM} (got {theta.size}); "
                              f"use HvpOracle with hutchinson_trace / power iteration instead")
    h = HvpOracle.from_function(f, theta).dense()
    norm = float(np.linalg.norm(h))
    asym = float(np.linalg.norm(h - h.T))
    if asym > 1e-8 * max(norm, 1.0):
        logger.warning(f"⚠️ Hessian asymmetry {asym:.3e} exceeds 1e-8 * |H| before symmetrisation")
    return 0.5 * (h + h.T)


# -------------------------------
# Finite-difference oracles
# -------------------------------

def fd_gradient(f: ScalarFn, theta) -> np.ndarray:
    """Central differences with step 1e-5·(1+|θ_i|)."""
    theta = _param_vector(theta)
    out = np.zeros_like(theta)
    for i in range(theta.size):
        h = 1e-5 * (1.0 + abs(theta[i]))
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        out[i] = (_scalar(f, up) - _scalar(f, down)) / (2.0 * h)
    return out


def fd_hvp(f: ScalarFn, theta, v, h: float = 1e-5) -> np.ndarray:
    """Central difference of the gradient along v."""
    theta = _param_vector(theta)
    v = _param_vector(v)
    return (gradient(f, theta + h * v) - gradient(f, theta - h * v)) / (2.0 * h)


def _scalar(f: ScalarFn, theta: np.ndarray) -> float:
    # recorded, so objectives that differentiate internally (trace penalty) still evaluate
    _, _, y = _evaluate(f, theta)
    return float(y.value)

"""One-layer sigmoid network y = σ(θ₀ + θ·x) viewed as a map from parameters to outputs."""
import logging

import numpy as np

from autodiff import tape as ad
from autodiff.functional import gradient
from errors import ValidationError
from numkit.linalg import DEFAULT_RANK_TOL, numeric_rank

logger = logging.getLogger(__name__)


def nn_manifold_jacobian(theta, theta0: float, inputs) -> np.ndarray:
    """Rows (∂y/∂θ₀, ∂y/∂θ_1..d) per input, by reverse-mode autodiff."""
    theta = np.asarray(theta, dtype=np.float64).ravel()
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    d = theta.size
    if inputs.shape[1] != d:
        raise ValidationError(f"inputs must have {d} columns, got shape {inputs.shape}")
    params = np.concatenate([[float(theta0)], theta])
    rows = []
    for x in inputs:
        features = np.concatenate([[1.0], x])
        rows.append(gradient(lambda z: ad.sigmoid(ad.dot(z, features)), params))
    return np.array(rows)


def nn_manifold_jacobian_rank(d: int, theta, theta0: float, inputs, tol: float = DEFAULT_RANK_TOL) -> int:
    """Numeric rank of the m x (d+1) output Jacobian; d+1 for inputs in general position."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if inputs.shape[0] < d + 1:
        raise ValidationError(f"need at least d+1 = {d + 1} inputs, got {inputs.shape[0]}")
    if np.asarray(theta).size != d:
        raise ValidationError(f"theta must have {d} entries")
    rank = numeric_rank(nn_manifold_jacobian(theta, theta0, inputs), tol)
    if rank < d + 1:
        logger.warning(f"⚠️ Jacobian rank {rank} < d+1 = {d + 1}: degenerate parameters or repeated inputs")
    return rank

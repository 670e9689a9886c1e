"""
Scalar contractions of a Hessian: spectral radius, Gelfand sequence, Laplacian (trace),
induced operator norms, Gaussian curvature and the metric trace.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np

from autodiff.functional import MAX_DENSE_DIM, HvpOracle
from curvature.estimators import hutchinson_trace
from errors import ValidationError
from numkit.linalg import as_matrix, det, is_symmetric
from numkit.rng import RngStream

logger = logging.getLogger(__name__)


def spectral_radius(eigenvalues: Sequence[float]) -> float:
    values = np.asarray(eigenvalues, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValidationError("spectral_radius needs at least one eigenvalue")
    return float(np.max(np.abs(values)))


def _square(h) -> np.ndarray:
    h = as_matrix(h)
    if h.shape[0] != h.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {h.shape}")
    return h


@dataclass
class GelfandSequence:
    """Terms ‖H^k‖₁^(1/k) for k = 1..len(terms); truncated when a power overflowed."""
    terms: List[float] = field(default_factory=list)
    truncated: bool = False

    @property
    def last(self) -> float:
        return self.terms[-1]


def spectral_radius_power_limit(h, k_max: int = 64) -> GelfandSequence:
    """Induced 1-norm (max absolute column sum) of successive powers of H."""
    if k_max < 1:
        raise ValidationError(f"k_max must be >= 1, got {k_max}")
    h = _square(h)
    seq = GelfandSequence()
    power = np.eye(h.shape[0])
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, k_max + 1):
            power = power @ h
            norm = float(np.max(np.sum(np.abs(power), axis=0)))
            if not np.isfinite(norm):
                seq.truncated = True
                logger.warning(f"⚠️ ‖H^{k}‖₁ overflowed; Gelfand sequence truncated after {k - 1} terms")
                break
            seq.terms.append(norm ** (1.0 / k))
    return seq


def laplacian(h: Union[HvpOracle, np.ndarray], probes: Optional[int] = None,
              rng: Optional[RngStream] = None) -> float:
    """
    tr(H). Exact for a matrix, or for an oracle small enough to materialise; a Hutchinson
    estimate when ``probes`` is given.
    """
    if isinstance(h, HvpOracle):
        if probes is not None:
            return hutchinson_trace(h, probes, rng or RngStream(0))[0]
        if h.dim > MAX_DENSE_DIM:
            raise ValidationError(f"oracle dimension {h.dim} is too large for an exact trace; pass probes")
        h = h.dense()
    return float(np.trace(_square(h)))


def operator_norm(h, p: Union[int, float, str] = 1) -> float:
    """Induced p-norm for p = 1 (max abs column sum) or p = inf (max abs row sum)."""
    h = _square(h)
    if p in (1, "1"):
        return float(np.max(np.sum(np.abs(h), axis=0)))
    if p in (np.inf, "inf", "Inf"):
        return float(np.max(np.sum(np.abs(h), axis=1)))
    raise ValidationError(f"unsupported operator norm p={p!r}; use 1 or inf")


def gaussian_curvature(h) -> float:
    """det(H), the product of principal curvatures."""
    h = _square(h)
    if not is_symmetric(h, tol=1e-8):
        raise ValidationError("gaussian_curvature expects a symmetric matrix")
    return det(h)


def metric_trace(h, g) -> float:
    """g^{ij} H_ij."""
    h, g = _square(h), _square(g)
    if h.shape != g.shape:
        raise ValidationError(f"Hessian {h.shape} and metric {g.shape} disagree")
    return float(np.trace(np.linalg.solve(g, h)))

"""
Metric fields θ ↦ g(θ) and their first partial derivatives.

Index convention used throughout the geometry package (zero-based):
    dg[k, i, j]     = ∂_k g_ij
    gamma[l, i, j]  = Γ^l_ij          (upper index first, then the two lower ones)
    R[r, i, j, k]   = R^r_ijk
"""
import logging
from dataclasses import dataclass, replace
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from errors import NumericalError, ValidationError
from numkit.linalg import sym_eigen
from numkit.rng import RngStream

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-4
SPHERE_MARGIN = 0.2


@dataclass(frozen=True)
class MetricField:
    name: str
    dim: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    partials: Optional[Callable[[np.ndarray], np.ndarray]] = None
    # per-coordinate (lo, hi) chart bounds for query points; None means unrestricted
    domain: Optional[Tuple[Tuple[float, float], ...]] = None

    def point(self, theta) -> np.ndarray:
        theta = np.array(theta, dtype=np.float64).ravel()
        if theta.shape != (self.dim,):
            raise ValidationError(f"{self.name} metric is {self.dim}-dimensional, got a point of shape {theta.shape}")
        if self.domain is not None:
            for i, (lo, hi) in enumerate(self.domain):
                if not lo <= theta[i] <= hi:
                    raise ValidationError(f"{self.name}: coordinate {i} = {theta[i]} outside the chart [{lo}, {hi}]")
        return theta

    def __call__(self, theta) -> np.ndarray:
        """g(θ), checked symmetric positive definite."""
        theta = np.asarray(theta, dtype=np.float64)
        g = np.array(self.evaluator(theta), dtype=np.float64)
        if g.shape != (self.dim, self.dim) or not np.all(np.isfinite(g)):
            raise NumericalError(f"{self.name} metric returned an invalid matrix at θ={theta.tolist()}")
        if np.max(np.abs(g - g.T)) > 1e-12 * max(1.0, float(np.max(np.abs(g)))):
            raise NumericalError(f"{self.name} metric is not symmetric at θ={theta.tolist()}")
        eigenvalues, _ = sym_eigen(g, tol=1e-12)
        if eigenvalues[0] <= 0.0:
            raise NumericalError(f"{self.name} metric is not positive definite at θ={theta.tolist()} "
                                 f"(min eigenvalue {eigenvalues[0]:.3e})")
        return g

    def inverse(self, theta) -> np.ndarray:
        return np.linalg.inv(self(theta))

    def derivatives(self, theta, h: float = DEFAULT_STEP) -> np.ndarray:
        """dg[k, i, j] = ∂_k g_ij, closed form when available, else Richardson-extrapolated central differences."""
        theta = np.asarray(theta, dtype=np.float64)
        if self.partials is not None:
            return np.array(self.partials(theta), dtype=np.float64)
        return central_difference(self, theta, h)

    def numeric(self) -> "MetricField":
        """Same field with the closed-form partials dropped."""
        return replace(self, partials=None)


def central_difference(fn: Callable[[np.ndarray], np.ndarray], theta: np.ndarray, h: float) -> np.ndarray:
    """
    out[k, ...] = ∂_k fn(θ), central differences at h and h/2 combined by one Richardson step (O(h⁴)).
    """
    if h <= 0:
        raise ValidationError(f"step h must be positive, got {h}")
    d = theta.shape[0]
    slices = []
    for k in range(d):
        e = np.zeros(d)
        e[k] = 1.0

        def diff(step):
            return (np.asarray(fn(theta + step * e)) - np.asarray(fn(theta - step * e))) / (2.0 * step)

        coarse, fine = diff(h), diff(0.5 * h)
        slices.append((4.0 * fine - coarse) / 3.0)
    return np.stack(slices)


# -------------------------------
# Built-in metric fields
# -------------------------------

def euclidean(d: int = 2) -> MetricField:
    return MetricField("euclidean", d, lambda theta: np.eye(d), lambda theta: np.zeros((d, d, d)))


def constant(diag: Sequence[float]) -> MetricField:
    diag = np.asarray(diag, dtype=np.float64)
    d = diag.size
    return MetricField("constant", d, lambda theta: np.diag(diag), lambda theta: np.zeros((d, d, d)))


def sphere() -> MetricField:
    """Round unit sphere in (polar, azimuth) coordinates: diag(1, sin²θ₁)."""

    def g(theta):
        return np.diag([1.0, np.sin(theta[0]) ** 2])

    def dg(theta):
        out = np.zeros((2, 2, 2))
        out[0, 1, 1] = 2.0 * np.sin(theta[0]) * np.cos(theta[0])
        return out

    chart = ((SPHERE_MARGIN, np.pi - SPHERE_MARGIN), (-np.inf, np.inf))
    return MetricField("sphere", 2, g, dg, chart)


def conformal_bump() -> MetricField:
    """diag(1 + θ₁², 1)."""

    def g(theta):
        return np.diag([1.0 + theta[0] ** 2, 1.0])

    def dg(theta):
        out = np.zeros((2, 2, 2))
        out[0, 0, 0] = 2.0 * theta[0]
        return out

    return MetricField("conformal-bump", 2, g, dg)


def random_polynomial_spd(d: int, rng: RngStream, scale: float = 0.5) -> MetricField:
    """g(θ) = P(θ)P(θ)ᵀ + I with P affine in θ, so every entry is a quadratic polynomial."""
    if d < 1:
        raise ValidationError(f"dimension must be >= 1, got {d}")
    base = rng.normal((d, d)) * scale
    slopes = rng.normal((d, d, d)) * scale

    def p(theta):
        return base + np.einsum("k,kab->ab", theta, slopes)

    def g(theta):
        pm = p(theta)
        return pm @ pm.T + np.eye(d)

    def dg(theta):
        pm = p(theta)
        return np.stack([slopes[k] @ pm.T + pm @ slopes[k].T for k in range(d)])

    return MetricField("random-polynomial-spd", d, g, dg)


BUILTIN_METRICS: Dict[str, Callable[..., MetricField]] = {
    "euclidean": euclidean,
    "sphere": sphere,
    "conformal-bump": conformal_bump,
}

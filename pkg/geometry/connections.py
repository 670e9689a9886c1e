"""
Connections on a metric field and the quantities built from them.

Tensors follow the index convention documented in geometry.metrics; every function accepts a
TensorField or a bare array for its connection argument.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from autodiff.functional import exact_hessian, gradient
from errors import ValidationError
from geometry.metrics import DEFAULT_STEP, MetricField, central_difference

logger = logging.getLogger(__name__)

CHRISTOFFEL_ORDER = "upper,lower,lower"
RIEMANN_ORDER = "upper,lower,lower,lower"


@dataclass(frozen=True)
class TensorField:
    """Coefficients of a tensor at one point θ, with the index layout spelled out."""
    name: str
    index_order: str
    coeffs: np.ndarray
    theta: np.ndarray

    def symmetry_residual(self) -> float:
        """max |T^l_ij - T^l_ji| over the last two indices."""
        return float(np.max(np.abs(self.coeffs - np.swapaxes(self.coeffs, -1, -2)), initial=0.0))

    def to_dict(self) -> dict:
        return {"name": self.name, "index_order": self.index_order, "theta": self.theta.tolist(),
                "coeffs": self.coeffs.tolist()}


ConnectionLike = Union[TensorField, np.ndarray]


def _coeffs(gamma: ConnectionLike) -> np.ndarray:
    return gamma.coeffs if isinstance(gamma, TensorField) else np.asarray(gamma, dtype=np.float64)


def _levi_civita(metric: MetricField, theta: np.ndarray, h: float) -> np.ndarray:
    g_inv = np.linalg.inv(metric(theta))
    dg = metric.derivatives(theta, h)
    # lowered[i, j, k] = Γ_ij,k = ½(∂_i g_jk + ∂_j g_ik − ∂_k g_ij)
    lowered = 0.5 * (dg + np.transpose(dg, (1, 0, 2)) - np.transpose(dg, (1, 2, 0)))
    return np.einsum("lk,ijk->lij", g_inv, lowered)


def christoffel(metric: MetricField, theta, h: float = DEFAULT_STEP) -> TensorField:
    """Levi-Civita coefficients Γ^l_ij = ½ g^{lk}(∂_i g_jk + ∂_j g_ik − ∂_k g_ij)."""
    theta = metric.point(theta)
    gamma = _levi_civita(metric, theta, h)
    field = TensorField("christoffel", CHRISTOFFEL_ORDER, gamma, theta)
    asym = field.symmetry_residual()
    if asym > 1e-8:
        logger.warning(f"⚠️ Christoffel symbols not symmetric in the lower indices (residual {asym:.3e})")
    return field


def riemann_tensor(metric: MetricField, theta, h: float = DEFAULT_STEP) -> TensorField:
    """R^r_ijk = ∂_i Γ^r_jk − ∂_j Γ^r_ik + Γ^r_il Γ^l_jk − Γ^r_jl Γ^l_ik."""
    theta = metric.point(theta)
    gamma = _levi_civita(metric, theta, h)
    d_gamma = central_difference(lambda t: _levi_civita(metric, t, h), theta, h)  # [i, r, j, k] = ∂_i Γ^r_jk
    derivative = np.einsum("irjk->rijk", d_gamma) - np.einsum("jrik->rijk", d_gamma)
    quadratic = np.einsum("ril,ljk->rijk", gamma, gamma) - np.einsum("rjl,lik->rijk", gamma, gamma)
    return TensorField("riemann", RIEMANN_ORDER, derivative + quadratic, theta)


def _connection_hessian(f: Callable, theta: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    hess = exact_hessian(f, theta)
    grad = gradient(f, theta)
    return hess - np.einsum("kij,k->ij", gamma, grad)


def covariant_hessian(f: Callable, metric: MetricField, theta, h: float = DEFAULT_STEP) -> np.ndarray:
    """H^f_ij = ∂_i∂_j f − Γ^k_ij ∂_k f with the Levi-Civita connection."""
    theta = metric.point(theta)
    out = _connection_hessian(f, theta, _levi_civita(metric, theta, h))
    return 0.5 * (out + out.T)


def dual_christoffel(metric: MetricField, primal: Optional[ConnectionLike], theta,
                     h: float = DEFAULT_STEP) -> TensorField:
    """
    Solve ∂_k g_ij = Γ_ki,j + Γ*_kj,i for the dual connection:
    Γ*^m_kj = g^{mi}(∂_k g_ij − g_lj Γ^l_ki). ``primal=None`` means Levi-Civita.
    """
    theta = metric.point(theta)
    g = metric(theta)
    gamma = _levi_civita(metric, theta, h) if primal is None else _coeffs(primal)
    if gamma.shape != (metric.dim,) * 3:
        raise ValidationError(f"primal connection must be {metric.dim}x{metric.dim}x{metric.dim}, got {gamma.shape}")
    dg = metric.derivatives(theta, h)
    # lowered_dual[k, j, i] = Γ*_kj,i
    lowered_dual = np.transpose(dg, (0, 2, 1)) - np.einsum("lj,lki->kji", g, gamma)
    dual = np.einsum("mi,kji->mkj", np.linalg.inv(g), lowered_dual)
    return TensorField("dual-christoffel", CHRISTOFFEL_ORDER, dual, theta)


def dual_hessian(f: Callable, metric: MetricField, theta, primal: Optional[ConnectionLike] = None,
                 h: float = DEFAULT_STEP) -> np.ndarray:
    """H*^f_ij = ∂_i∂_j f − Γ*^k_ij ∂_k f; not symmetric for a general primal."""
    dual = dual_christoffel(metric, primal, theta, h)
    return _connection_hessian(f, dual.theta, dual.coeffs)


def metric_compatibility_residual(metric: MetricField, gamma: ConnectionLike, theta,
                                  h: float = DEFAULT_STEP) -> float:
    """max over i,j,k of |∂_k g_ij − Γ^l_ki g_lj − Γ^l_kj g_il|."""
    theta = metric.point(theta)
    g = metric(theta)
    dg = metric.derivatives(theta, h)
    gamma = _coeffs(gamma)
    residual = dg - np.einsum("lki,lj->kij", gamma, g) - np.einsum("lkj,il->kij", gamma, g)
    return float(np.max(np.abs(residual)))


def volume_element(metric: MetricField, theta) -> float:
    """√det g(θ)."""
    g = metric(metric.point(theta))
    return float(np.sqrt(np.linalg.det(g)))


def laplace_beltrami(f: Callable, metric: MetricField, theta, h: float = DEFAULT_STEP) -> float:
    """Δf = (1/√det g) ∂_i(√det g · g^{ij} ∂_j f), divergence by central differences."""
    theta = metric.point(theta)

    def flux(t):
        g = metric(t)
        return np.sqrt(np.linalg.det(g)) * np.linalg.solve(g, gradient(f, t))

    d_flux = central_difference(flux, theta, h)  # [i, j] = ∂_i flux_j
    return float(np.trace(d_flux) / np.sqrt(np.linalg.det(metric(theta))))

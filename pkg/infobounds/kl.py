import numpy as np

from errors import ValidationError
from geometry.families import ParametricFamily
from numkit.linalg import as_matrix


def kl_divergence(family: ParametricFamily, xi1, xi2) -> float:
    """KL(p_ξ1 ‖ p_ξ2); closed form for Bernoulli and Gaussian, quadrature otherwise."""
    return family.kl(xi1, xi2)


def kl_quadratic_approx(fisher, delta) -> float:
    """½ Δξᵀ g Δξ."""
    fisher = as_matrix(fisher)
    delta = np.asarray(delta, dtype=np.float64).ravel()
    if fisher.shape != (delta.size, delta.size):
        raise ValidationError(f"Fisher matrix {fisher.shape} does not match Δξ of length {delta.size}")
    return float(0.5 * delta @ fisher @ delta)
